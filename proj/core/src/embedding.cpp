#include "sgadv/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sgadv/rng.hpp"

namespace sgadv {

static_assert(std::endian::native == std::endian::little,
              "model files are written as raw little-endian doubles");

namespace {

constexpr char kMagic[8] = {'S', 'G', 'A', 'D', 'V', 'E', 'M', 'B'};
constexpr std::uint32_t kModelVersion = 1;

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw std::runtime_error("model: truncated file " + file.string());
  return v;
}

}  // namespace

FeatureVector FeatureVector::normalize(std::vector<double> raw) {
  const double n = norm2(raw);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::domain_error("feature vector: cannot normalize a zero or non-finite vector");
  }
  for (auto& x : raw) x /= n;
  return FeatureVector(std::move(raw));
}

FeatureVector FeatureVector::from_unit(std::vector<double> values) {
  const double n = norm2(values);
  if (!(std::abs(n - 1.0) <= kNormTolerance)) {
    throw std::invalid_argument("feature vector: norm " + std::to_string(n) + " is not 1");
  }
  return FeatureVector(std::move(values));
}

FeatureVector FeatureVector::operator-() const {
  std::vector<double> v(values_);
  for (auto& x : v) x = -x;
  return FeatureVector(std::move(v));
}

ReferenceEmbedder::ReferenceEmbedder(ImageDims dims, int feature_dim, std::uint64_t seed)
    : dims_(dims), feature_dim_(feature_dim), seed_(seed) {
  if (!dims_.valid()) throw std::invalid_argument("embedder: invalid dims " + dims_.to_string());
  if (feature_dim_ < 2) throw std::invalid_argument("embedder: feature_dim must be >= 2");
  const std::size_t n = dims_.size();
  const double scale = std::sqrt(1.0 / static_cast<double>(n));
  Rng rng(seed);
  weights_.resize(static_cast<std::size_t>(feature_dim_) * n);
  for (auto& w : weights_) w = scale * rng.normal();
  bias_.assign(static_cast<std::size_t>(feature_dim_), 0.0);
}

ReferenceEmbedder::ReferenceEmbedder(ImageDims dims, int feature_dim, std::uint64_t seed,
                                     std::vector<double> weights, std::vector<double> bias)
    : dims_(dims), feature_dim_(feature_dim), seed_(seed),
      weights_(std::move(weights)), bias_(std::move(bias)) {
  if (!dims_.valid()) throw std::invalid_argument("embedder: invalid dims " + dims_.to_string());
  if (feature_dim_ < 2) throw std::invalid_argument("embedder: feature_dim must be >= 2");
  if (weights_.size() != static_cast<std::size_t>(feature_dim_) * dims_.size() ||
      bias_.size() != static_cast<std::size_t>(feature_dim_)) {
    throw std::invalid_argument("embedder: parameter sizes do not match dims");
  }
}

void ReferenceEmbedder::check_input(const Image& image) const {
  require_same_dims(image.dims(), dims_, "embedder input");
}

std::vector<double> ReferenceEmbedder::preactivation(const Image& image) const {
  check_input(image);
  const std::size_t n = dims_.size();
  const auto x = image.pixels();
  std::vector<double> z(static_cast<std::size_t>(feature_dim_));
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double* row = weights_.data() + k * n;
    double s = bias_[k];
    for (std::size_t i = 0; i < n; ++i) s += row[i] * x[i];
    z[k] = s;
  }
  return z;
}

std::vector<double> ReferenceEmbedder::activations(const Image& image) const {
  auto a = preactivation(image);
  for (auto& v : a) v = std::tanh(v);
  return a;
}

FeatureVector ReferenceEmbedder::embed(const Image& image) const {
  return FeatureVector::normalize(activations(image));
}

GradientImage ReferenceEmbedder::input_gradient(const Image& image, std::span<const double> cograd) const {
  if (cograd.size() != static_cast<std::size_t>(feature_dim_)) {
    throw std::invalid_argument("input_gradient: cograd has length " + std::to_string(cograd.size()) +
                                ", expected " + std::to_string(feature_dim_));
  }
  const auto a = activations(image);
  const double r = norm2(a);
  if (!(r > 0.0)) throw std::domain_error("input_gradient: zero activation, embedding undefined");

  // f = a / r;  d f / d a = (I - f f^T) / r;  d a / d z = 1 - a^2.
  double f_dot_c = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) f_dot_c += (a[k] / r) * cograd[k];
  std::vector<double> gz(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double ga = (cograd[k] - (a[k] / r) * f_dot_c) / r;
    gz[k] = ga * (1.0 - a[k] * a[k]);
  }

  const std::size_t n = dims_.size();
  GradientImage g{dims_, std::vector<double>(n, 0.0)};
  for (std::size_t k = 0; k < gz.size(); ++k) {
    if (gz[k] == 0.0) continue;
    const double* row = weights_.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) g.values[i] += gz[k] * row[i];
  }
  return g;
}

void ReferenceEmbedder::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("model: cannot open " + file.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kModelVersion);
  write_pod(out, seed_);
  write_pod<std::int32_t>(out, dims_.width);
  write_pod<std::int32_t>(out, dims_.height);
  write_pod<std::int32_t>(out, dims_.channels);
  write_pod<std::int32_t>(out, feature_dim_);
  out.write(reinterpret_cast<const char*>(weights_.data()),
            static_cast<std::streamsize>(weights_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(bias_.data()),
            static_cast<std::streamsize>(bias_.size() * sizeof(double)));
  if (!out) throw std::runtime_error("model: write failed for " + file.string());
}

ReferenceEmbedder ReferenceEmbedder::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("model: cannot open " + file.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error("model: bad magic in " + file.string());
  }
  const auto version = read_pod<std::uint32_t>(in, file);
  if (version != kModelVersion) {
    throw std::runtime_error("model: unsupported version " + std::to_string(version) + " in " + file.string());
  }
  const auto seed = read_pod<std::uint64_t>(in, file);
  ImageDims dims;
  dims.width = read_pod<std::int32_t>(in, file);
  dims.height = read_pod<std::int32_t>(in, file);
  dims.channels = read_pod<std::int32_t>(in, file);
  const int feature_dim = read_pod<std::int32_t>(in, file);
  if (!dims.valid() || feature_dim < 2) throw std::runtime_error("model: bad header in " + file.string());

  std::vector<double> w(static_cast<std::size_t>(feature_dim) * dims.size());
  std::vector<double> b(static_cast<std::size_t>(feature_dim));
  const auto wbytes = static_cast<std::streamsize>(w.size() * sizeof(double));
  const auto bbytes = static_cast<std::streamsize>(b.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(w.data()), wbytes);
  if (in.gcount() != wbytes) throw std::runtime_error("model: truncated weights in " + file.string());
  in.read(reinterpret_cast<char*>(b.data()), bbytes);
  if (in.gcount() != bbytes) throw std::runtime_error("model: truncated bias in " + file.string());
  return ReferenceEmbedder(dims, feature_dim, seed, std::move(w), std::move(b));
}

ReferenceEmbedder make_reference_embedder(ImageDims dims, int feature_dim, std::uint64_t seed) {
  return ReferenceEmbedder(dims, feature_dim, seed);
}

GradientImage finite_diff_gradient(const ScalarObjective& objective, const Image& image, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be > 0");
  std::vector<double> work(image.pixels().begin(), image.pixels().end());
  GradientImage g{image.dims(), std::vector<double>(work.size(), 0.0)};
  for (std::size_t i = 0; i < work.size(); ++i) {
    const double x = work[i];
    if (x - h < 0.0 || x + h > 1.0) {
      throw std::domain_error("finite_diff_gradient: pixel " + std::to_string(i) +
                              " within h of the [0,1] boundary");
    }
    work[i] = x + h;
    const double up = objective(Image(image.dims(), work));
    work[i] = x - h;
    const double down = objective(Image(image.dims(), work));
    work[i] = x;
    g.values[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace sgadv
