#include "sgadv/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sgadv/rng.hpp"

namespace sgadv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;
constexpr double kMaxval = 65535.0;

std::string sample_file_name(const ImageDims& dims, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%02zu.%s", index, dims.channels == 1 ? "pgm" : "ppm");
  return buf;
}

std::uint16_t to_u16(double p) {
  return static_cast<std::uint16_t>(std::lround(p * kMaxval));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const fs::path& file) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw std::runtime_error("netpbm: truncated header in " + file.string());
  return tok;
}

int header_int(std::istream& in, const fs::path& file) {
  const std::string tok = header_token(in, file);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("netpbm: bad header field '" + tok + "' in " + file.string());
  }
}

}  // namespace

std::size_t IdentityDataset::total_samples() const {
  std::size_t n = 0;
  for (const auto& id : identities) n += id.samples.size();
  return n;
}

const Identity& IdentityDataset::find(const std::string& id) const {
  for (const auto& ident : identities) {
    if (ident.id == id) return ident;
  }
  throw std::out_of_range("dataset: unknown identity " + id);
}

std::string identity_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id%04d", index);
  return buf;
}

IdentityDataset generate_dataset(const DatasetParams& params) {
  if (params.n_identities < 1) throw std::invalid_argument("generate_dataset: n_identities must be >= 1");
  if (params.samples_per_identity < 2) {
    throw std::invalid_argument("generate_dataset: samples_per_identity must be >= 2, got " +
                                std::to_string(params.samples_per_identity));
  }
  if (!params.dims.valid()) {
    throw std::invalid_argument("generate_dataset: invalid dims " + params.dims.to_string());
  }
  if (!(params.intra_noise_sigma >= 0.0)) {
    throw std::invalid_argument("generate_dataset: intra_noise_sigma must be >= 0");
  }

  IdentityDataset ds;
  ds.image_dims = params.dims;
  ds.generator_seed = params.seed;
  ds.intra_noise_sigma = params.intra_noise_sigma;

  Rng rng(params.seed);
  const std::size_t n = params.dims.size();
  std::vector<double> prototype(n);
  for (int i = 0; i < params.n_identities; ++i) {
    Identity ident{identity_name(i), {}};
    for (auto& p : prototype) p = rng.uniform01();
    for (int s = 0; s < params.samples_per_identity; ++s) {
      std::vector<double> px(n);
      for (std::size_t k = 0; k < n; ++k) {
        px[k] = std::clamp(prototype[k] + params.intra_noise_sigma * rng.normal(), 0.0, 1.0);
      }
      ident.samples.emplace_back(params.dims, std::move(px));
    }
    ds.identities.push_back(std::move(ident));
  }
  return ds;
}

Image quantize16(const Image& image) {
  std::vector<double> px(image.pixels().begin(), image.pixels().end());
  for (auto& p : px) p = static_cast<double>(to_u16(p)) / kMaxval;
  return Image(image.dims(), std::move(px));
}

void write_netpbm16(const Image& image, const fs::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("netpbm: cannot open " + file.string() + " for writing");
  const auto& d = image.dims();
  out << (d.channels == 1 ? "P5" : "P6") << '\n' << d.width << ' ' << d.height << "\n65535\n";
  std::string buf;
  buf.reserve(image.size() * 2);
  for (double p : image.pixels()) {
    const std::uint16_t v = to_u16(p);
    buf.push_back(static_cast<char>(v >> 8));
    buf.push_back(static_cast<char>(v & 0xff));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("netpbm: write failed for " + file.string());
}

Image read_netpbm16(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("netpbm: cannot open " + file.string());
  const std::string magic = header_token(in, file);
  int channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw std::runtime_error("netpbm: unsupported magic '" + magic + "' in " + file.string());
  }
  const int width = header_int(in, file);
  const int height = header_int(in, file);
  const int maxval = header_int(in, file);
  if (width <= 0 || height <= 0) throw std::runtime_error("netpbm: bad size in " + file.string());
  if (maxval != 65535) {
    throw std::runtime_error("netpbm: expected maxval 65535 in " + file.string() + ", got " +
                             std::to_string(maxval));
  }
  const ImageDims dims{width, height, channels};
  std::string raw(dims.size() * 2, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw std::runtime_error("netpbm: truncated pixel data in " + file.string());
  }
  std::vector<double> px(dims.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const auto hi = static_cast<unsigned char>(raw[2 * i]);
    const auto lo = static_cast<unsigned char>(raw[2 * i + 1]);
    px[i] = static_cast<double>((hi << 8) | lo) / kMaxval;
  }
  return Image(dims, std::move(px));
}

void save_dataset(const IdentityDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& dims = dataset.image_dims;

  json ids = json::array();
  for (const auto& ident : dataset.identities) {
    fs::create_directories(dir / ident.id);
    json files = json::array();
    for (std::size_t s = 0; s < ident.samples.size(); ++s) {
      const std::string rel = ident.id + "/" + sample_file_name(dims, s);
      write_netpbm16(ident.samples[s], dir / rel);
      files.push_back(rel);
    }
    ids.push_back({{"id", ident.id}, {"samples", files}});
  }

  const std::size_t per_id = dataset.identities.empty() ? 0 : dataset.identities.front().samples.size();
  json manifest = {
      {"format", "sgadv-dataset"},
      {"version", kManifestVersion},
      {"generator",
       {{"n_identities", dataset.identities.size()},
        {"samples_per_identity", per_id},
        {"intra_noise_sigma", dataset.intra_noise_sigma},
        {"seed", dataset.generator_seed},
        {"prng", std::string(Rng::kAlgorithm)},
        {"seeding", std::string(Rng::kSeeding)},
        {"construction", "prototype ~ U[0,1] per pixel; sample = clamp(prototype + N(0, sigma^2))"}}},
      {"image_dims", {{"width", dims.width}, {"height", dims.height}, {"channels", dims.channels}}},
      {"encoding", dims.channels == 1 ? "PGM P5 maxval 65535" : "PPM P6 maxval 65535"},
      {"identities", ids},
  };
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("save_dataset: cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

IdentityDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_dataset: missing manifest " + manifest_path.string());

  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  IdentityDataset ds;
  try {
    if (manifest.at("version").get<int>() != kManifestVersion) {
      throw std::runtime_error("load_dataset: unsupported manifest version");
    }
    const auto& d = manifest.at("image_dims");
    ds.image_dims = {d.at("width").get<int>(), d.at("height").get<int>(), d.at("channels").get<int>()};
    const auto& g = manifest.at("generator");
    ds.generator_seed = g.at("seed").get<std::uint64_t>();
    ds.intra_noise_sigma = g.at("intra_noise_sigma").get<double>();
    for (const auto& entry : manifest.at("identities")) {
      Identity ident{entry.at("id").get<std::string>(), {}};
      for (const auto& rel : entry.at("samples")) {
        const fs::path file = dir / rel.get<std::string>();
        Image img = read_netpbm16(file);
        if (img.dims() != ds.image_dims) {
          throw std::runtime_error("load_dataset: " + file.string() + " is " + img.dims().to_string() +
                                   " but manifest says " + ds.image_dims.to_string());
        }
        ident.samples.push_back(std::move(img));
      }
      if (ident.samples.size() < 2) {
        throw std::runtime_error("load_dataset: identity " + ident.id + " has fewer than 2 samples");
      }
      ds.identities.push_back(std::move(ident));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: bad manifest field in " + manifest_path.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace sgadv
