#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "sgadv/image.hpp"

namespace sgadv {

/// Unit-norm template produced by an embedding model.
class FeatureVector {
 public:
  static constexpr double kNormTolerance = 1e-6;

  FeatureVector() = default;

  /// Scales `raw` to unit L2 norm. Throws std::domain_error on a zero vector.
  static FeatureVector normalize(std::vector<double> raw);
  /// Wraps an already-normalized vector; throws if its norm is off by more
  /// than kNormTolerance.
  static FeatureVector from_unit(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  FeatureVector operator-() const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  explicit FeatureVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

/// Differentiable feature embedding f(x). Implementations are immutable and
/// safe to call concurrently.
class EmbeddingModel {
 public:
  virtual ~EmbeddingModel() = default;

  virtual ImageDims input_dims() const = 0;
  virtual int feature_dim() const = 0;

  virtual FeatureVector embed(const Image& image) const = 0;

  /// Vector-Jacobian product (df/dx)^T * cograd, including the Jacobian of
  /// the output normalization.
  virtual GradientImage input_gradient(const Image& image, std::span<const double> cograd) const = 0;
};

/// f(x) = normalize(tanh(W x + b)), W ~ N(0, 1/n_pixels) i.i.d. from the
/// seed, b = 0.
class ReferenceEmbedder final : public EmbeddingModel {
 public:
  ReferenceEmbedder(ImageDims dims, int feature_dim, std::uint64_t seed);
  ReferenceEmbedder(ImageDims dims, int feature_dim, std::uint64_t seed,
                    std::vector<double> weights, std::vector<double> bias);

  ImageDims input_dims() const override { return dims_; }
  int feature_dim() const override { return feature_dim_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> bias() const { return bias_; }

  FeatureVector embed(const Image& image) const override;
  GradientImage input_gradient(const Image& image, std::span<const double> cograd) const override;

  /// W x + b, before the tanh.
  std::vector<double> preactivation(const Image& image) const;

  /// Binary layout: "SGADVEMB", u32 version, u64 seed, i32 width, height,
  /// channels, feature_dim, then W (row-major) and b as little-endian f64.
  void save(const std::filesystem::path& file) const;
  static ReferenceEmbedder load(const std::filesystem::path& file);

 private:
  void check_input(const Image& image) const;
  std::vector<double> activations(const Image& image) const;

  ImageDims dims_;
  int feature_dim_;
  std::uint64_t seed_;
  std::vector<double> weights_;  // feature_dim x n_pixels
  std::vector<double> bias_;
};

ReferenceEmbedder make_reference_embedder(ImageDims dims, int feature_dim, std::uint64_t seed);

using ScalarObjective = std::function<double(const Image&)>;

/// Central differences (J(x + h e_i) - J(x - h e_i)) / (2h) for every pixel.
/// Throws std::domain_error if a perturbed pixel would leave [0,1].
GradientImage finite_diff_gradient(const ScalarObjective& objective, const Image& image, double h);

}  // namespace sgadv
