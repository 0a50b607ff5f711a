#pragma once

#include <cmath>
#include <vector>

#include "sgadv/embedding.hpp"
#include "sgadv/harness.hpp"
#include "sgadv/image.hpp"
#include "sgadv/rng.hpp"

namespace sgadv::testing {

inline Image random_image(ImageDims dims, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> px(dims.size());
  for (auto& p : px) p = rng.uniform(lo, hi);
  return Image(dims, std::move(px));
}

inline std::vector<double> random_gaussian(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

inline FeatureVector random_unit(std::size_t n, Rng& rng) {
  return FeatureVector::normalize(random_gaussian(n, rng));
}

// Unit vector at angle theta from e_0 in the (e_0, e_1) plane.
inline FeatureVector planar(double theta, std::size_t dim = 2) {
  std::vector<double> v(dim, 0.0);
  v[0] = std::cos(theta);
  v[1] = std::sin(theta);
  return FeatureVector::normalize(std::move(v));
}

// Angle whose unit vector has dissimilarity d to e_0.
inline double angle_for(double d) { return std::acos(1.0 - 2.0 * d); }

// Small, fast testbed: 6 identities x 3 samples of 12x12x1.
inline ExperimentConfig tiny_config() {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  c.dataset.n_identities = 6;
  c.dataset.samples_per_identity = 3;
  c.dataset.dims = {12, 12, 1};
  c.feature_dim = 8;
  c.write_traces = false;
  for (auto& tc : c.techniques) {
    if (tc.technique == Technique::Sgadv) tc.attack.t_max = 200;
  }
  return c;
}

// Returns fixed features and a fixed input gradient.
class ConstantModel final : public EmbeddingModel {
 public:
  ConstantModel(ImageDims dims, FeatureVector out, double grad_value)
      : dims_(dims), out_(std::move(out)), grad_(grad_value) {}

  ImageDims input_dims() const override { return dims_; }
  int feature_dim() const override { return static_cast<int>(out_.dim()); }
  FeatureVector embed(const Image&) const override { return out_; }
  GradientImage input_gradient(const Image&, std::span<const double>) const override {
    return {dims_, std::vector<double>(dims_.size(), grad_)};
  }

 private:
  ImageDims dims_;
  FeatureVector out_;
  double grad_;
};

}  // namespace sgadv::testing
