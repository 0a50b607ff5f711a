#pragma once

#include <span>
#include <string>
#include <vector>

#include "sgadv/authsys.hpp"
#include "sgadv/embedding.hpp"
#include "sgadv/image.hpp"

namespace sgadv {

/// (1 - cos_sim(a, b)) / 2, clamped to [0,1]: 0 for identical directions,
/// 1 for antipodal ones. Throws on dimension mismatch or a zero vector.
double dissimilarity(std::span<const double> a, std::span<const double> b);
double dissimilarity(const FeatureVector& a, const FeatureVector& b);

double linf_distance(const Image& a, const Image& b);

struct SsimOptions {
  int window = 8;               // uniform square window, stride 1
  double dynamic_range = 1.0;   // L
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean local SSIM over every window position; multi-channel images are
/// averaged over channels. Local statistics use population (1/N) moments.
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {});

/// One adversarial probe scored against one or more enrollments of the
/// target identity.
struct AttackAttempt {
  Image adversarial;
  std::vector<std::string> enrollments;
};

/// Fraction of `attempt.enrollments` that accept the probe.
double attempt_success(const AttackAttempt& attempt, const AuthSystem& system);
/// Mean of attempt_success over all attempts.
double asr(std::span<const AttackAttempt> attempts, const AuthSystem& system);

/// Aggregate row for one technique.
struct MetricReport {
  std::size_t n_examples = 0;
  double asr_white = 0.0;
  double asr_gray = 0.0;
  double mean_dissimilarity = 0.0;
  double median_dissimilarity = 0.0;
  double mean_ssim = 0.0;
  double mean_linf = 0.0;
};

double median(std::vector<double> values);

}  // namespace sgadv
