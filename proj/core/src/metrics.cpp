#include "sgadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgadv {

double dissimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("dissimilarity: dimension mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw std::domain_error("dissimilarity: zero vector");
  const double cos_sim = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(0.5 * (1.0 - cos_sim), 0.0, 1.0);
}

double dissimilarity(const FeatureVector& a, const FeatureVector& b) {
  return dissimilarity(a.values(), b.values());
}

double linf_distance(const Image& a, const Image& b) {
  require_same_dims(a.dims(), b.dims(), "linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace {

// Summed-area table with a zero border: sat[(y+1)*(w+1) + (x+1)].
class SummedArea {
 public:
  SummedArea(int w, int h) : w_(w), h_(h), sat_(static_cast<std::size_t>(w + 1) * (h + 1), 0.0) {}

  template <typename F>
  void build(F value_at) {
    for (int y = 0; y < h_; ++y) {
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += value_at(x, y);
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  double box(int x0, int y0, int size) const {
    return at(x0 + size, y0 + size) - at(x0, y0 + size) - at(x0 + size, y0) + at(x0, y0);
  }

 private:
  double& at(int x, int y) { return sat_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  double at(int x, int y) const { return sat_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }

  int w_, h_;
  std::vector<double> sat_;
};

}  // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& opts) {
  require_same_dims(a.dims(), b.dims(), "ssim");
  const auto& d = a.dims();
  const int win = opts.window;
  if (win < 1) throw std::invalid_argument("ssim: window must be >= 1");
  if (d.width < win || d.height < win) {
    throw std::invalid_argument("ssim: image " + d.to_string() + " smaller than the " + std::to_string(win) +
                                "x" + std::to_string(win) + " window");
  }
  const double c1 = (opts.k1 * opts.dynamic_range) * (opts.k1 * opts.dynamic_range);
  const double c2 = (opts.k2 * opts.dynamic_range) * (opts.k2 * opts.dynamic_range);
  const double inv_n = 1.0 / static_cast<double>(win * win);

  double total = 0.0;
  for (int c = 0; c < d.channels; ++c) {
    SummedArea sa(d.width, d.height), sb(d.width, d.height), saa(d.width, d.height),
        sbb(d.width, d.height), sab(d.width, d.height);
    sa.build([&](int x, int y) { return a.at(x, y, c); });
    sb.build([&](int x, int y) { return b.at(x, y, c); });
    saa.build([&](int x, int y) { return a.at(x, y, c) * a.at(x, y, c); });
    sbb.build([&](int x, int y) { return b.at(x, y, c) * b.at(x, y, c); });
    sab.build([&](int x, int y) { return a.at(x, y, c) * b.at(x, y, c); });

    double channel_sum = 0.0;
    for (int y = 0; y + win <= d.height; ++y) {
      for (int x = 0; x + win <= d.width; ++x) {
        const double mu_a = sa.box(x, y, win) * inv_n;
        const double mu_b = sb.box(x, y, win) * inv_n;
        const double var_a = saa.box(x, y, win) * inv_n - mu_a * mu_a;
        const double var_b = sbb.box(x, y, win) * inv_n - mu_b * mu_b;
        const double cov = sab.box(x, y, win) * inv_n - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
        const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        channel_sum += num / den;
      }
    }
    const int positions = (d.width - win + 1) * (d.height - win + 1);
    total += channel_sum / positions;
  }
  return total / d.channels;
}

double attempt_success(const AttackAttempt& attempt, const AuthSystem& system) {
  if (attempt.enrollments.empty()) throw std::invalid_argument("asr: attempt with no enrollments");
  const FeatureVector probe = system.model().embed(attempt.adversarial);
  std::size_t accepted = 0;
  for (const auto& id : attempt.enrollments) {
    if (system.verify_template(id, probe).accepted) ++accepted;
  }
  return static_cast<double>(accepted) / static_cast<double>(attempt.enrollments.size());
}

double asr(std::span<const AttackAttempt> attempts, const AuthSystem& system) {
  if (attempts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& a : attempts) sum += attempt_success(a, system);
  return sum / static_cast<double>(attempts.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace sgadv
