#include "sgadv/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sgadv/metrics.hpp"
#include "sgadv/rng.hpp"

namespace sgadv {

namespace {

constexpr double kLogFloor = 1e-12;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_same_feature_dim(const FeatureVector& a, const FeatureVector& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument(std::string(what) + ": feature dimension mismatch " + std::to_string(a.dim()) +
                                " vs " + std::to_string(b.dim()));
  }
}

void require_cbce_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("C-BCE: tau must lie in (0,1), got " + std::to_string(tau));
  }
}

// Shared state for the iterative attacks.
class Iterate {
 public:
  Iterate(const EmbeddingModel& model, const Image& source, const Image& target, const AttackConfig& cfg)
      : model_(model), source_(source), cfg_(cfg), f_target_(model.embed(target)) {
    require_same_dims(source.dims(), target.dims(), "attack source/target");
    const auto src = source.pixels();
    lo_.resize(src.size());
    hi_.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      lo_[i] = std::max(src[i] - cfg.epsilon, 0.0);
      hi_[i] = std::min(src[i] + cfg.epsilon, 1.0);
    }
  }

  void start_at(std::vector<double> pixels) {
    x_ = Image(source_.dims(), std::move(pixels));
    record();
  }

  void random_start() {
    Rng rng(cfg_.seed);
    const auto src = source_.pixels();
    std::vector<double> px(src.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = std::clamp(src[i] + rng.uniform(-cfg_.epsilon, cfg_.epsilon), 0.0, 1.0);
    }
    start_at(std::move(px));
  }

  // x <- Proj(x - step * sign(grad J)); `project` selects the eps-ball
  // clip around the source, otherwise only the [0,1] box is applied.
  void signed_step(double step, bool project) {
    const auto cograd = objective_cograd(cfg_, f_x_, f_target_);
    const GradientImage g = model_.input_gradient(x_, cograd);
    std::vector<double> next(x_.pixels().begin(), x_.pixels().end());
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      double v = next[i] - step * sign(g.values[i]);
      v = project ? std::clamp(v, lo_[i], hi_[i]) : std::clamp(v, 0.0, 1.0);
      change = std::max(change, std::abs(v - next[i]));
      next[i] = v;
    }
    result_.step_change.push_back(change);
    x_ = Image(source_.dims(), std::move(next));
    ++result_.steps_taken;
    record();
  }

  double last_delta() const {
    const auto& t = result_.loss_trace;
    return t[t.size() - 2] - t.back();
  }

  AttackResult finish(StopReason reason) {
    result_.stop_reason = reason;
    result_.final_dissimilarity = result_.dissimilarity_trace.back();
    result_.adversarial = std::move(x_);
    return std::move(result_);
  }

 private:
  void record() {
    f_x_ = model_.embed(x_);
    const double loss = objective_loss(cfg_, f_x_, f_target_);
    if (result_.loss_trace.empty() || loss < result_.best_loss) {
      result_.best_loss = loss;
      result_.best_step = result_.steps_taken;
    }
    result_.loss_trace.push_back(loss);
    result_.dissimilarity_trace.push_back(dissimilarity(f_x_, f_target_));
  }

  const EmbeddingModel& model_;
  const Image& source_;
  const AttackConfig& cfg_;
  FeatureVector f_target_;
  std::vector<double> lo_, hi_;
  Image x_;
  FeatureVector f_x_;
  AttackResult result_;
};

}  // namespace

std::string_view to_string(Objective o) {
  return o == Objective::Sgadv ? "SGADV" : "CBCE";
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxSteps: return "MaxSteps";
    case StopReason::Converged: return "Converged";
    case StopReason::Settled: return "Settled";
    case StopReason::OneStep: return "OneStep";
  }
  return "?";
}

Objective parse_objective(std::string_view s) {
  if (s == "SGADV") return Objective::Sgadv;
  if (s == "CBCE" || s == "C-BCE") return Objective::Cbce;
  throw std::invalid_argument("unknown objective '" + std::string(s) + "'");
}

StopReason parse_stop_reason(std::string_view s) {
  for (auto r : {StopReason::MaxSteps, StopReason::Converged, StopReason::Settled, StopReason::OneStep}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown stop reason '" + std::string(s) + "'");
}

void AttackConfig::validate(bool iterative) const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
  if (objective == Objective::Cbce) require_cbce_tau(cbce_tau);
  if (!iterative) return;
  if (!(alpha > 0.0)) throw std::invalid_argument("attack: alpha must be > 0");
  if (!(tau_conv >= 0.0)) throw std::invalid_argument("attack: tau_conv must be >= 0");
  // Small slack: 0.03 / 0.001 is not exactly 30 in binary floating point.
  if (t_max < 1 || static_cast<double>(t_max) < epsilon / alpha * (1.0 - 1e-9)) {
    throw std::invalid_argument("attack: t_max = " + std::to_string(t_max) + " < epsilon / alpha = " +
                                std::to_string(epsilon / alpha));
  }
}

AttackConfig AttackConfig::fgsm_defaults() {
  AttackConfig c;
  c.t_max = 1;
  c.objective = Objective::Cbce;
  return c;
}

AttackConfig AttackConfig::pgd_defaults() {
  AttackConfig c;
  c.t_max = 40;
  c.objective = Objective::Cbce;
  return c;
}

AttackConfig AttackConfig::sgadv_defaults() { return AttackConfig{}; }

void StopState::push(double delta) {
  buf_[head_] = delta;
  head_ = (head_ + 1) % kWindow;
  count_ = std::min(count_ + 1, kWindow);
}

std::vector<double> StopState::deltas() const {
  std::vector<double> out;
  out.reserve(count_);
  const std::size_t start = (head_ + kWindow - count_) % kWindow;
  for (std::size_t i = 0; i < count_; ++i) out.push_back(buf_[(start + i) % kWindow]);
  return out;
}

std::optional<StopReason> check_stop(const StopState& state, int t, int t_max, double tau_conv) {
  if (t >= t_max) return StopReason::MaxSteps;
  if (!state.full()) return std::nullopt;
  const auto s = state.deltas();
  if (std::all_of(s.begin(), s.end(), [tau_conv](double d) { return std::abs(d) <= tau_conv; })) {
    return StopReason::Converged;
  }
  if (std::count_if(s.begin(), s.end(), [](double d) { return d <= 0.0; }) >= 2) {
    return StopReason::Settled;
  }
  return std::nullopt;
}

double sgadv_loss(const FeatureVector& f_adv, const FeatureVector& f_target) {
  require_same_feature_dim(f_adv, f_target, "sgadv_loss");
  return dissimilarity(f_adv, f_target);
}

std::vector<double> sgadv_loss_cograd(const FeatureVector& f_adv, const FeatureVector& f_target) {
  require_same_feature_dim(f_adv, f_target, "sgadv_loss_cograd");
  std::vector<double> g(f_target.values().begin(), f_target.values().end());
  for (auto& v : g) v *= -0.5;
  return g;
}

double cbce_loss(const FeatureVector& f_adv, const FeatureVector& f_target, double tau) {
  require_cbce_tau(tau);
  require_same_feature_dim(f_adv, f_target, "cbce_loss");
  const double d = dissimilarity(f_adv, f_target);
  const double p = std::max(std::min(1.0 - d, 1.0 - tau) / (1.0 - tau), kLogFloor);
  return std::max(-std::log(p), 0.0);
}

std::vector<double> cbce_loss_cograd(const FeatureVector& f_adv, const FeatureVector& f_target, double tau) {
  require_cbce_tau(tau);
  require_same_feature_dim(f_adv, f_target, "cbce_loss_cograd");
  const double d = dissimilarity(f_adv, f_target);
  std::vector<double> g(f_target.dim(), 0.0);
  if (d <= tau) return g;
  const double scale = -0.5 / std::max(1.0 - d, kLogFloor * (1.0 - tau));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * f_target[i];
  return g;
}

double objective_loss(const AttackConfig& cfg, const FeatureVector& f_adv, const FeatureVector& f_target) {
  return cfg.objective == Objective::Sgadv ? sgadv_loss(f_adv, f_target)
                                           : cbce_loss(f_adv, f_target, cfg.cbce_tau);
}

std::vector<double> objective_cograd(const AttackConfig& cfg, const FeatureVector& f_adv,
                                     const FeatureVector& f_target) {
  return cfg.objective == Objective::Sgadv ? sgadv_loss_cograd(f_adv, f_target)
                                           : cbce_loss_cograd(f_adv, f_target, cfg.cbce_tau);
}

AttackResult fgsm_attack(const EmbeddingModel& model, const Image& source, const Image& target,
                         const AttackConfig& cfg) {
  cfg.validate(false);
  Iterate it(model, source, target, cfg);
  it.start_at(std::vector<double>(source.pixels().begin(), source.pixels().end()));
  it.signed_step(cfg.epsilon, false);
  return it.finish(StopReason::OneStep);
}

AttackResult pgd_attack(const EmbeddingModel& model, const Image& source, const Image& target,
                        const AttackConfig& cfg) {
  cfg.validate(true);
  Iterate it(model, source, target, cfg);
  it.random_start();
  for (int t = 0; t < cfg.t_max; ++t) it.signed_step(cfg.alpha, true);
  return it.finish(StopReason::MaxSteps);
}

AttackResult sgadv_attack(const EmbeddingModel& model, const Image& source, const Image& target,
                          const AttackConfig& cfg) {
  if (cfg.objective != Objective::Sgadv) {
    throw std::invalid_argument("sgadv_attack: config objective must be SGADV");
  }
  cfg.validate(true);
  Iterate it(model, source, target, cfg);
  it.random_start();
  StopState stop;
  for (int t = 0;; ++t) {
    it.signed_step(cfg.alpha, true);
    stop.push(it.last_delta());
    if (const auto reason = check_stop(stop, t + 1, cfg.t_max, cfg.tau_conv)) return it.finish(*reason);
  }
}

bool within_budget(const Image& adversarial, const Image& source, double epsilon) {
  if (adversarial.dims() != source.dims()) return false;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const double v = adversarial[i];
    if (!(v >= 0.0 && v <= 1.0)) return false;
    if (!(std::abs(v - source[i]) <= epsilon + 1e-9)) return false;
  }
  return true;
}

}  // namespace sgadv
