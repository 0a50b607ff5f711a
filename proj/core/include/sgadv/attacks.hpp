#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgadv/embedding.hpp"
#include "sgadv/image.hpp"

namespace sgadv {

enum class Objective { Sgadv, Cbce };
enum class StopReason { MaxSteps, Converged, Settled, OneStep };

std::string_view to_string(Objective o);
std::string_view to_string(StopReason r);
Objective parse_objective(std::string_view s);
StopReason parse_stop_reason(std::string_view s);

struct AttackConfig {
  double epsilon = 0.03;    // L-inf budget, pixel units
  double alpha = 0.001;     // step size, pixel units
  int t_max = 1000;
  double tau_conv = 1e-4;
  std::uint64_t seed = 0;
  Objective objective = Objective::Sgadv;
  double cbce_tau = 0.5;    // only read for Objective::Cbce

  /// Iterative attacks additionally need t_max >= epsilon / alpha so the
  /// perturbation can reach the border of the ball.
  void validate(bool iterative) const;

  static AttackConfig fgsm_defaults();   // eps 0.03, C-BCE
  static AttackConfig pgd_defaults();    // eps 0.03, alpha 0.001, t_max 40, C-BCE
  static AttackConfig sgadv_defaults();  // eps 0.03, alpha 0.001, t_max 1000, tau_conv 1e-4
};

struct AttackResult {
  Image adversarial;
  /// J(x^t) for t = 0..steps_taken; entry 0 is the initial point.
  std::vector<double> loss_trace;
  /// dissimilarity(f(x^t), f(target)), aligned with loss_trace.
  std::vector<double> dissimilarity_trace;
  /// ||x^{t+1} - x^t||_inf for t = 0..steps_taken-1.
  std::vector<double> step_change;
  int steps_taken = 0;
  StopReason stop_reason = StopReason::MaxSteps;
  double final_dissimilarity = 0.0;
  int best_step = 0;
  double best_loss = 0.0;
};

/// The last five loss deltas.
class StopState {
 public:
  static constexpr std::size_t kWindow = 5;

  void push(double delta);
  std::size_t size() const { return count_; }
  bool full() const { return count_ == kWindow; }
  /// Held deltas, oldest first.
  std::vector<double> deltas() const;

 private:
  std::array<double, kWindow> buf_{};
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

/// MaxSteps if t == t_max; otherwise nothing until five deltas are held;
/// then Converged if every |delta| <= tau_conv, else Settled if at least two
/// held deltas are <= 0.
std::optional<StopReason> check_stop(const StopState& state, int t, int t_max, double tau_conv);

/// Similarity objective: the dissimilarity itself.
double sgadv_loss(const FeatureVector& f_adv, const FeatureVector& f_target);
/// dJ/df_adv with f_adv treated as a free vector: -f_target / 2.
std::vector<double> sgadv_loss_cograd(const FeatureVector& f_adv, const FeatureVector& f_target);

/// -log(min(1 - d, 1 - tau) / (1 - tau)), log argument floored at 1e-12.
/// Zero whenever d <= tau.
double cbce_loss(const FeatureVector& f_adv, const FeatureVector& f_target, double tau);
/// Zero for d <= tau (the flat side is taken at the kink); otherwise
/// -f_target / (2 (1 - d)).
std::vector<double> cbce_loss_cograd(const FeatureVector& f_adv, const FeatureVector& f_target, double tau);

double objective_loss(const AttackConfig& cfg, const FeatureVector& f_adv, const FeatureVector& f_target);
std::vector<double> objective_cograd(const AttackConfig& cfg, const FeatureVector& f_adv,
                                     const FeatureVector& f_target);

/// x' = clamp01(x - eps * sign(grad J)), one step from the source.
AttackResult fgsm_attack(const EmbeddingModel& model, const Image& source, const Image& target,
                         const AttackConfig& cfg);

/// Uniform random start in the ball, then exactly t_max signed descent steps,
/// each projected onto [x - eps, x + eps] intersected with [0,1].
AttackResult pgd_attack(const EmbeddingModel& model, const Image& source, const Image& target,
                        const AttackConfig& cfg);

/// Same start and step as pgd_attack on the similarity objective, halted by
/// check_stop after every step. Returns the last iterate; best_step and
/// best_loss record the lowest loss seen.
AttackResult sgadv_attack(const EmbeddingModel& model, const Image& source, const Image& target,
                          const AttackConfig& cfg);

/// True iff ||adv - source||_inf <= eps + 1e-9 and all pixels lie in [0,1].
bool within_budget(const Image& adversarial, const Image& source, double epsilon);

}  // namespace sgadv
