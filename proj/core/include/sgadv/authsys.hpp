#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgadv/embedding.hpp"
#include "sgadv/image.hpp"

namespace sgadv {

/// Genuine and imposter dissimilarity populations.
struct ScoreSets {
  std::vector<double> genuine;
  std::vector<double> imposter;
};

struct Calibration {
  double tau = 0.0;
  double eer = 0.0;
};

/// FPR(t): fraction of imposter scores <= t.
double false_positive_rate(std::span<const double> imposter, double t);
/// FNR(t): fraction of genuine scores > t.
double false_negative_rate(std::span<const double> genuine, double t);

/// Equal-error operating point.
///
/// Sweeps every distinct pooled score value t_i in ascending order and
/// tracks D(t) = FPR(t) - FNR(t), a non-decreasing step function. If D is
/// exactly zero on some interval [t_lo, t_hi) the threshold is the midpoint
/// of that gap. Otherwise D changes sign between adjacent sweep points and
/// tau is placed by linear interpolation of D between them; the EER is the
/// equally interpolated FPR (which equals the interpolated FNR there).
///
/// Throws std::invalid_argument if either population is empty.
Calibration calibrate_threshold(const ScoreSets& scores);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// One point below all scores, one per distinct pooled score; ends at (1,1).
std::vector<RocPoint> roc(const ScoreSets& scores);
/// Trapezoidal area under an ROC curve ordered by ascending FPR.
double roc_auc(std::span<const RocPoint> curve);

/// Within-identity pairs (a < b) form the genuine set; an equal number of
/// distinct cross-identity pairs is drawn without replacement from `seed` for
/// the imposter set. `templates[i]` holds the templates of identity i.
ScoreSets benign_scores(const std::vector<std::vector<FeatureVector>>& templates, std::uint64_t seed);

/// Enrollment store with an EER-calibrated dissimilarity threshold.
///
/// Enrollment mutates; once the threshold is set the system is meant to be
/// treated as frozen, and the const members are safe to call concurrently.
class AuthSystem {
 public:
  struct Decision {
    bool accepted = false;
    double score = 0.0;
  };

  AuthSystem(std::shared_ptr<const EmbeddingModel> model, std::string model_ref);

  /// Stores embed(image) under `identity_id`, replacing any earlier template.
  void enroll(const std::string& identity_id, const Image& image);
  void enroll_template(const std::string& identity_id, FeatureVector tmpl);

  /// Accepts iff dissimilarity(embed(probe), template) <= tau.
  Decision verify(const std::string& identity_id, const Image& probe) const;
  Decision verify_template(const std::string& identity_id, const FeatureVector& probe) const;

  /// Requires 0 < tau < 1.
  void set_calibration(const Calibration& cal);
  bool calibrated() const { return calibrated_; }
  double tau() const { return cal_.tau; }
  double eer() const { return cal_.eer; }

  bool enrolled(const std::string& identity_id) const { return templates_.contains(identity_id); }
  const FeatureVector& template_of(const std::string& identity_id) const;
  std::size_t size() const { return templates_.size(); }
  const std::map<std::string, FeatureVector>& templates() const { return templates_; }

  const EmbeddingModel& model() const { return *model_; }
  const std::string& model_ref() const { return model_ref_; }

  /// JSON with model_ref, tau, eer and every template.
  void save(const std::filesystem::path& file) const;
  /// Throws if the stored model_ref does not match `model_ref` or a template
  /// has the wrong dimension.
  static AuthSystem load(const std::filesystem::path& file, std::shared_ptr<const EmbeddingModel> model,
                         const std::string& model_ref);

 private:
  std::shared_ptr<const EmbeddingModel> model_;
  std::string model_ref_;
  std::map<std::string, FeatureVector> templates_;
  Calibration cal_;
  bool calibrated_ = false;
};

}  // namespace sgadv
