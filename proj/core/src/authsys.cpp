#include "sgadv/authsys.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "sgadv/metrics.hpp"
#include "sgadv/rng.hpp"

namespace sgadv {

using nlohmann::json;

namespace {

struct SweepPoint {
  double t;
  std::size_t imp_le;  // imposter scores <= t
  std::size_t gen_gt;  // genuine scores > t
};

void require_scores(const ScoreSets& scores, const char* what) {
  if (scores.genuine.empty() || scores.imposter.empty()) {
    throw std::invalid_argument(std::string(what) + ": genuine and imposter sets must be non-empty");
  }
}

std::vector<SweepPoint> sweep(const ScoreSets& scores) {
  std::vector<double> gen(scores.genuine), imp(scores.imposter);
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> pooled(gen);
  pooled.insert(pooled.end(), imp.begin(), imp.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  std::vector<SweepPoint> pts;
  pts.reserve(pooled.size());
  std::size_t gi = 0, ii = 0;
  for (double t : pooled) {
    while (gi < gen.size() && gen[gi] <= t) ++gi;
    while (ii < imp.size() && imp[ii] <= t) ++ii;
    pts.push_back({t, ii, gen.size() - gi});
  }
  return pts;
}

}  // namespace

double false_positive_rate(std::span<const double> imposter, double t) {
  if (imposter.empty()) return 0.0;
  const auto n = std::count_if(imposter.begin(), imposter.end(), [t](double s) { return s <= t; });
  return static_cast<double>(n) / static_cast<double>(imposter.size());
}

double false_negative_rate(std::span<const double> genuine, double t) {
  if (genuine.empty()) return 0.0;
  const auto n = std::count_if(genuine.begin(), genuine.end(), [t](double s) { return s > t; });
  return static_cast<double>(n) / static_cast<double>(genuine.size());
}

Calibration calibrate_threshold(const ScoreSets& scores) {
  require_scores(scores, "calibrate_threshold");
  const auto pts = sweep(scores);
  const auto n_gen = static_cast<double>(scores.genuine.size());
  const auto n_imp = static_cast<double>(scores.imposter.size());
  const auto ng = scores.genuine.size();
  const auto ni = scores.imposter.size();

  // Sign of FPR - FNR in exact integer arithmetic: imp_le/ni vs gen_gt/ng.
  auto sign = [&](const SweepPoint& p) {
    const auto lhs = p.imp_le * ng;
    const auto rhs = p.gen_gt * ni;
    return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
  };
  auto fpr = [&](const SweepPoint& p) { return static_cast<double>(p.imp_le) / n_imp; };
  auto fnr = [&](const SweepPoint& p) { return static_cast<double>(p.gen_gt) / n_gen; };

  std::size_t i = 0;
  while (sign(pts[i]) < 0) ++i;  // terminates: the last point has FPR = 1, FNR = 0

  if (sign(pts[i]) == 0) {
    std::size_t j = i + 1;
    while (j < pts.size() && sign(pts[j]) == 0) ++j;
    // The last point always has D > 0 unless both populations are degenerate
    // at a single value; fall back to the gap's left edge then.
    const double tau = j < pts.size() ? 0.5 * (pts[i].t + pts[j].t) : pts[i].t;
    return {tau, fpr(pts[i])};
  }
  if (i == 0) return {pts[0].t, 0.5 * (fpr(pts[0]) + fnr(pts[0]))};

  const SweepPoint& lo = pts[i - 1];
  const SweepPoint& hi = pts[i];
  const double d_lo = fpr(lo) - fnr(lo);
  const double d_hi = fpr(hi) - fnr(hi);
  const double frac = -d_lo / (d_hi - d_lo);
  return {lo.t + frac * (hi.t - lo.t), fpr(lo) + frac * (fpr(hi) - fpr(lo))};
}

std::vector<RocPoint> roc(const ScoreSets& scores) {
  require_scores(scores, "roc");
  const auto pts = sweep(scores);
  const auto n_gen = static_cast<double>(scores.genuine.size());
  const auto n_imp = static_cast<double>(scores.imposter.size());
  std::vector<RocPoint> curve;
  curve.reserve(pts.size() + 1);
  curve.push_back({0.0, 0.0});
  for (const auto& p : pts) {
    curve.push_back({static_cast<double>(p.imp_le) / n_imp, 1.0 - static_cast<double>(p.gen_gt) / n_gen});
  }
  return curve;
}

double roc_auc(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  }
  return area;
}

ScoreSets benign_scores(const std::vector<std::vector<FeatureVector>>& templates, std::uint64_t seed) {
  ScoreSets out;
  struct Ref {
    std::size_t identity, sample;
  };
  std::vector<Ref> all;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const auto& t = templates[i];
    for (std::size_t a = 0; a < t.size(); ++a) {
      all.push_back({i, a});
      for (std::size_t b = a + 1; b < t.size(); ++b) out.genuine.push_back(dissimilarity(t[a], t[b]));
    }
  }

  const std::size_t n = all.size();
  const std::size_t total_pairs = n * (n - (n > 0 ? 1 : 0)) / 2;
  const std::size_t cross_pairs = total_pairs - out.genuine.size();
  auto score = [&](const Ref& u, const Ref& v) {
    return dissimilarity(templates[u.identity][u.sample], templates[v.identity][v.sample]);
  };

  if (out.genuine.size() >= cross_pairs) {
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        if (all[u].identity != all[v].identity) out.imposter.push_back(score(all[u], all[v]));
      }
    }
    return out;
  }

  Rng rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  while (out.imposter.size() < out.genuine.size()) {
    auto u = static_cast<std::size_t>(rng.below(n));
    auto v = static_cast<std::size_t>(rng.below(n));
    if (all[u].identity == all[v].identity) continue;
    if (u > v) std::swap(u, v);
    if (!seen.insert({u, v}).second) continue;
    out.imposter.push_back(score(all[u], all[v]));
  }
  return out;
}

AuthSystem::AuthSystem(std::shared_ptr<const EmbeddingModel> model, std::string model_ref)
    : model_(std::move(model)), model_ref_(std::move(model_ref)) {
  if (!model_) throw std::invalid_argument("AuthSystem: null model");
}

void AuthSystem::enroll(const std::string& identity_id, const Image& image) {
  require_same_dims(image.dims(), model_->input_dims(), "enroll");
  templates_.insert_or_assign(identity_id, model_->embed(image));
}

void AuthSystem::enroll_template(const std::string& identity_id, FeatureVector tmpl) {
  if (tmpl.dim() != static_cast<std::size_t>(model_->feature_dim())) {
    throw std::invalid_argument("enroll_template: template dimension mismatch");
  }
  templates_.insert_or_assign(identity_id, std::move(tmpl));
}

const FeatureVector& AuthSystem::template_of(const std::string& identity_id) const {
  const auto it = templates_.find(identity_id);
  if (it == templates_.end()) throw std::out_of_range("AuthSystem: unknown identity " + identity_id);
  return it->second;
}

AuthSystem::Decision AuthSystem::verify_template(const std::string& identity_id,
                                                 const FeatureVector& probe) const {
  if (!calibrated_) throw std::logic_error("AuthSystem: verify before calibration");
  const double score = dissimilarity(probe, template_of(identity_id));
  return {score <= cal_.tau, score};
}

AuthSystem::Decision AuthSystem::verify(const std::string& identity_id, const Image& probe) const {
  template_of(identity_id);  // unknown ids fail before paying for the embedding
  return verify_template(identity_id, model_->embed(probe));
}

void AuthSystem::set_calibration(const Calibration& cal) {
  if (!(cal.tau > 0.0 && cal.tau < 1.0)) {
    throw std::invalid_argument("AuthSystem: tau must lie in (0,1), got " + std::to_string(cal.tau));
  }
  cal_ = cal;
  calibrated_ = true;
}

void AuthSystem::save(const std::filesystem::path& file) const {
  json tmpls = json::object();
  for (const auto& [id, fv] : templates_) {
    tmpls[id] = std::vector<double>(fv.values().begin(), fv.values().end());
  }
  json j = {
      {"format", "sgadv-authsys"},
      {"version", 1},
      {"model_ref", model_ref_},
      {"feature_dim", model_->feature_dim()},
      {"calibrated", calibrated_},
      {"tau", cal_.tau},
      {"eer", cal_.eer},
      {"templates", tmpls},
  };
  std::ofstream out(file);
  if (!out) throw std::runtime_error("AuthSystem: cannot write " + file.string());
  out << j.dump(2) << '\n';
}

AuthSystem AuthSystem::load(const std::filesystem::path& file, std::shared_ptr<const EmbeddingModel> model,
                            const std::string& model_ref) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("AuthSystem: cannot open " + file.string());
  json j;
  try {
    in >> j;
    if (j.at("model_ref").get<std::string>() != model_ref) {
      throw std::runtime_error("AuthSystem: " + file.string() + " was built for model '" +
                               j.at("model_ref").get<std::string>() + "', not '" + model_ref + "'");
    }
    AuthSystem sys(std::move(model), model_ref);
    for (const auto& [id, values] : j.at("templates").items()) {
      sys.enroll_template(id, FeatureVector::from_unit(values.get<std::vector<double>>()));
    }
    if (j.at("calibrated").get<bool>()) {
      sys.set_calibration({j.at("tau").get<double>(), j.at("eer").get<double>()});
    }
    return sys;
  } catch (const json::exception& e) {
    throw std::runtime_error("AuthSystem: malformed " + file.string() + ": " + e.what());
  }
}

}  // namespace sgadv
