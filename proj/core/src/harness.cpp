#include "sgadv/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "sgadv/rng.hpp"

namespace sgadv {

using nlohmann::json;

std::string_view to_string(Technique t) {
  switch (t) {
    case Technique::FgsmCbce: return "FGSM-CBCE";
    case Technique::PgdCbce: return "PGD-CBCE";
    case Technique::Sgadv: return "SGADV";
  }
  return "?";
}

std::string_view to_string(Scenario s) { return s == Scenario::S1 ? "S1" : "S2"; }

Technique parse_technique(std::string_view s) {
  for (auto t : {Technique::FgsmCbce, Technique::PgdCbce, Technique::Sgadv}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown technique '" + std::string(s) + "' (expected FGSM-CBCE, PGD-CBCE or SGADV)");
}

namespace {

AttackConfig default_attack(Technique t) {
  switch (t) {
    case Technique::FgsmCbce: return AttackConfig::fgsm_defaults();
    case Technique::PgdCbce: return AttackConfig::pgd_defaults();
    case Technique::Sgadv: return AttackConfig::sgadv_defaults();
  }
  return {};
}

std::vector<TechniqueConfig> default_techniques() {
  std::vector<TechniqueConfig> out;
  for (auto t : {Technique::FgsmCbce, Technique::PgdCbce, Technique::Sgadv}) out.push_back({t, default_attack(t)});
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig c;
  c.techniques = default_techniques();
  return c;
}

ExperimentConfig ExperimentConfig::paper_profile() {
  ExperimentConfig c = desk_defaults();
  c.dataset.n_identities = 158;
  c.dataset.samples_per_identity = 10;
  c.dataset.dims = {160, 160, 3};
  c.feature_dim = 512;
  return c;
}

const TechniqueConfig* ExperimentConfig::find(Technique t) const {
  for (const auto& tc : techniques) {
    if (tc.technique == t) return &tc;
  }
  return nullptr;
}

namespace {

void require_known_keys(const json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: malformed JSON: ") + e.what());
  }
  require_known_keys(j, {"profile", "seed", "dataset", "embedder", "techniques", "attacks", "scenarios", "output_dir",
                         "workers", "write_traces"},
                     "the top level");
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  try {
    const auto profile = j.value("profile", std::string("desk"));
    if (profile == "paper") {
      c = ExperimentConfig::paper_profile();
    } else if (profile != "desk") {
      throw std::invalid_argument("config: unknown profile '" + profile + "'");
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      require_known_keys(d, {"n_identities", "samples_per_identity", "width", "height", "channels",
                             "intra_noise_sigma", "seed", "path"},
                         "dataset");
      c.dataset.n_identities = d.value("n_identities", c.dataset.n_identities);
      c.dataset.samples_per_identity = d.value("samples_per_identity", c.dataset.samples_per_identity);
      c.dataset.dims.width = d.value("width", c.dataset.dims.width);
      c.dataset.dims.height = d.value("height", c.dataset.dims.height);
      c.dataset.dims.channels = d.value("channels", c.dataset.dims.channels);
      c.dataset.intra_noise_sigma = d.value("intra_noise_sigma", c.dataset.intra_noise_sigma);
      c.dataset.seed = d.value("seed", c.dataset.seed);
      if (d.contains("path")) c.dataset_path = d["path"].get<std::string>();
    }
    if (j.contains("embedder")) {
      require_known_keys(j["embedder"], {"feature_dim", "seed"}, "embedder");
      c.feature_dim = j["embedder"].value("feature_dim", c.feature_dim);
      c.embedder_seed = j["embedder"].value("seed", c.embedder_seed);
    }
    if (j.contains("techniques")) {
      c.techniques.clear();
      for (const auto& name : j["techniques"]) {
        const Technique t = parse_technique(name.get<std::string>());
        c.techniques.push_back({t, default_attack(t)});
      }
    }
    if (j.contains("attacks")) {
      for (const auto& [name, a] : j["attacks"].items()) {
        const Technique t = parse_technique(name);
        require_known_keys(a, {"epsilon", "alpha", "t_max", "tau_conv"}, "attacks." + name);
        auto it = std::find_if(c.techniques.begin(), c.techniques.end(),
                               [t](const TechniqueConfig& tc) { return tc.technique == t; });
        if (it == c.techniques.end()) continue;
        auto& ac = it->attack;
        ac.epsilon = a.value("epsilon", ac.epsilon);
        ac.alpha = a.value("alpha", ac.alpha);
        ac.t_max = a.value("t_max", ac.t_max);
        ac.tau_conv = a.value("tau_conv", ac.tau_conv);
      }
    }
    if (j.contains("scenarios")) {
      c.s1 = c.s2 = false;
      for (const auto& s : j["scenarios"]) {
        const auto name = s.get<std::string>();
        if (name == "S1") {
          c.s1 = true;
        } else if (name == "S2") {
          c.s2 = true;
        } else {
          throw std::invalid_argument("config: unknown scenario '" + name + "'");
        }
      }
    }
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    c.workers = j.value("workers", c.workers);
    c.write_traces = j.value("write_traces", c.write_traces);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: bad field: ") + e.what());
  }
  if (c.workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (c.techniques.empty()) throw std::invalid_argument("config: no techniques selected");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("config: cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json attacks = json::object();
  json names = json::array();
  for (const auto& tc : c.techniques) {
    const auto& a = tc.attack;
    json entry = {{"epsilon", a.epsilon}};
    if (tc.technique != Technique::FgsmCbce) {
      entry["alpha"] = a.alpha;
      entry["t_max"] = a.t_max;
    }
    if (tc.technique == Technique::Sgadv) entry["tau_conv"] = a.tau_conv;
    attacks[std::string(to_string(tc.technique))] = entry;
    names.push_back(std::string(to_string(tc.technique)));
  }
  json scenarios = json::array();
  if (c.s1) scenarios.push_back("S1");
  if (c.s2) scenarios.push_back("S2");
  json dataset = {
      {"n_identities", c.dataset.n_identities},
      {"samples_per_identity", c.dataset.samples_per_identity},
      {"width", c.dataset.dims.width},
      {"height", c.dataset.dims.height},
      {"channels", c.dataset.dims.channels},
      {"intra_noise_sigma", c.dataset.intra_noise_sigma},
      {"seed", c.dataset.seed},
  };
  if (c.dataset_path) dataset["path"] = c.dataset_path->string();
  json j = {
      {"seed", c.seed},
      {"dataset", dataset},
      {"embedder", {{"feature_dim", c.feature_dim}, {"seed", c.embedder_seed}}},
      {"techniques", names},
      {"attacks", attacks},
      {"scenarios", scenarios},
      {"output_dir", c.output_dir.string()},
      {"workers", c.workers},
      {"write_traces", c.write_traces},
  };
  return j.dump(2) + "\n";
}

std::string enrollment_key(const std::string& identity, int sample) {
  return identity + "#" + std::to_string(sample);
}

std::string model_ref(const ReferenceEmbedder& model) {
  return "reference-embedder/seed=" + std::to_string(model.seed()) + "/" + model.input_dims().to_string() +
         "/d" + std::to_string(model.feature_dim());
}

Testbed build_testbed(const ExperimentConfig& cfg) {
  IdentityDataset ds = cfg.dataset_path ? load_dataset(*cfg.dataset_path) : generate_dataset(cfg.dataset);
  return build_testbed(cfg, std::move(ds));
}

Testbed build_testbed(const ExperimentConfig& cfg, IdentityDataset dataset) {
  auto model = std::make_shared<const ReferenceEmbedder>(dataset.image_dims, cfg.feature_dim, cfg.embedder_seed);
  std::vector<std::vector<FeatureVector>> templates;
  AuthSystem system(model, model_ref(*model));
  for (const auto& ident : dataset.identities) {
    std::vector<FeatureVector> row;
    for (std::size_t s = 0; s < ident.samples.size(); ++s) {
      row.push_back(model->embed(ident.samples[s]));
      system.enroll_template(enrollment_key(ident.id, static_cast<int>(s)), row.back());
    }
    templates.push_back(std::move(row));
  }
  ScoreSets benign = benign_scores(templates, derive_seed(cfg.seed, {"imposter-pairs"}));
  system.set_calibration(calibrate_threshold(benign));
  return Testbed{std::move(dataset), std::move(model), std::move(templates), std::move(benign), std::move(system)};
}

std::vector<AttackInstance> plan_instances(const IdentityDataset& dataset, std::uint64_t seed) {
  struct Ref {
    int identity, sample;
  };
  std::vector<Ref> pool;
  for (std::size_t i = 0; i < dataset.identities.size(); ++i) {
    for (std::size_t s = 0; s < dataset.identities[i].samples.size(); ++s) {
      pool.push_back({static_cast<int>(i), static_cast<int>(s)});
    }
  }
  if (dataset.identities.size() < 2) throw std::invalid_argument("plan_instances: need at least two identities");

  Rng rng(derive_seed(seed, {"source-pairing"}));
  const auto perm = rng.permutation(pool.size());
  std::vector<AttackInstance> out;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < dataset.identities.size(); ++i) {
    for (std::size_t k = 0; k < dataset.identities[i].samples.size(); ++k) {
      while (pool[perm[cursor % pool.size()]].identity == static_cast<int>(i)) ++cursor;
      const Ref& src = pool[perm[cursor % pool.size()]];
      ++cursor;
      out.push_back({static_cast<int>(i), static_cast<int>(k), src.identity, src.sample});
    }
  }
  return out;
}

std::uint64_t example_seed(std::uint64_t global_seed, const std::string& identity, int fold, Technique t) {
  return derive_seed(global_seed, {identity, std::to_string(fold), to_string(t)});
}

namespace {

AttackResult run_attack(Technique t, const EmbeddingModel& model, const Image& source, const Image& target,
                        const AttackConfig& cfg) {
  switch (t) {
    case Technique::FgsmCbce: return fgsm_attack(model, source, target, cfg);
    case Technique::PgdCbce: return pgd_attack(model, source, target, cfg);
    case Technique::Sgadv: return sgadv_attack(model, source, target, cfg);
  }
  throw std::logic_error("unreachable");
}

// Once the iterate enters the acceptance region the C-BCE gradient is zero,
// so no later step may move it.
bool absorbing_region_holds(const AttackResult& r, double tau) {
  for (std::size_t t = 0; t < r.step_change.size(); ++t) {
    if (r.dissimilarity_trace[t] <= tau) {
      for (std::size_t u = t; u < r.step_change.size(); ++u) {
        if (r.step_change[u] != 0.0) return false;
      }
      return true;
    }
  }
  return true;
}

struct Job {
  const TechniqueConfig* tc;
  const AttackInstance* inst;
};

}  // namespace

BenchResult run_bench(const ExperimentConfig& cfg, const Testbed& bed) {
  BenchResult result;
  result.calibration = {bed.system.tau(), bed.system.eer()};
  result.benign = bed.benign;
  result.s1 = cfg.s1;
  result.s2 = cfg.s2;

  const auto instances = plan_instances(bed.dataset, cfg.seed);
  std::vector<Job> jobs;
  for (const auto& tc : cfg.techniques) {
    for (const auto& inst : instances) jobs.push_back({&tc, &inst});
  }
  result.records.resize(jobs.size());
  std::vector<std::string> job_violation(jobs.size());

  const double tau = bed.system.tau();
  auto work = [&](std::size_t j) {
    const auto& [tc, inst] = jobs[j];
    const auto& target_id = bed.dataset.identities[inst->identity];
    const auto& source_id = bed.dataset.identities[inst->source_identity];
    const Image& target = target_id.samples[inst->fold];
    const Image& source = source_id.samples[inst->source_sample];

    AttackConfig ac = tc->attack;
    ac.seed = example_seed(cfg.seed, target_id.id, inst->fold, tc->technique);
    ac.cbce_tau = tau;
    if (tc->technique == Technique::Sgadv) ac.objective = Objective::Sgadv;
    else ac.objective = Objective::Cbce;

    const auto t0 = std::chrono::steady_clock::now();
    AttackResult r = run_attack(tc->technique, *bed.model, source, target, ac);
    const auto t1 = std::chrono::steady_clock::now();

    ExampleRecord& rec = result.records[j];
    rec.technique = tc->technique;
    rec.identity = target_id.id;
    rec.fold = inst->fold;
    rec.source_identity = source_id.id;
    rec.source_sample = inst->source_sample;
    rec.seed = ac.seed;
    rec.steps = r.steps_taken;
    rec.stop_reason = r.stop_reason;
    rec.best_step = r.best_step;
    rec.best_loss = r.best_loss;
    rec.final_loss = r.loss_trace.back();
    rec.target_dissimilarity = r.final_dissimilarity;
    rec.ssim = ssim(r.adversarial, source);
    rec.linf = linf_distance(r.adversarial, source);
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();

    const FeatureVector probe = bed.model->embed(r.adversarial);
    if (cfg.s1) {
      const auto d = bed.system.verify_template(enrollment_key(target_id.id, inst->fold), probe);
      rec.has_white = true;
      rec.white_score = d.score;
      rec.white_accepted = d.accepted;
    }
    if (cfg.s2) {
      rec.has_gray = true;
      for (int k = 0; k < static_cast<int>(target_id.samples.size()); ++k) {
        if (k == inst->fold) continue;  // the attacked image is never an enrollment in S2
        const auto d = bed.system.verify_template(enrollment_key(target_id.id, k), probe);
        rec.gray_scores.push_back(d.score);
        rec.gray_accepted += d.accepted ? 1 : 0;
      }
      rec.gray_total = static_cast<int>(rec.gray_scores.size());
      if (rec.gray_total != static_cast<int>(target_id.samples.size()) - 1) {
        job_violation[j] = "S2 enrollment set for " + rec.identity + " fold " + std::to_string(rec.fold) +
                           " has the wrong size";
      }
    }

    std::string tag = std::string(to_string(rec.technique)) + " " + rec.identity + " fold " + std::to_string(rec.fold);
    if (!within_budget(r.adversarial, source, ac.epsilon)) {
      job_violation[j] = "budget violated: " + tag;
    } else if (ac.objective == Objective::Cbce && !absorbing_region_holds(r, tau)) {
      job_violation[j] = "C-BCE iterate moved inside the acceptance region: " + tag;
    }
    rec.loss_trace = std::move(r.loss_trace);
    rec.dissimilarity_trace = std::move(r.dissimilarity_trace);
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min<std::size_t>(cfg.workers, jobs.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n_workers);
  auto worker = [&](std::size_t w) {
    try {
      for (std::size_t j = next++; j < jobs.size(); j = next++) work(j);
    } catch (...) {
      errors[w] = std::current_exception();
      next = jobs.size();
    }
  };
  if (n_workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker, w);
    for (auto& th : threads) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& v : job_violation) {
    if (!v.empty()) result.violations.push_back(std::move(v));
  }
  return result;
}

std::vector<TechniqueSummary> summarize(const std::vector<ExampleRecord>& records, bool s1, bool s2) {
  std::vector<TechniqueSummary> out;
  for (auto t : {Technique::FgsmCbce, Technique::PgdCbce, Technique::Sgadv}) {
    std::vector<const ExampleRecord*> rows;
    for (const auto& r : records) {
      if (r.technique == t) rows.push_back(&r);
    }
    if (rows.empty()) continue;

    TechniqueSummary s;
    s.technique = t;
    auto& m = s.metrics;
    m.n_examples = rows.size();
    std::vector<double> dis;
    double white = 0.0, gray = 0.0, ssim_sum = 0.0, linf_sum = 0.0, dis_sum = 0.0, secs = 0.0;
    int max_fold = 0;
    for (const auto* r : rows) {
      white += r->white_accepted ? 1.0 : 0.0;
      gray += r->gray_fraction();
      ssim_sum += r->ssim;
      linf_sum += r->linf;
      dis_sum += r->target_dissimilarity;
      dis.push_back(r->target_dissimilarity);
      secs += r->seconds;
      max_fold = std::max(max_fold, r->fold);
    }
    const auto n = static_cast<double>(rows.size());
    m.asr_white = s1 ? white / n : 0.0;
    m.asr_gray = s2 ? gray / n : 0.0;
    m.mean_ssim = ssim_sum / n;
    m.mean_linf = linf_sum / n;
    m.mean_dissimilarity = dis_sum / n;
    m.median_dissimilarity = median(std::move(dis));
    s.mean_seconds = secs / n;
    if (s2) {
      std::vector<double> fold_sum(max_fold + 1, 0.0);
      std::vector<int> fold_n(max_fold + 1, 0);
      for (const auto* r : rows) {
        fold_sum[r->fold] += r->gray_fraction();
        ++fold_n[r->fold];
      }
      for (int k = 0; k <= max_fold; ++k) s.per_fold_gray_asr.push_back(fold_n[k] ? fold_sum[k] / fold_n[k] : 0.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

ScenarioResult run_s1(const ExperimentConfig& cfg, const Testbed& bed) {
  ExperimentConfig c = cfg;
  c.s1 = true;
  c.s2 = false;
  BenchResult r = run_bench(c, bed);
  if (!r.violations.empty()) throw std::runtime_error("run_s1: " + r.violations.front());
  ScenarioResult out;
  out.scenario = Scenario::S1;
  out.techniques = summarize(r.records, true, false);
  out.examples = std::move(r.records);
  return out;
}

ScenarioResult run_s2(const ExperimentConfig& cfg, const Testbed& bed) {
  for (const auto& ident : bed.dataset.identities) {
    if (ident.samples.size() < 2) throw std::invalid_argument("run_s2: identity " + ident.id + " has < 2 samples");
  }
  ExperimentConfig c = cfg;
  c.s1 = false;
  c.s2 = true;
  BenchResult r = run_bench(c, bed);
  if (!r.violations.empty()) throw std::runtime_error("run_s2: " + r.violations.front());
  ScenarioResult out;
  out.scenario = Scenario::S2;
  out.techniques = summarize(r.records, false, true);
  out.examples = std::move(r.records);
  return out;
}

double predicted_gray_success(double ell, double tau) {
  if (!(tau > 0.0) || !(ell >= 0.0)) throw std::invalid_argument("predicted_gray_success: need tau > 0, ell >= 0");
  return tau / (ell + tau);
}

GapReport validate_probability_gap(const BenchResult& result) {
  if (!result.s2) throw std::logic_error("validate_probability_gap: the bench did not run S2");
  GapReport rep;
  rep.tau = result.calibration.tau;
  for (const auto& s : summarize(result.records, result.s1, true)) {
    std::vector<double> dis;
    for (const auto& r : result.records) {
      if (r.technique == s.technique) dis.push_back(r.target_dissimilarity);
    }
    GapRow row;
    row.technique = s.technique;
    row.ell = median(std::move(dis));
    row.predicted = predicted_gray_success(row.ell, rep.tau);
    row.observed = s.metrics.asr_gray;
    rep.rows.push_back(row);
  }
  return rep;
}

ScoreSets attacked_scores(const BenchResult& result, Technique t, Scenario s) {
  ScoreSets out;
  out.genuine = result.benign.genuine;
  for (const auto& r : result.records) {
    if (r.technique != t) continue;
    if (s == Scenario::S1 && r.has_white) out.imposter.push_back(r.white_score);
    if (s == Scenario::S2 && r.has_gray) out.imposter.insert(out.imposter.end(), r.gray_scores.begin(), r.gray_scores.end());
  }
  return out;
}

}  // namespace sgadv
