// sgadv: command line front end for the synthetic verification testbed.
//
//   sgadv config     --profile desk|paper [--out config.json]
//   sgadv gen-data   [--config c.json] --out DIR
//   sgadv calibrate  [--config c.json] [--data DIR] --out DIR
//   sgadv attack     [--config c.json] --technique T --target ID:K --source ID:K [--trace FILE]
//   sgadv bench      [--config c.json] [--data DIR] [--out DIR] [--workers N]
//   sgadv report     --dir DIR [--check]
//
// Exit codes: 0 ok, 1 usage or runtime error, 3 invariant violation or a
// summary that does not match its per-example rows.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sgadv/attacks.hpp"
#include "sgadv/data.hpp"
#include "sgadv/harness.hpp"

namespace fs = std::filesystem;
using namespace sgadv;

namespace {

constexpr int kInvariantViolation = 3;

ExperimentConfig resolve_config(const std::string& path) {
  return path.empty() ? ExperimentConfig::desk_defaults() : load_config(path);
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "id0003:1" or "3:1" -> (identity index, sample index)
std::pair<int, int> parse_slot(const std::string& s, const IdentityDataset& ds) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected IDENTITY:SAMPLE, got '" + s + "'");
  const std::string id = s.substr(0, colon);
  const int sample = std::stoi(s.substr(colon + 1));
  int index = -1;
  for (std::size_t i = 0; i < ds.identities.size(); ++i) {
    if (ds.identities[i].id == id) index = static_cast<int>(i);
  }
  if (index < 0) index = std::stoi(id);
  if (index < 0 || index >= static_cast<int>(ds.identities.size())) {
    throw std::out_of_range("no identity '" + id + "'");
  }
  if (sample < 0 || sample >= static_cast<int>(ds.identities[index].samples.size())) {
    throw std::out_of_range("identity '" + id + "' has no sample " + std::to_string(sample));
  }
  return {index, sample};
}

void print_summary(const std::string& csv) { std::cout << csv; }

int cmd_config(const std::string& profile, const std::string& out) {
  ExperimentConfig cfg;
  if (profile == "desk") {
    cfg = ExperimentConfig::desk_defaults();
  } else if (profile == "paper") {
    cfg = ExperimentConfig::paper_profile();
  } else {
    throw std::invalid_argument("unknown profile '" + profile + "'");
  }
  const std::string text = config_to_json(cfg);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(out) << text;
  }
  return 0;
}

int cmd_gen_data(const std::string& config, const std::string& out) {
  const auto cfg = resolve_config(config);
  const auto ds = generate_dataset(cfg.dataset);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.identities.size() << " identities x " << cfg.dataset.samples_per_identity
            << " samples (" << ds.image_dims.to_string() << ") to " << out << "\n";
  return 0;
}

int cmd_calibrate(const std::string& config, const std::string& data, const std::string& out) {
  auto cfg = resolve_config(config);
  if (!data.empty()) cfg.dataset_path = data;
  const Testbed bed = build_testbed(cfg);
  fs::create_directories(out);
  bed.model->save(fs::path(out) / "model.bin");
  bed.system.save(fs::path(out) / "system.json");
  const auto curve = roc(bed.benign);
  {
    std::ofstream roc_out(fs::path(out) / "roc_benign.csv");
    roc_out << "fpr,tpr\n";
    for (const auto& p : curve) roc_out << p.fpr << ',' << p.tpr << '\n';
  }
  std::printf("tau %.6f  eer %.4f  auc %.4f  genuine %zu  imposter %zu  templates %zu\n", bed.system.tau(),
              bed.system.eer(), roc_auc(curve), bed.benign.genuine.size(), bed.benign.imposter.size(),
              bed.system.size());
  return 0;
}

int cmd_attack(const std::string& config, const std::string& data, const std::string& technique,
               const std::string& target_slot, const std::string& source_slot, const std::string& trace,
               std::uint64_t seed) {
  auto cfg = resolve_config(config);
  if (!data.empty()) cfg.dataset_path = data;
  const Technique tech = parse_technique(technique);
  const Testbed bed = build_testbed(cfg);
  const auto [ti, tk] = parse_slot(target_slot, bed.dataset);
  const auto [si, sk] = parse_slot(source_slot, bed.dataset);
  const Image& target = bed.dataset.identities[ti].samples[tk];
  const Image& source = bed.dataset.identities[si].samples[sk];

  const TechniqueConfig* tc = cfg.find(tech);
  AttackConfig ac = tc ? tc->attack : ExperimentConfig::desk_defaults().find(tech)->attack;
  ac.seed = seed;
  ac.cbce_tau = bed.system.tau();
  ac.objective = tech == Technique::Sgadv ? Objective::Sgadv : Objective::Cbce;

  AttackResult r;
  switch (tech) {
    case Technique::FgsmCbce: r = fgsm_attack(*bed.model, source, target, ac); break;
    case Technique::PgdCbce: r = pgd_attack(*bed.model, source, target, ac); break;
    case Technique::Sgadv: r = sgadv_attack(*bed.model, source, target, ac); break;
  }

  std::ostringstream csv;
  csv << "step,loss,dissimilarity\n";
  for (std::size_t t = 0; t < r.loss_trace.size(); ++t) {
    csv << t << ',' << r.loss_trace[t] << ',' << r.dissimilarity_trace[t] << '\n';
  }
  std::cout << csv.str();
  if (!trace.empty()) std::ofstream(trace) << csv.str();

  const auto white = bed.system.verify(enrollment_key(bed.dataset.identities[ti].id, tk), r.adversarial);
  std::printf("# %s steps %d stop %s best_step %d best_loss %.6g final_dissimilarity %.6g tau %.6g accepted %s\n",
              std::string(to_string(tech)).c_str(), r.steps_taken, std::string(to_string(r.stop_reason)).c_str(),
              r.best_step, r.best_loss, r.final_dissimilarity, bed.system.tau(), white.accepted ? "yes" : "no");
  if (!within_budget(r.adversarial, source, ac.epsilon)) {
    std::fprintf(stderr, "invariant violated: perturbation exceeds epsilon\n");
    return kInvariantViolation;
  }
  return 0;
}

int cmd_bench(const std::string& config, const std::string& data, const std::string& out, int workers) {
  auto cfg = resolve_config(config);
  if (!data.empty()) cfg.dataset_path = data;
  if (!out.empty()) cfg.output_dir = out;
  if (workers > 0) cfg.workers = workers;

  const Testbed bed = build_testbed(cfg);
  std::printf("tau %.6f  eer %.4f  instances %zu  techniques %zu  workers %d\n", bed.system.tau(), bed.system.eer(),
              bed.dataset.total_samples(), cfg.techniques.size(), cfg.workers);
  const BenchResult result = run_bench(cfg, bed);
  write_report(result, cfg.output_dir, cfg.write_traces);
  bed.model->save(cfg.output_dir / "model.bin");
  bed.system.save(cfg.output_dir / "system.json");
  std::ofstream(cfg.output_dir / "config.json") << config_to_json(cfg);

  print_summary(slurp(cfg.output_dir / "summary.csv"));
  if (result.s2) {
    for (const auto& g : validate_probability_gap(result).rows) {
      std::printf("gap %-9s ell %.5f  predicted %.4f  observed %.4f\n", std::string(to_string(g.technique)).c_str(),
                  g.ell, g.predicted, g.observed);
    }
  }
  if (!result.violations.empty()) {
    for (const auto& v : result.violations) std::fprintf(stderr, "invariant violated: %s\n", v.c_str());
    return kInvariantViolation;
  }
  return 0;
}

int cmd_report(const std::string& dir, bool check) {
  const std::string rebuilt = rebuild_summary(dir);
  const fs::path summary = fs::path(dir) / "summary.csv";
  if (check) {
    if (!fs::exists(summary) || slurp(summary) != rebuilt) {
      std::fprintf(stderr, "summary.csv does not match the aggregate of per_example.csv\n");
      return kInvariantViolation;
    }
  } else {
    std::ofstream(summary, std::ios::binary) << rebuilt;
  }
  print_summary(rebuilt);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity-based gray-box adversarial attacks against a synthetic verification system"};
  app.require_subcommand(1);

  std::string config, data, out, technique = "SGADV", target_slot, source_slot, trace, profile = "desk", dir;
  int workers = 0;
  bool check = false;
  std::uint64_t seed = 1;

  auto* c_config = app.add_subcommand("config", "Print or write a default config.json");
  c_config->add_option("--profile", profile, "desk or paper")->capture_default_str();
  c_config->add_option("--out", out, "Output file (stdout if omitted)");

  auto* c_gen = app.add_subcommand("gen-data", "Generate and save a synthetic identity dataset");
  c_gen->add_option("--config", config, "config.json");
  c_gen->add_option("--out", out, "Dataset directory")->required();

  auto* c_cal = app.add_subcommand("calibrate", "Enroll all samples, calibrate the EER threshold, save the system");
  c_cal->add_option("--config", config, "config.json");
  c_cal->add_option("--data", data, "Load a saved dataset instead of generating one");
  c_cal->add_option("--out", out, "Output directory")->required();

  auto* c_att = app.add_subcommand("attack", "Run one attack and print its loss trace");
  c_att->add_option("--config", config, "config.json");
  c_att->add_option("--data", data, "Load a saved dataset instead of generating one");
  c_att->add_option("--technique", technique, "FGSM-CBCE, PGD-CBCE or SGADV")->capture_default_str();
  c_att->add_option("--target", target_slot, "Target image as IDENTITY:SAMPLE")->required();
  c_att->add_option("--source", source_slot, "Source image as IDENTITY:SAMPLE")->required();
  c_att->add_option("--trace", trace, "Also write the trace CSV here");
  c_att->add_option("--seed", seed, "Random-start seed")->capture_default_str();

  auto* c_bench = app.add_subcommand("bench", "Run the S1/S2 suites and write reports");
  c_bench->add_option("--config", config, "config.json");
  c_bench->add_option("--data", data, "Load a saved dataset instead of generating one");
  c_bench->add_option("--out", out, "Output directory (overrides config)");
  c_bench->add_option("--workers", workers, "Worker threads (overrides config)");

  auto* c_report = app.add_subcommand("report", "Re-derive summary.csv from per_example.csv");
  c_report->add_option("--dir", dir, "Bench output directory")->required();
  c_report->add_flag("--check", check, "Compare against the existing summary.csv instead of overwriting it");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_config) return cmd_config(profile, out);
    if (*c_gen) return cmd_gen_data(config, out);
    if (*c_cal) return cmd_calibrate(config, data, out);
    if (*c_att) return cmd_attack(config, data, technique, target_slot, source_slot, trace, seed);
    if (*c_bench) return cmd_bench(config, data, out, workers);
    if (*c_report) return cmd_report(dir, check);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
