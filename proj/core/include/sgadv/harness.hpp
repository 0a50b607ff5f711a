#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sgadv/attacks.hpp"
#include "sgadv/authsys.hpp"
#include "sgadv/data.hpp"
#include "sgadv/embedding.hpp"
#include "sgadv/metrics.hpp"

namespace sgadv {

enum class Technique { FgsmCbce, PgdCbce, Sgadv };
enum class Scenario { S1, S2 };

std::string_view to_string(Technique t);
std::string_view to_string(Scenario s);
/// Accepts "FGSM-CBCE", "PGD-CBCE" and "SGADV"; anything else throws.
Technique parse_technique(std::string_view s);

struct TechniqueConfig {
  Technique technique = Technique::Sgadv;
  AttackConfig attack;
};

struct ExperimentConfig {
  std::uint64_t seed = 2024;
  DatasetParams dataset;
  /// Load a saved dataset instead of generating one.
  std::optional<std::filesystem::path> dataset_path;
  int feature_dim = 16;
  std::uint64_t embedder_seed = 11;
  std::vector<TechniqueConfig> techniques;
  bool s1 = true;
  bool s2 = true;
  std::filesystem::path output_dir = "sgadv_out";
  int workers = 1;
  bool write_traces = true;

  /// 30 identities x 5 samples of 96x96x1, sigma 0.1, feature_dim 16, all
  /// three techniques at their attack defaults.
  static ExperimentConfig desk_defaults();
  /// 158 identities x 10 samples of 160x160x3, feature_dim 512.
  static ExperimentConfig paper_profile();

  const TechniqueConfig* find(Technique t) const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& file);
std::string config_to_json(const ExperimentConfig& cfg);

/// Dataset, model and a calibrated system in which every sample is enrolled
/// under its own key (see enrollment_key).
struct Testbed {
  IdentityDataset dataset;
  std::shared_ptr<const ReferenceEmbedder> model;
  std::vector<std::vector<FeatureVector>> templates;  // [identity][sample]
  ScoreSets benign;
  AuthSystem system;
};

std::string enrollment_key(const std::string& identity, int sample);
std::string model_ref(const ReferenceEmbedder& model);

Testbed build_testbed(const ExperimentConfig& cfg);
/// Same as build_testbed but reuses an existing dataset.
Testbed build_testbed(const ExperimentConfig& cfg, IdentityDataset dataset);

/// One (target identity, fold) slot. The fold's image is the attack target;
/// the source image comes from another identity.
struct AttackInstance {
  int identity = 0;
  int fold = 0;
  int source_identity = 0;
  int source_sample = 0;
};

/// Walks a seeded shuffle of all images round-robin, giving each
/// (identity, fold) the next image that belongs to a different identity.
std::vector<AttackInstance> plan_instances(const IdentityDataset& dataset, std::uint64_t seed);

/// derive_seed(global, {identity, fold, technique}).
std::uint64_t example_seed(std::uint64_t global_seed, const std::string& identity, int fold, Technique t);

struct ExampleRecord {
  Technique technique = Technique::Sgadv;
  std::string identity;
  int fold = 0;
  std::string source_identity;
  int source_sample = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  StopReason stop_reason = StopReason::MaxSteps;
  int best_step = 0;
  double best_loss = 0.0;
  double final_loss = 0.0;
  double target_dissimilarity = 0.0;  // adversarial vs the attacked target image

  bool has_white = false;
  double white_score = 0.0;           // vs the enrolled target image (S1)
  bool white_accepted = false;

  bool has_gray = false;
  std::vector<double> gray_scores;    // vs each other sample of the identity (S2)
  int gray_accepted = 0;
  int gray_total = 0;

  double ssim = 0.0;
  double linf = 0.0;
  double seconds = 0.0;

  std::vector<double> loss_trace;
  std::vector<double> dissimilarity_trace;

  double gray_fraction() const { return gray_total > 0 ? static_cast<double>(gray_accepted) / gray_total : 0.0; }
};

struct TechniqueSummary {
  Technique technique = Technique::Sgadv;
  MetricReport metrics;
  std::vector<double> per_fold_gray_asr;
  double mean_seconds = 0.0;
};

struct ScenarioResult {
  Scenario scenario = Scenario::S1;
  std::vector<TechniqueSummary> techniques;
  std::vector<ExampleRecord> examples;
};

/// Output of one bench run: every attack scored for the selected scenarios.
struct BenchResult {
  Calibration calibration;
  ScoreSets benign;
  bool s1 = false;
  bool s2 = false;
  std::vector<ExampleRecord> records;  // ordered by (technique, identity, fold)
  std::vector<std::string> violations; // invariant failures, empty when clean
};

/// Runs every configured technique on every instance using cfg.workers
/// threads. Results do not depend on the worker count.
BenchResult run_bench(const ExperimentConfig& cfg, const Testbed& bed);

ScenarioResult run_s1(const ExperimentConfig& cfg, const Testbed& bed);
ScenarioResult run_s2(const ExperimentConfig& cfg, const Testbed& bed);

/// Per-technique aggregates in configuration order. Uses only the fields
/// that per_example.csv stores, so a summary re-derived from that file
/// matches the original.
std::vector<TechniqueSummary> summarize(const std::vector<ExampleRecord>& records, bool s1, bool s2);

/// tau / (ell + tau).
double predicted_gray_success(double ell, double tau);

struct GapRow {
  Technique technique = Technique::Sgadv;
  double ell = 0.0;             // median final dissimilarity to the target image
  double predicted = 0.0;       // tau / (ell + tau)
  double observed = 0.0;        // gray-box ASR
};

struct GapReport {
  double tau = 0.0;
  double label_based_prediction = 0.5;
  std::vector<GapRow> rows;
};

/// Throws std::logic_error if the bench did not run S2.
GapReport validate_probability_gap(const BenchResult& result);

/// Benign genuine scores against adversarial scores as the impostor class.
ScoreSets attacked_scores(const BenchResult& result, Technique t, Scenario s);

/// Writes summary.csv, per_example.csv, timing.csv, roc_benign.csv,
/// roc_attacked.csv, roc_auc.csv, probability_gap.csv, gap_distribution.csv
/// and (optionally) trace_<technique>_<identity>_f<fold>.csv.
void write_report(const BenchResult& result, const std::filesystem::path& dir, bool write_traces);

std::string summary_csv(const std::vector<TechniqueSummary>& rows, const Calibration& cal, bool s1, bool s2);
std::string per_example_csv(const std::vector<ExampleRecord>& records);
std::vector<ExampleRecord> parse_per_example_csv(const std::string& text);

/// Re-derives summary.csv from per_example.csv and the stored calibration.
std::string rebuild_summary(const std::filesystem::path& dir);

}  // namespace sgadv
