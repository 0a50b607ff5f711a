#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sgadv/harness.hpp"

namespace sgadv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest representation that round-trips; identical bytes for identical doubles.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("per_example.csv: bad number '" + std::string(s) + "'");
  }
  return v;
}

template <typename T>
T parse_int(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("per_example.csv: bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("report: cannot write " + file.string());
  out << text;
  if (!out) throw std::runtime_error("report: write failed for " + file.string());
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("report: cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr const char* kPerExampleHeader =
    "technique,identity,fold,source_identity,source_sample,seed,steps,stop_reason,best_step,best_loss,"
    "final_loss,target_dissimilarity,white_score,white_accepted,gray_accepted,gray_total,gray_fraction,ssim,linf";

void append_roc(std::ostringstream& out, const std::string& prefix, const std::vector<RocPoint>& curve) {
  for (const auto& p : curve) out << prefix << num(p.fpr) << ',' << num(p.tpr) << '\n';
}

}  // namespace

std::string summary_csv(const std::vector<TechniqueSummary>& rows, const Calibration& cal, bool s1, bool s2) {
  std::ostringstream out;
  out << "technique,tau,eer,asr_white,asr_gray,dissimilarity_mean,dissimilarity_median,ssim_mean,linf_mean,"
         "n_examples\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << to_string(r.technique) << ',' << num(cal.tau) << ',' << num(cal.eer) << ','
        << (s1 ? num(m.asr_white) : "NA") << ',' << (s2 ? num(m.asr_gray) : "NA") << ','
        << num(m.mean_dissimilarity) << ',' << num(m.median_dissimilarity) << ',' << num(m.mean_ssim) << ','
        << num(m.mean_linf) << ',' << m.n_examples << '\n';
  }
  return out.str();
}

std::string per_example_csv(const std::vector<ExampleRecord>& records) {
  std::ostringstream out;
  out << kPerExampleHeader << '\n';
  for (const auto& r : records) {
    out << to_string(r.technique) << ',' << r.identity << ',' << r.fold << ',' << r.source_identity << ','
        << r.source_sample << ',' << r.seed << ',' << r.steps << ',' << to_string(r.stop_reason) << ','
        << r.best_step << ',' << num(r.best_loss) << ',' << num(r.final_loss) << ','
        << num(r.target_dissimilarity) << ',';
    if (r.has_white) {
      out << num(r.white_score) << ',' << (r.white_accepted ? 1 : 0) << ',';
    } else {
      out << "NA,NA,";
    }
    if (r.has_gray) {
      out << r.gray_accepted << ',' << r.gray_total << ',' << num(r.gray_fraction()) << ',';
    } else {
      out << "NA,NA,NA,";
    }
    out << num(r.ssim) << ',' << num(r.linf) << '\n';
  }
  return out.str();
}

std::vector<ExampleRecord> parse_per_example_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kPerExampleHeader) {
    throw std::runtime_error("per_example.csv: unexpected header");
  }
  std::vector<ExampleRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 19) throw std::runtime_error("per_example.csv: expected 19 fields in '" + line + "'");
    ExampleRecord r;
    r.technique = parse_technique(f[0]);
    r.identity = f[1];
    r.fold = parse_int<int>(f[2]);
    r.source_identity = f[3];
    r.source_sample = parse_int<int>(f[4]);
    r.seed = parse_int<std::uint64_t>(f[5]);
    r.steps = parse_int<int>(f[6]);
    r.stop_reason = parse_stop_reason(f[7]);
    r.best_step = parse_int<int>(f[8]);
    r.best_loss = parse_double(f[9]);
    r.final_loss = parse_double(f[10]);
    r.target_dissimilarity = parse_double(f[11]);
    if (f[12] != "NA") {
      r.has_white = true;
      r.white_score = parse_double(f[12]);
      r.white_accepted = parse_int<int>(f[13]) != 0;
    }
    if (f[14] != "NA") {
      r.has_gray = true;
      r.gray_accepted = parse_int<int>(f[14]);
      r.gray_total = parse_int<int>(f[15]);
    }
    r.ssim = parse_double(f[17]);
    r.linf = parse_double(f[18]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_report(const BenchResult& result, const fs::path& dir, bool write_traces) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("report: cannot create " + dir.string());

  const auto rows = summarize(result.records, result.s1, result.s2);
  write_file(dir / "summary.csv", summary_csv(rows, result.calibration, result.s1, result.s2));
  write_file(dir / "per_example.csv", per_example_csv(result.records));

  {
    std::ostringstream out;
    out << "technique,n_examples,mean_seconds_per_example\n";
    for (const auto& r : rows) out << to_string(r.technique) << ',' << r.metrics.n_examples << ',' << num(r.mean_seconds) << '\n';
    write_file(dir / "timing.csv", out.str());
  }

  const json cal = {{"tau", result.calibration.tau},
                    {"eer", result.calibration.eer},
                    {"n_genuine", result.benign.genuine.size()},
                    {"n_imposter", result.benign.imposter.size()},
                    {"s1", result.s1},
                    {"s2", result.s2}};
  write_file(dir / "calibration.json", cal.dump(2) + "\n");

  const auto benign_curve = roc(result.benign);
  {
    std::ostringstream out;
    out << "fpr,tpr\n";
    append_roc(out, "", benign_curve);
    write_file(dir / "roc_benign.csv", out.str());
  }
  {
    std::ostringstream roc_out, auc_out;
    roc_out << "technique,scenario,fpr,tpr\n";
    auc_out << "curve,technique,scenario,auc\n";
    auc_out << "benign,NA,NA," << num(roc_auc(benign_curve)) << '\n';
    for (const auto& r : rows) {
      for (auto s : {Scenario::S1, Scenario::S2}) {
        if ((s == Scenario::S1 && !result.s1) || (s == Scenario::S2 && !result.s2)) continue;
        const auto curve = roc(attacked_scores(result, r.technique, s));
        const std::string prefix = std::string(to_string(r.technique)) + "," + std::string(to_string(s)) + ",";
        append_roc(roc_out, prefix, curve);
        auc_out << "attacked," << prefix << num(roc_auc(curve)) << '\n';
      }
    }
    write_file(dir / "roc_attacked.csv", roc_out.str());
    write_file(dir / "roc_auc.csv", auc_out.str());
  }

  if (result.s2) {
    const auto gap = validate_probability_gap(result);
    std::ostringstream out;
    out << "technique,tau,ell_median,predicted_success,label_based_prediction,observed_gray_success\n";
    for (const auto& g : gap.rows) {
      out << to_string(g.technique) << ',' << num(gap.tau) << ',' << num(g.ell) << ',' << num(g.predicted) << ','
          << num(gap.label_based_prediction) << ',' << num(g.observed) << '\n';
    }
    write_file(dir / "probability_gap.csv", out.str());

    std::ostringstream dist;
    dist << "technique,identity,fold,enrolled_sample,dissimilarity,accepted\n";
    for (const auto& r : result.records) {
      int k = 0;
      for (double score : r.gray_scores) {
        if (k == r.fold) ++k;
        dist << to_string(r.technique) << ',' << r.identity << ',' << r.fold << ',' << k << ',' << num(score) << ','
             << (score <= result.calibration.tau ? 1 : 0) << '\n';
        ++k;
      }
    }
    write_file(dir / "gap_distribution.csv", dist.str());
  }

  if (write_traces) {
    for (const auto& r : result.records) {
      std::ostringstream out;
      out << "step,loss,dissimilarity\n";
      for (std::size_t t = 0; t < r.loss_trace.size(); ++t) {
        out << t << ',' << num(r.loss_trace[t]) << ',' << num(r.dissimilarity_trace[t]) << '\n';
      }
      write_file(dir / ("trace_" + std::string(to_string(r.technique)) + "_" + r.identity + "_f" +
                        std::to_string(r.fold) + ".csv"),
                 out.str());
    }
  }
}

std::string rebuild_summary(const fs::path& dir) {
  const json cal = json::parse(read_file(dir / "calibration.json"));
  const Calibration c{cal.at("tau").get<double>(), cal.at("eer").get<double>()};
  const bool s1 = cal.at("s1").get<bool>();
  const bool s2 = cal.at("s2").get<bool>();
  const auto records = parse_per_example_csv(read_file(dir / "per_example.csv"));
  return summary_csv(summarize(records, s1, s2), c, s1, s2);
}

}  // namespace sgadv
