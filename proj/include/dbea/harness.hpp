#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dbea/config.hpp"
#include "dbea/evaluation.hpp"
#include "dbea/io.hpp"
#include "dbea/metrics.hpp"
#include "dbea/model.hpp"
#include "dbea/training.hpp"

namespace dbea {

inline constexpr int artifact_version = 1;

// Run directory layout under cfg.out_dir:
//   data/<split>.jsonl               generate
//   <mode>/checkpoint.bin            train
//   <mode>/train_log.jsonl           train
//   <mode>/detection.json            eval (+ detections.jsonl)
//   <mode>/ood_<level>.json          ood-bench (+ scores_<level>.jsonl)
//   <mode>/novel_object.json         novel-bench (+ scores_novel.jsonl)
//   overhead.json, overhead.csv      overhead
//   report.json, report.csv, plots/  report
//   manifest.json                    every command; the only file carrying timings/timestamps
std::filesystem::path mode_dir(const RunConfig& cfg);
std::filesystem::path default_checkpoint(const RunConfig& cfg);

// Digests of everything a run directory has emitted, plus the volatile bits.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path root);
  // Loads an existing manifest if present; a malformed one is replaced.
  void load();
  void record_file(const std::filesystem::path& file);
  void record_timing(const std::string& step, double seconds);
  void set_section(const std::string& key, const std::string& json);
  void set_config(const RunConfig& cfg);
  void save() const;

  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> files_;     // relative path -> sha256
  std::map<std::string, std::string> sections_;  // key -> raw JSON
  std::map<std::string, double> timings_;
  std::map<std::string, std::string> timestamps_;
};

// Writes bytes under the run root and records the digest.
void emit_file(Manifest& manifest, const std::filesystem::path& file, const std::string& bytes);

// ---- operations --------------------------------------------------------------------------------

void generate_command(const RunConfig& cfg, int threads);

struct TrainOutcome {
  TrainResult result;
  std::filesystem::path checkpoint;
};
// On divergence the last-good checkpoint and log are written before TrainingDiverged propagates.
TrainOutcome train_command(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint, int threads);

struct DetectionEvaluation {
  DetectionMetrics metrics;
  std::vector<DetectionRecord> detections;
};
DetectionEvaluation evaluate_detection(const TandemParams& params, const Split& split, int threads);
// Same metrics from a detection dump on disk.
DetectionMetrics evaluate_detection_dump(const std::filesystem::path& dump, const Split& split);
DetectionEvaluation eval_command(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint, int threads);

struct OodRun {
  std::string name;  // "far_ood", "near_ood", "novel_object"
  OODBenchmarkResult result;
  std::vector<ScoredSample> samples;
};

struct OodBenchmark {
  Level level = Level::image;
  ModelMode mode = ModelMode::dbea;
  std::vector<OodRun> runs;
  std::vector<ScoreRecord> scores;  // ID, near, far in that order
};
OodBenchmark run_ood_benchmark(const TandemParams& params, const Split& id, const Split& near, const Split& far, Level level,
                               const MonitorOptions& monitor, int threads);
OodBenchmark ood_bench_command(const RunConfig& cfg, Level level, const std::optional<std::filesystem::path>& checkpoint,
                               int threads);

struct NovelBenchmark {
  std::optional<OODBenchmarkResult> result;  // absent when a label class is empty
  std::size_t novel_detections = 0;
  std::size_t known_detections = 0;
  std::vector<ScoreRecord> scores;
};
// Trains with the held-out classes withheld, then scores detections on the novel split.
NovelBenchmark run_novel_object_benchmark(const RunConfig& cfg, int threads);
NovelBenchmark novel_bench_command(const RunConfig& cfg, int threads);

struct OverheadReport {
  ParamReport vanilla;
  ParamReport dbea;
  long long trunk_savings = 0;   // vanilla trunk - dbea trunk
  long long head_overhead = 0;   // extra head parameters from duplication
  double delta = 0.0;            // (vanilla - dbea) / vanilla
};
OverheadReport overhead_report(const ModelConfig& vanilla, const ModelConfig& dbea);
OverheadReport overhead_command(const RunConfig& cfg);

// One results-table row. Absent metrics stay empty in CSV and null in JSON.
struct ReportRow {
  std::string model;
  std::optional<double> map, ap50, pcorr_all, pcorr_tp;
  std::optional<double> auroc, aupr_in, aupr_out, fpr_at_95, de_at_95;
  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

std::string report_json(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_json(const std::string& text);
std::string report_csv(const std::vector<ReportRow>& rows);

// Collects every <mode>/ result present under the run root into rows and writes
// report.json, report.csv and plots/.
std::vector<ReportRow> report_command(const RunConfig& cfg);

// ---- plots -------------------------------------------------------------------------------------

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::string> series;            // one per regime present
  std::vector<std::vector<std::size_t>> counts;  // [series][bin]
};
// Shared bins over all scores, one series per regime in ID/near/far/novel order.
Histogram score_histogram(const std::vector<ScoreRecord>& scores, Level level, int bins = 30);
std::string histogram_csv(const Histogram& h);
std::string histogram_svg(const Histogram& h, const std::string& title);

std::string roc_csv(const std::vector<RocPoint>& roc);
std::string roc_svg(const std::vector<std::pair<std::string, std::vector<RocPoint>>>& curves, const std::string& title);
// Trapezoid over a roc_csv() document.
double auroc_from_roc_csv(const std::string& csv);

}  // namespace dbea
