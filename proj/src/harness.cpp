#include "dbea/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <json.hpp>
#include <sstream>

#include "dbea/errors.hpp"

namespace dbea {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : "null"; }

std::string quote(const std::string& s) { return json(s).dump(); }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string ood_result_json(const OODBenchmarkResult& r) {
  return "{\"auroc\":" + format_double(r.auroc) + ",\"aupr_in\":" + format_double(r.aupr_in) +
         ",\"aupr_out\":" + format_double(r.aupr_out) + ",\"fpr_at_95\":" + format_double(r.fpr_at_95) +
         ",\"de_at_95\":" + format_double(r.de_at_95) + ",\"tpr_at_95\":" + format_double(r.tpr_at_95) +
         ",\"n_in\":" + std::to_string(r.n_in) + ",\"n_ood\":" + std::to_string(r.n_ood) + "}";
}

OODBenchmarkResult ood_result_from(const json& j) {
  OODBenchmarkResult r;
  r.auroc = j.at("auroc").get<double>();
  r.aupr_in = j.at("aupr_in").get<double>();
  r.aupr_out = j.at("aupr_out").get<double>();
  r.fpr_at_95 = j.at("fpr_at_95").get<double>();
  r.de_at_95 = j.at("de_at_95").get<double>();
  r.tpr_at_95 = j.at("tpr_at_95").get<double>();
  r.n_in = j.at("n_in").get<std::size_t>();
  r.n_ood = j.at("n_ood").get<std::size_t>();
  return r;
}

std::string detection_json(const DetectionMetrics& m, ModelMode mode) {
  return "{\"model\":" + quote(std::string(to_string(mode))) + ",\"split\":\"test_id\",\"mAP\":" + opt_num(m.map) +
         ",\"AP50\":" + opt_num(m.ap50) + ",\"PCorr-all\":" + opt_num(m.pcorr_all) + ",\"PCorr-tp\":" +
         opt_num(m.pcorr_tp) + ",\"detections\":" + std::to_string(m.detections) +
         ",\"ground_truths\":" + std::to_string(m.ground_truths) + "}\n";
}

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

TandemParams load_model(const RunConfig& cfg, const std::optional<fs::path>& checkpoint) {
  return load_checkpoint(checkpoint.value_or(default_checkpoint(cfg)), cfg.model);
}

std::vector<ScoredSample> samples_from_scores(const std::vector<ScoreRecord>& scores, Level level, Regime ood) {
  std::vector<ScoredSample> out;
  for (const auto& r : scores) {
    if (r.regime != Regime::in_distribution && r.regime != ood) continue;
    const SampleLabel label = r.regime == Regime::in_distribution ? SampleLabel::in_distribution : SampleLabel::ood;
    if (level == Level::image) {
      out.push_back({r.ood_score, label});
    } else {
      for (const auto& o : r.per_object) out.push_back({o.ood_score, label});
    }
  }
  return out;
}

bool has_both(const std::vector<ScoredSample>& s) {
  bool in = false, ood = false;
  for (const auto& x : s) (x.label == SampleLabel::ood ? ood : in) = true;
  return in && ood;
}

}  // namespace

fs::path mode_dir(const RunConfig& cfg) { return fs::path(cfg.out_dir) / std::string(to_string(cfg.model.mode)); }

fs::path default_checkpoint(const RunConfig& cfg) { return mode_dir(cfg) / "checkpoint.bin"; }

// ---- manifest ----------------------------------------------------------------------------------

Manifest::Manifest(fs::path root) : root_(std::move(root)) {}

void Manifest::load() {
  const fs::path p = root_ / "manifest.json";
  if (!fs::exists(p)) return;
  try {
    const json j = json::parse(read_file(p));
    for (const auto& [k, v] : j.at("files").items()) files_[k] = v.get<std::string>();
    for (const auto& [k, v] : j.at("sections").items()) sections_[k] = v.dump();
    for (const auto& [k, v] : j.at("timings_seconds").items()) timings_[k] = v.get<double>();
    for (const auto& [k, v] : j.at("timestamps").items()) timestamps_[k] = v.get<std::string>();
  } catch (const std::exception&) {
    files_.clear();
    sections_.clear();
    timings_.clear();
    timestamps_.clear();
  }
}

void Manifest::record_file(const fs::path& file) {
  const fs::path rel = file.lexically_relative(root_);
  const bool inside = !rel.empty() && *rel.begin() != "..";
  files_[(inside ? rel : file).generic_string()] = sha256_file(file);
}

void Manifest::record_timing(const std::string& step, double seconds) {
  timings_[step] = seconds;
  timestamps_[step] = utc_now();
}

void Manifest::set_section(const std::string& key, const std::string& raw) { sections_[key] = raw; }

void Manifest::set_config(const RunConfig& cfg) {
  const std::string text = dump_config(cfg);
  sections_["config_sha256"] = quote(sha256_hex(text));
  sections_["artifact_version"] = std::to_string(artifact_version);
}

void Manifest::save() const {
  json j;
  j["files"] = json::object();
  for (const auto& [k, v] : files_) j["files"][k] = v;
  j["sections"] = json::object();
  for (const auto& [k, v] : sections_) j["sections"][k] = json::parse(v);
  j["timings_seconds"] = json::object();
  for (const auto& [k, v] : timings_) j["timings_seconds"][k] = v;
  j["timestamps"] = json::object();
  for (const auto& [k, v] : timestamps_) j["timestamps"][k] = v;
  write_file(root_ / "manifest.json", j.dump(2) + "\n");
}

void emit_file(Manifest& manifest, const fs::path& file, const std::string& bytes) {
  write_file(file, bytes);
  manifest.record_file(file);
}

// ---- generate ----------------------------------------------------------------------------------

void generate_command(const RunConfig& cfg, int threads) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  const DatasetSplits d = generate_dataset(cfg.dataset, cfg.seed, threads);
  const fs::path dir = fs::path(cfg.out_dir) / "data";
  const std::pair<const char*, const Split*> splits[] = {{"train", &d.train},       {"val", &d.val},
                                                         {"test_id", &d.test_id},   {"near_ood", &d.near_ood},
                                                         {"far_ood", &d.far_ood},   {"novel", &d.novel}};
  for (const auto& [name, split] : splits) emit_file(man, dir / (std::string(name) + ".jsonl"), dump_split(*split));
  emit_file(man, dir / "config.yaml", dump_config(cfg));
  man.record_timing("generate", sw.seconds());
  man.save();
}

// ---- train -------------------------------------------------------------------------------------

namespace {

std::string train_log_jsonl(const TrainSettings& settings, const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& l : log) {
    out += "{\"epoch\":" + std::to_string(l.epoch) + ",\"ramp\":" + format_double(tandem_ramp(settings, l.epoch)) +
           ",\"base\":" + format_double(l.mean.base) + ",\"ta\":" + format_double(l.mean.ta) +
           ",\"tq\":" + format_double(l.mean.tq) + ",\"tandem\":" + format_double(l.mean.tandem) +
           ",\"diversity\":" + format_double(l.mean.diversity) + ",\"total\":" + format_double(l.mean.total) + "}\n";
  }
  return out;
}

std::string train_log_section(const TrainSettings& settings, const std::vector<EpochLog>& log) {
  std::string out = "[";
  std::istringstream in(train_log_jsonl(settings, log));
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    out += (first ? "" : ",") + line;
    first = false;
  }
  return out + "]";
}

}  // namespace

TrainOutcome train_command(const RunConfig& cfg, const std::optional<fs::path>& checkpoint, int threads) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  const SplitSizes sizes = split_sizes(cfg.dataset);
  cfg.dataset.validate();
  const Split train = generate_split(cfg.dataset, cfg.seed, "train", Regime::in_distribution, sizes.train, threads);

  TrainOutcome out;
  out.checkpoint = checkpoint.value_or(default_checkpoint(cfg));
  const std::string mode(to_string(cfg.model.mode));
  auto persist = [&](const TrainResult& r) {
    emit_file(man, out.checkpoint, encode_checkpoint(r.params));
    emit_file(man, mode_dir(cfg) / "train_log.jsonl", train_log_jsonl(cfg.training, r.log));
    man.set_section("train_log." + mode, train_log_section(cfg.training, r.log));
    man.record_timing("train." + mode, sw.seconds());
    man.save();
  };
  try {
    out.result = train_model(cfg.model, cfg.training, train);
  } catch (const TrainingDiverged& e) {
    persist(e.last_good());
    throw;
  }
  persist(out.result);
  return out;
}

// ---- eval --------------------------------------------------------------------------------------

DetectionEvaluation evaluate_detection(const TandemParams& params, const Split& split, int threads) {
  for (const auto& s : split) {
    if (s.queries.features.rows() != params.config.queries || s.queries.features.cols() != params.config.feature_dim) {
      throw ShapeError("scene " + s.scene.scene_id + " does not match the model query/feature shape");
    }
  }
  DetectionEvaluation ev;
  for (const auto& e : run_inference(params, split, {}, threads)) {
    ev.detections.insert(ev.detections.end(), e.detections.begin(), e.detections.end());
  }
  ev.metrics = detection_metrics(ev.detections, ground_truth_records(split));
  return ev;
}

DetectionMetrics evaluate_detection_dump(const fs::path& dump, const Split& split) {
  return detection_metrics(parse_detections(read_file(dump), dump.string()), ground_truth_records(split));
}

DetectionEvaluation eval_command(const RunConfig& cfg, const std::optional<fs::path>& checkpoint, int threads) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  const TandemParams params = load_model(cfg, checkpoint);
  const SplitSizes sizes = split_sizes(cfg.dataset);
  const Split test = generate_split(cfg.dataset, cfg.seed, "test", Regime::in_distribution, sizes.test, threads);
  DetectionEvaluation ev = evaluate_detection(params, test, threads);
  const std::string mode(to_string(cfg.model.mode));
  emit_file(man, mode_dir(cfg) / "detections.jsonl", dump_detections(ev.detections));
  const std::string summary = detection_json(ev.metrics, cfg.model.mode);
  emit_file(man, mode_dir(cfg) / "detection.json", summary);
  man.set_section("detection." + mode, summary);
  man.record_timing("eval." + mode, sw.seconds());
  man.save();
  return ev;
}

// ---- OOD benchmark -----------------------------------------------------------------------------

OodBenchmark run_ood_benchmark(const TandemParams& params, const Split& id, const Split& near, const Split& far, Level level,
                               const MonitorOptions& monitor, int threads) {
  if (id.empty()) throw DataError("ood benchmark: in-distribution split is empty");
  if (near.empty() && far.empty()) throw DataError("ood benchmark: no OOD scenes");
  const ModelMode mode = params.config.mode;
  const auto id_eval = run_inference(params, id, monitor, threads);
  OodBenchmark b;
  b.level = level;
  b.mode = mode;
  b.scores = score_records(id_eval, mode);
  const std::pair<const char*, const Split*> sets[] = {{"far_ood", &far}, {"near_ood", &near}};
  std::vector<std::vector<ScoreRecord>> extra(2);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& [name, split] = sets[k];
    if (split->empty()) continue;
    const auto ev = run_inference(params, *split, monitor, threads);
    OodRun run;
    run.name = name;
    run.samples = level == Level::image ? image_samples(id_eval, ev, mode) : object_samples(id_eval, ev, mode);
    run.result = ood_benchmark(run.samples);
    b.runs.push_back(std::move(run));
    extra[k] = score_records(ev, mode);
  }
  // Dump order: ID, near, far.
  b.scores.insert(b.scores.end(), extra[1].begin(), extra[1].end());
  b.scores.insert(b.scores.end(), extra[0].begin(), extra[0].end());
  return b;
}

OodBenchmark ood_bench_command(const RunConfig& cfg, Level level, const std::optional<fs::path>& checkpoint, int threads) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  const TandemParams params = load_model(cfg, checkpoint);
  const SplitSizes sizes = split_sizes(cfg.dataset);
  const auto& d = cfg.dataset;
  const Split id = generate_split(d, cfg.seed, "test", Regime::in_distribution, sizes.test, threads);
  const Split near = generate_split(d, cfg.seed, "near", Regime::near_ood, d.near_ood_scenes, threads);
  const Split far = generate_split(d, cfg.seed, "far", Regime::far_ood, d.far_ood_scenes, threads);
  OodBenchmark b = run_ood_benchmark(params, id, near, far, level, cfg.monitor, threads);

  const std::string lv(to_string(level));
  const std::string mode(to_string(cfg.model.mode));
  emit_file(man, mode_dir(cfg) / ("scores_" + lv + ".jsonl"), dump_scores(b.scores));
  std::string j = "{\"model\":" + quote(mode) + ",\"level\":" + quote(lv) + ",\"runs\":{";
  for (std::size_t i = 0; i < b.runs.size(); ++i) {
    j += (i ? "," : "") + quote(b.runs[i].name) + ":" + ood_result_json(b.runs[i].result);
  }
  j += "}}\n";
  emit_file(man, mode_dir(cfg) / ("ood_" + lv + ".json"), j);
  man.set_section("ood_" + lv + "." + mode, j);
  man.record_timing("ood-bench." + lv + "." + mode, sw.seconds());
  man.save();
  return b;
}

// ---- novel-object benchmark --------------------------------------------------------------------

NovelBenchmark run_novel_object_benchmark(const RunConfig& cfg, int threads) {
  const auto& w = cfg.dataset.world;
  if (w.held_out_classes.empty()) throw ConfigError("dataset.held_out_classes: novel-bench needs at least one held-out class");
  if (cfg.dataset.novel_scenes <= 0) throw ConfigError("dataset.novel_scenes: novel-bench needs evaluation scenes");
  const SplitSizes sizes = split_sizes(cfg.dataset);
  const Split train = generate_split(cfg.dataset, cfg.seed, "train", Regime::in_distribution, sizes.train, threads);
  const Split novel = generate_split(cfg.dataset, cfg.seed, "novel", Regime::novel_class, cfg.dataset.novel_scenes, threads);
  const TrainResult trained = train_model(cfg.model, cfg.training, train);
  const auto evals = run_inference(trained.params, novel, cfg.monitor, threads);
  const auto labelled = novel_object_samples(evals, novel, w.held_out_classes, cfg.model.mode, 0.5);

  NovelBenchmark b;
  b.scores = score_records(evals, cfg.model.mode);
  std::vector<ScoredSample> samples;
  for (const auto& s : labelled) {
    samples.push_back(s.sample);
    (s.sample.label == SampleLabel::ood ? b.novel_detections : b.known_detections) += 1;
  }
  if (has_both(samples)) b.result = ood_benchmark(samples);
  return b;
}

NovelBenchmark novel_bench_command(const RunConfig& cfg, int threads) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  NovelBenchmark b = run_novel_object_benchmark(cfg, threads);
  const std::string mode(to_string(cfg.model.mode));
  emit_file(man, mode_dir(cfg) / "scores_novel.jsonl", dump_scores(b.scores));
  const std::string j = "{\"model\":" + quote(mode) + ",\"level\":\"object\",\"novel_detections\":" +
                        std::to_string(b.novel_detections) + ",\"known_detections\":" + std::to_string(b.known_detections) +
                        ",\"result\":" + (b.result ? ood_result_json(*b.result) : std::string("null")) + "}\n";
  emit_file(man, mode_dir(cfg) / "novel_object.json", j);
  man.set_section("novel_object." + mode, j);
  man.record_timing("novel-bench." + mode, sw.seconds());
  man.save();
  return b;
}

// ---- overhead ----------------------------------------------------------------------------------

OverheadReport overhead_report(const ModelConfig& vanilla, const ModelConfig& dbea) {
  vanilla.validate();
  dbea.validate();
  OverheadReport r;
  r.vanilla = param_count(vanilla);
  r.dbea = param_count(dbea);
  r.trunk_savings = static_cast<long long>(r.vanilla.trunk) - static_cast<long long>(r.dbea.trunk);
  r.head_overhead = static_cast<long long>(r.dbea.per_head()) * (r.dbea.heads - 1) +
                    (static_cast<long long>(r.dbea.per_head()) - static_cast<long long>(r.vanilla.per_head())) *
                        r.vanilla.heads;
  const double v = static_cast<double>(r.vanilla.total());
  r.delta = (v - static_cast<double>(r.dbea.total())) / v;
  return r;
}

OverheadReport overhead_command(const RunConfig& cfg) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  const OverheadReport r = overhead_report(cfg.model_for(ModelMode::vanilla), cfg.model_for(ModelMode::dbea));
  auto row = [](const ParamReport& p) {
    return "{\"trunk\":" + std::to_string(p.trunk) + ",\"box_head\":" + std::to_string(p.box_head) +
           ",\"cls_head\":" + std::to_string(p.cls_head) + ",\"heads\":" + std::to_string(p.heads) +
           ",\"total\":" + std::to_string(p.total()) + "}";
  };
  const std::string j = "{\"vanilla\":" + row(r.vanilla) + ",\"dbea\":" + row(r.dbea) +
                        ",\"trunk_savings\":" + std::to_string(r.trunk_savings) +
                        ",\"head_duplication_overhead\":" + std::to_string(r.head_overhead) +
                        ",\"delta\":" + format_double(r.delta) + "}\n";
  std::string csv = "component,vanilla,dbea\n";
  csv += "trunk," + std::to_string(r.vanilla.trunk) + "," + std::to_string(r.dbea.trunk) + "\n";
  csv += "box_head_per_head," + std::to_string(r.vanilla.box_head) + "," + std::to_string(r.dbea.box_head) + "\n";
  csv += "cls_head_per_head," + std::to_string(r.vanilla.cls_head) + "," + std::to_string(r.dbea.cls_head) + "\n";
  csv += "heads," + std::to_string(r.vanilla.heads) + "," + std::to_string(r.dbea.heads) + "\n";
  csv += "total," + std::to_string(r.vanilla.total()) + "," + std::to_string(r.dbea.total()) + "\n";
  csv += "trunk_savings,," + std::to_string(r.trunk_savings) + "\n";
  csv += "head_duplication_overhead,," + std::to_string(r.head_overhead) + "\n";
  csv += "delta,," + format_double(r.delta) + "\n";
  const fs::path root(cfg.out_dir);
  emit_file(man, root / "overhead.json", j);
  emit_file(man, root / "overhead.csv", csv);
  man.set_section("overhead", j);
  man.record_timing("overhead", sw.seconds());
  man.save();
  return r;
}

// ---- report ------------------------------------------------------------------------------------

std::string report_json(const std::vector<ReportRow>& rows) {
  std::string out = "{\"artifact_version\":" + std::to_string(artifact_version) + ",\"rows\":[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out += (i ? "," : "");
    out += "{\"model\":" + quote(r.model) + ",\"mAP\":" + opt_num(r.map) + ",\"AP50\":" + opt_num(r.ap50) +
           ",\"PCorr-all\":" + opt_num(r.pcorr_all) + ",\"PCorr-tp\":" + opt_num(r.pcorr_tp) +
           ",\"AUROC\":" + opt_num(r.auroc) + ",\"AUPR-In\":" + opt_num(r.aupr_in) +
           ",\"AUPR-Out\":" + opt_num(r.aupr_out) + ",\"FPR@95\":" + opt_num(r.fpr_at_95) +
           ",\"DE@95\":" + opt_num(r.de_at_95) + "}";
  }
  return out + "]}\n";
}

std::vector<ReportRow> parse_report_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("report: ") + e.what());
  }
  std::vector<ReportRow> rows;
  for (const auto& r : j.at("rows")) {
    ReportRow row;
    row.model = r.at("model").get<std::string>();
    row.map = opt_from(r, "mAP");
    row.ap50 = opt_from(r, "AP50");
    row.pcorr_all = opt_from(r, "PCorr-all");
    row.pcorr_tp = opt_from(r, "PCorr-tp");
    row.auroc = opt_from(r, "AUROC");
    row.aupr_in = opt_from(r, "AUPR-In");
    row.aupr_out = opt_from(r, "AUPR-Out");
    row.fpr_at_95 = opt_from(r, "FPR@95");
    row.de_at_95 = opt_from(r, "DE@95");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  std::string out = "model,mAP,AP50,PCorr-all,PCorr-tp,AUROC,AUPR-In,AUPR-Out,FPR@95,DE@95\n";
  for (const auto& r : rows) {
    out += r.model + "," + cell(r.map) + "," + cell(r.ap50) + "," + cell(r.pcorr_all) + "," + cell(r.pcorr_tp) + "," +
           cell(r.auroc) + "," + cell(r.aupr_in) + "," + cell(r.aupr_out) + "," + cell(r.fpr_at_95) + "," +
           cell(r.de_at_95) + "\n";
  }
  return out;
}

std::vector<ReportRow> report_command(const RunConfig& cfg) {
  Stopwatch sw;
  Manifest man(cfg.out_dir);
  man.load();
  man.set_config(cfg);
  const fs::path root(cfg.out_dir);
  std::vector<ReportRow> rows;
  for (ModelMode mode : {ModelMode::vanilla, ModelMode::dbea}) {
    const std::string m(to_string(mode));
    const fs::path dir = root / m;
    ReportRow det;
    det.model = m;
    bool have_det = false;
    if (fs::exists(dir / "detection.json")) {
      const json j = json::parse(read_file(dir / "detection.json"));
      det.map = opt_from(j, "mAP");
      det.ap50 = opt_from(j, "AP50");
      det.pcorr_all = opt_from(j, "PCorr-all");
      det.pcorr_tp = opt_from(j, "PCorr-tp");
      have_det = true;
    }
    bool have_ood = false;
    for (Level level : {Level::image, Level::object}) {
      const std::string lv(to_string(level));
      const fs::path res = dir / ("ood_" + lv + ".json");
      if (!fs::exists(res)) continue;
      const json j = json::parse(read_file(res));
      for (const char* name : {"far_ood", "near_ood"}) {
        if (!j.at("runs").contains(name)) continue;
        const OODBenchmarkResult o = ood_result_from(j.at("runs").at(name));
        ReportRow row = det;
        row.model = m + "/" + lv + "/" + name;
        row.auroc = o.auroc;
        row.aupr_in = o.aupr_in;
        row.aupr_out = o.aupr_out;
        row.fpr_at_95 = o.fpr_at_95;
        row.de_at_95 = o.de_at_95;
        rows.push_back(row);
        have_ood = true;
      }
      const fs::path scores = dir / ("scores_" + lv + ".jsonl");
      if (!fs::exists(scores)) continue;
      const auto recs = parse_scores(read_file(scores), scores.string());
      const Histogram h = score_histogram(recs, level);
      const std::string stem = m + "_" + lv;
      emit_file(man, root / "plots" / (stem + "_hist.csv"), histogram_csv(h));
      emit_file(man, root / "plots" / (stem + "_hist.svg"), histogram_svg(h, m + " " + lv + "-level OOD score"));
      std::vector<std::pair<std::string, std::vector<RocPoint>>> curves;
      for (auto [name, regime] : {std::pair{"far_ood", Regime::far_ood}, std::pair{"near_ood", Regime::near_ood}}) {
        const auto s = samples_from_scores(recs, level, regime);
        if (!has_both(s)) continue;
        curves.emplace_back(name, roc_curve(s));
        emit_file(man, root / "plots" / (stem + "_roc_" + name + ".csv"), roc_csv(curves.back().second));
      }
      if (!curves.empty()) emit_file(man, root / "plots" / (stem + "_roc.svg"), roc_svg(curves, m + " " + lv + "-level ROC"));
    }
    if (fs::exists(dir / "novel_object.json")) {
      const json j = json::parse(read_file(dir / "novel_object.json"));
      ReportRow row;
      row.model = m + "/object/novel";
      if (!j.at("result").is_null()) {
        const OODBenchmarkResult o = ood_result_from(j.at("result"));
        row.auroc = o.auroc;
        row.aupr_in = o.aupr_in;
        row.aupr_out = o.aupr_out;
        row.fpr_at_95 = o.fpr_at_95;
        row.de_at_95 = o.de_at_95;
      }
      rows.push_back(row);
    }
    if (have_det && !have_ood) rows.push_back(det);
  }
  emit_file(man, root / "report.json", report_json(rows));
  emit_file(man, root / "report.csv", report_csv(rows));
  man.record_timing("report", sw.seconds());
  man.save();
  return rows;
}

// ---- plots -------------------------------------------------------------------------------------

namespace {

const char* palette[] = {"#1f77b4", "#ff7f0e", "#d62728", "#2ca02c"};

std::string fmt(double v, const char* spec = "%.2f") {
  char buf[32];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string svg_open(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
         "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

Histogram score_histogram(const std::vector<ScoreRecord>& scores, Level level, int bins) {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  const Regime order[] = {Regime::in_distribution, Regime::near_ood, Regime::far_ood, Regime::novel_class};
  std::vector<std::vector<double>> values(4);
  for (const auto& r : scores) {
    const auto k = static_cast<std::size_t>(std::find(std::begin(order), std::end(order), r.regime) - std::begin(order));
    if (level == Level::image) {
      values[k].push_back(r.ood_score);
    } else {
      for (const auto& o : r.per_object) values[k].push_back(o.ood_score);
    }
  }
  Histogram h;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& v : values) {
    for (double x : v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi <= lo) hi = lo + 1.0;
  h.lo = lo;
  h.hi = hi;
  for (std::size_t k = 0; k < 4; ++k) {
    if (values[k].empty()) continue;
    h.series.emplace_back(to_string(order[k]));
    std::vector<std::size_t> c(static_cast<std::size_t>(bins), 0);
    for (double x : values[k]) {
      auto b = static_cast<long>(std::floor((x - lo) / (hi - lo) * bins));
      c[static_cast<std::size_t>(std::clamp<long>(b, 0, bins - 1))] += 1;
    }
    h.counts.push_back(std::move(c));
  }
  return h;
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi";
  for (const auto& s : h.series) out += "," + s;
  out += "\n";
  const std::size_t bins = h.counts.empty() ? 0 : h.counts.front().size();
  const double width = (h.hi - h.lo) / static_cast<double>(std::max<std::size_t>(bins, 1));
  for (std::size_t b = 0; b < bins; ++b) {
    out += format_double(h.lo + width * static_cast<double>(b)) + "," + format_double(h.lo + width * static_cast<double>(b + 1));
    for (const auto& c : h.counts) out += "," + std::to_string(c[b]);
    out += "\n";
  }
  return out;
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  const int w = 640, ht = 400, ml = 60, mr = 20, mt = 40, mb = 50;
  const double pw = w - ml - mr, ph = ht - mt - mb;
  std::size_t peak = 1;
  for (const auto& c : h.counts) peak = std::max(peak, *std::max_element(c.begin(), c.end()));
  std::string out = svg_open(w, ht);
  out += "<text x=\"" + std::to_string(w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
  const std::size_t bins = h.counts.empty() ? 0 : h.counts.front().size();
  for (std::size_t s = 0; s < h.counts.size(); ++s) {
    const char* color = palette[s % 4];
    for (std::size_t b = 0; b < bins; ++b) {
      if (h.counts[s][b] == 0) continue;
      const double bh = ph * static_cast<double>(h.counts[s][b]) / static_cast<double>(peak);
      const double x = ml + pw * static_cast<double>(b) / static_cast<double>(bins);
      out += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(mt + ph - bh) + "\" width=\"" + fmt(pw / static_cast<double>(bins)) +
             "\" height=\"" + fmt(bh) + "\" fill=\"" + color + "\" fill-opacity=\"0.45\" stroke=\"" + color + "\"/>\n";
    }
    out += "<rect x=\"" + std::to_string(w - 150) + "\" y=\"" + std::to_string(mt + 18 * static_cast<int>(s)) +
           "\" width=\"12\" height=\"12\" fill=\"" + color + "\" fill-opacity=\"0.45\"/>";
    out += "<text x=\"" + std::to_string(w - 132) + "\" y=\"" + std::to_string(mt + 10 + 18 * static_cast<int>(s)) + "\">" +
           escape(h.series[s]) + "</text>\n";
  }
  out += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + fmt(mt + ph) + "\" x2=\"" + fmt(ml + pw) + "\" y2=\"" +
         fmt(mt + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + std::to_string(mt) + "\" x2=\"" + std::to_string(ml) +
         "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"black\"/>\n";
  out += "<text x=\"" + std::to_string(ml) + "\" y=\"" + fmt(mt + ph + 18) + "\">" + fmt(h.lo, "%.3g") + "</text>\n";
  out += "<text x=\"" + fmt(ml + pw) + "\" y=\"" + fmt(mt + ph + 18) + "\" text-anchor=\"end\">" + fmt(h.hi, "%.3g") +
         "</text>\n";
  out += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + std::to_string(ht - 12) + "\" text-anchor=\"middle\">score</text>\n";
  out += "<text x=\"" + std::to_string(ml - 8) + "\" y=\"" + std::to_string(mt + 10) + "\" text-anchor=\"end\">" +
         std::to_string(peak) + "</text>\n";
  out += "</svg>\n";
  return out;
}

std::string roc_csv(const std::vector<RocPoint>& roc) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : roc) {
    out += (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) + "," + format_double(p.fpr) + "," +
           format_double(p.tpr) + "\n";
  }
  return out;
}

std::string roc_svg(const std::vector<std::pair<std::string, std::vector<RocPoint>>>& curves, const std::string& title) {
  const int size = 420, m = 50;
  const double p = size - 2 * m;
  std::string out = svg_open(size, size);
  out += "<text x=\"" + std::to_string(size / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
  out += "<rect x=\"" + std::to_string(m) + "\" y=\"" + std::to_string(m) + "\" width=\"" + fmt(p) + "\" height=\"" + fmt(p) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + std::to_string(m) + "\" y1=\"" + fmt(m + p) + "\" x2=\"" + fmt(m + p) + "\" y2=\"" +
         std::to_string(m) + "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    std::string pts;
    for (const auto& r : curves[c].second) pts += fmt(m + p * r.fpr) + "," + fmt(m + p * (1.0 - r.tpr)) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + std::string(palette[c % 4]) + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    out += "<text x=\"" + fmt(m + p - 6) + "\" y=\"" + fmt(m + p - 10 - 16 * static_cast<double>(c)) +
           "\" text-anchor=\"end\" fill=\"" + palette[c % 4] + "\">" + escape(curves[c].first) + "</text>\n";
  }
  out += "<text x=\"" + fmt(m + p / 2) + "\" y=\"" + std::to_string(size - 14) + "\" text-anchor=\"middle\">FPR</text>\n";
  out += "<text x=\"16\" y=\"" + fmt(m + p / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + fmt(m + p / 2) +
         ")\">TPR</text>\n";
  out += "</svg>\n";
  return out;
}

double auroc_from_roc_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  double area = 0.0, pf = 0.0, pt = 0.0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) throw DataError("roc csv: malformed line '" + line + "'");
    const double f = std::stod(line.substr(a + 1, b - a - 1));
    const double t = std::stod(line.substr(b + 1));
    if (!first) area += (f - pf) * 0.5 * (t + pt);
    pf = f;
    pt = t;
    first = false;
  }
  return area;
}

}  // namespace dbea
