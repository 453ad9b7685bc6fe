// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "dbea/config.hpp"
#include "dbea/harness.hpp"
#include "dbea/io.hpp"
#include "dbea/matching.hpp"
#include "dbea/metrics.hpp"
#include "dbea/monitor.hpp"
#include "dbea/parallel.hpp"
#include "gradsuite.hpp"
#include "oracles.hpp"

using namespace dbea;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int threads = 1;
fs::path config_dir;
fs::path dbea_binary;

RunConfig config(const std::string& name, std::uint64_t seed) {
  RunConfig c = load_config((config_dir / name).string());
  c.seed = seed;
  c.training.seed = seed;
  return c;
}

struct ImageBench {
  double far = 0.0;
  double near = 0.0;
};

ImageBench image_bench(const RunConfig& cfg) {
  const auto sizes = split_sizes(cfg.dataset);
  const Split train = generate_split(cfg.dataset, cfg.seed, "train", Regime::in_distribution, sizes.train, threads);
  const Split test = generate_split(cfg.dataset, cfg.seed, "test", Regime::in_distribution, sizes.test, threads);
  const Split near = generate_split(cfg.dataset, cfg.seed, "near", Regime::near_ood, cfg.dataset.near_ood_scenes, threads);
  const Split far = generate_split(cfg.dataset, cfg.seed, "far", Regime::far_ood, cfg.dataset.far_ood_scenes, threads);
  const TrainResult t = train_model(cfg.model_for(cfg.model.mode), cfg.training, train);
  const OodBenchmark b = run_ood_benchmark(t.params, test, near, far, Level::image, cfg.monitor, threads);
  ImageBench r;
  for (const auto& run : b.runs) (run.name == "far_ood" ? r.far : r.near) = run.result.auroc;
  return r;
}

std::map<std::pair<std::string, std::uint64_t>, ImageBench> bench_cache;

const ImageBench& cached_bench(const std::string& name, std::uint64_t seed) {
  const auto key = std::make_pair(name, seed);
  auto it = bench_cache.find(key);
  if (it == bench_cache.end()) it = bench_cache.emplace(key, image_bench(config(name, seed))).first;
  return it->second;
}

Outcome gradients() {
  const auto r = gradsuite::run(100, 2024);
  double worst = 0.0;
  std::string which;
  for (const auto& [name, err] : r) {
    if (err >= worst) {
      worst = err;
      which = name;
    }
  }
  return {worst <= 1e-5, "worst relative error " + fmt("%.2e", worst) + " (" + which + ")"};
}

Outcome matching() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  int bad = 0;
  for (int t = 0; t < 500; ++t) {
    const int rows = dim(rng);
    std::uniform_int_distribution<int> cdim(0, rows);
    const int cols = cdim(rng);
    Matrix cost(rows, cols);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = u(rng);
    const auto rows_for_col = hungarian_assign(cost);
    double c = 0.0;
    for (int j = 0; j < cols; ++j) c += cost(rows_for_col[static_cast<std::size_t>(j)], j);
    if (c != oracle::brute_force_assignment(cost)) ++bad;
  }
  return {bad == 0, std::to_string(500 - bad) + "/500 exact"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 6);
  double worst_auc = 0.0;
  int fpr_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<ScoredSample> s;
    const int n = 4 + t % 60;
    for (int i = 0; i < n; ++i) {
      const double v = t % 2 ? u(rng) : coarse(rng) / 6.0;
      s.push_back({v, i % 3 == 0 ? SampleLabel::ood : SampleLabel::in_distribution});
    }
    worst_auc = std::max(worst_auc, std::abs(auroc(s) - auroc_trapezoid(s)));
    const auto op = operating_point(s);
    const auto o = oracle::fpr_sweep(s);
    if (op.fpr != o.fpr || op.tpr != o.tpr) ++fpr_bad;
  }
  double worst_ap = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<GroundTruthRecord> gts;
    for (int k = 0; k < 1 + t % 4; ++k) {
      gts.push_back({"s" + std::to_string(k % 2), k % 2, {0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng), 0.15 + 0.1 * u(rng), 0.2}});
    }
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 1 + t % 8; ++i) {
      const auto& g = gts[static_cast<std::size_t>(i) % gts.size()];
      DetectionRecord d;
      d.scene_id = g.scene_id;
      d.box = g.box;
      d.box.cx += 0.1 * (u(rng) - 0.5);
      d.box.w *= 0.8 + 0.4 * u(rng);
      d.label = i % 3 == 2 ? 1 - g.class_id : g.class_id;
      d.confidence = u(rng);
      dets.push_back(d);
    }
    for (int cls : {0, 1}) {
      for (double thr : coco_iou_thresholds()) {
        const double want = oracle::average_precision_enum(dets, gts, cls, thr);
        const auto got = class_average_precision(dets, gts, cls, thr);
        if (std::isnan(want) != !got.has_value()) {
          worst_ap = 1.0;
        } else if (got) {
          worst_ap = std::max(worst_ap, std::abs(*got - want));
        }
      }
    }
  }
  const bool pass = worst_auc <= 1e-12 && worst_ap <= 1e-12 && fpr_bad == 0;
  return {pass, "AUROC gap " + fmt("%.1e", worst_auc) + ", AP gap " + fmt("%.1e", worst_ap) + ", FPR@95 mismatches " +
                    std::to_string(fpr_bad) + "/1000"};
}

Outcome de_consistency() {
  // Reported (FPR@95, DE@95) pairs for the two tandem-model rows, in percent.
  struct Row {
    const char* name;
    double fpr, de;
  };
  const Row rows[] = {{"KITTI", 10.3, 7.6}, {"BDD100K", 1.2, 2.2}};
  const double kitti = 100.0 * detection_error(0.95, rows[0].fpr / 100.0);
  bool pass = std::abs(kitti - rows[0].de) <= 0.05 + 1e-9;
  std::string detail = "KITTI " + fmt("%.2f", kitti) + " vs 7.6";
  for (std::size_t i = 1; i < std::size(rows); ++i) {
    const double de = 100.0 * detection_error(0.95, rows[i].fpr / 100.0);
    const double gap = std::abs(de - rows[i].de);
    pass = pass && gap <= 0.6;
    detail += std::string(", ") + rows[i].name + " " + fmt("%.2f", de) + " vs " + fmt("%.1f", rows[i].de) + " (gap " +
              fmt("%.2f", gap) + " pp)";
  }
  return {pass, detail};
}

Outcome monitor_identities() {
  HeadOutput a, b;
  a.boxes.resize(1, 4);
  b.boxes.resize(1, 4);
  a.boxes << 0.5, 0.5, 0.2, 0.2;
  b.boxes << 0.52, 0.5, 0.25, 0.2;
  a.logits = b.logits = Matrix::Zero(1, 3);
  const std::vector<int> k0{0};
  const double img = usm_image(a, b, k0);
  const double img_hand = std::sqrt(0.02 * 0.02) * (0.0025 * 0.0025);
  const double obj = usm_object(a.box(0), b.box(0), 0.81);
  const double obj_hand = std::sqrt(0.02) * 0.0025 / 0.9;
  bool pass = std::abs(img - 1.25e-7) <= 1e-12 && std::abs(img - img_hand) <= 1e-12;
  pass = pass && std::abs(obj - obj_hand) <= 1e-12 && fmt("%.3e", obj) == "3.928e-04";
  pass = pass && usm_image(a, a, k0) == 0.0 && usm_object(a.box(0), a.box(0), 0.5) == 0.0;

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  double worst_scale = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Box p{u(rng), u(rng), 0.3 * u(rng), 0.3 * u(rng)}, q{u(rng), u(rng), 0.3 * u(rng), 0.3 * u(rng)};
    const double c = u(rng);
    const double ref = usm_object(p, q, 1.0);
    if (ref > 0) worst_scale = std::max(worst_scale, std::abs(usm_object(p, q, c) * std::sqrt(c) / ref - 1.0));
  }
  pass = pass && worst_scale <= 1e-12;
  return {pass, "image " + fmt("%.6e", img) + ", object " + fmt("%.6e", obj) + ", C^-1/2 scaling error " +
                    fmt("%.1e", worst_scale)};
}

Outcome separation() {
  const ImageBench d = cached_bench("default.yaml", 0);
  const ImageBench v = cached_bench("vanilla.yaml", 0);
  const bool pass = d.far >= 0.90 && d.near <= 0.70 && v.far < d.far;
  return {pass, "DBEA far " + fmt("%.4f", d.far) + ", near " + fmt("%.4f", d.near) + "; vanilla far " + fmt("%.4f", v.far)};
}

Outcome ablation() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const double with = cached_bench("default.yaml", s).far;
    const double without = cached_bench("no_diversity.yaml", s).far;
    if (without < with) ++wins;
    detail += "seed " + std::to_string(s) + ": " + fmt("%.4f", without) + " vs " + fmt("%.4f", with) + "; ";
  }
  return {wins == 3, detail + std::to_string(wins) + "/3 degraded"};
}

Outcome overhead() {
  auto cfg = [](int f, int t, int e, int h, int c, ModelMode m) {
    ModelConfig x;
    x.feature_dim = f;
    x.trunk_hidden = t;
    x.embed_dim = e;
    x.head_hidden = h;
    x.num_classes = c;
    x.mode = m;
    return x;
  };
  // Counted by hand: weights plus biases per layer, box head with two hidden layers.
  struct Case {
    ModelConfig c;
    std::size_t total;
  };
  const Case cases[] = {{cfg(32, 64, 32, 32, 5, ModelMode::dbea), 9076},
                        {cfg(32, 128, 32, 32, 5, ModelMode::vanilla), 10794},
                        {cfg(5, 7, 6, 5, 3, ModelMode::dbea), 324}};
  bool pass = true;
  for (const auto& k : cases) pass = pass && param_count(k.c).total() == k.total;
  const RunConfig d = parse_config("");
  const auto r = overhead_report(d.model_for(ModelMode::vanilla), d.model_for(ModelMode::dbea));
  pass = pass && r.dbea.total() < r.vanilla.total();
  return {pass, "default dbea " + std::to_string(r.dbea.total()) + " vs vanilla " + std::to_string(r.vanilla.total()) +
                    " (" + fmt("%.1f", 100.0 * r.delta) + "% fewer)"};
}

std::map<std::string, std::string> tree_digests(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel == "manifest.json") continue;
    out[rel] = sha256_file(e.path());
  }
  return out;
}

Outcome reproducibility() {
  const fs::path base = fs::temp_directory_path() / ("dbea_accept_" + std::to_string(std::random_device{}()));
  const std::string cfg = (config_dir / "default.yaml").string();
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* run : {"a", "b"}) {
    const fs::path out = base / run;
    std::string cmd;
    for (const char* sub : {"train", "ood-bench", "report"}) {
      if (!cmd.empty()) cmd += " && ";
      cmd += "\"" + dbea_binary.string() + "\" " + sub + " --config \"" + cfg + "\" --out \"" + out.string() + "\"";
    }
    if (std::system(("(" + cmd + ") > /dev/null").c_str()) != 0) {
      fs::remove_all(base);
      return {false, "command failed: " + cmd};
    }
    trees.push_back(tree_digests(out));
  }
  fs::remove_all(base);
  std::size_t differing = 0;
  for (const auto& [rel, digest] : trees[0]) {
    auto it = trees[1].find(rel);
    if (it == trees[1].end() || it->second != digest) ++differing;
  }
  const bool pass = differing == 0 && trees[0].size() == trees[1].size() && trees[0].count("dbea/checkpoint.bin") &&
                    trees[0].count("dbea/scores_image.jsonl") && trees[0].count("report.json");
  return {pass, std::to_string(trees[0].size()) + " files compared, " + std::to_string(differing) + " differ"};
}

Outcome novel_objects() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto near = run_novel_object_benchmark(config("novel_near.yaml", s), threads);
    const auto far = run_novel_object_benchmark(config("novel_far.yaml", s), threads);
    const bool ok = near.result && far.result && far.result->auroc > near.result->auroc;
    if (ok) ++wins;
    detail += "seed " + std::to_string(s) + ": far " + (far.result ? fmt("%.4f", far.result->auroc) : "absent") +
              " vs near " + (near.result ? fmt("%.4f", near.result->auroc) : "absent") + "; ";
  }
  return {wins == 3, detail + std::to_string(wins) + "/3"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string configs, binary;
  std::vector<int> only;
  app.add_option("--configs", configs, "directory holding the run configs")->required();
  app.add_option("--dbea", binary, "path to the dbea executable")->required();
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  config_dir = configs;
  dbea_binary = binary;
  threads = threads_from_env();

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradients},
      {"matching oracle", matching},
      {"metric oracles", metric_oracles},
      {"DE@95 consistency", de_consistency},
      {"monitor identities", monitor_identities},
      {"end-to-end separation", separation},
      {"diversity ablation", ablation},
      {"overhead accounting", overhead},
      {"reproducibility", reproducibility},
      {"novel objects", novel_objects},
  };
  const std::set<int> wanted(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures;
}
