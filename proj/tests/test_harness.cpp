#include <doctest.h>

#include <filesystem>
#include <random>

#include "dbea/config.hpp"
#include "dbea/harness.hpp"
#include "dbea/io.hpp"
#include "dbea/training.hpp"

using namespace dbea;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("dbea_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny(const fs::path& out) {
  RunConfig c = parse_config(R"(
dataset:
  feature_dim: 8
  map_hidden: 12
  queries: 8
  num_classes: 3
  near_class_prior: [0.5, 0.3, 0.2]
  min_objects: 2
  max_objects: 5
  id_scenes: 40
  near_ood_scenes: 10
  far_ood_scenes: 10
model:
  trunk_hidden: 10
  embed_dim: 8
  head_hidden: 6
  top_k: 3
baseline:
  trunk_hidden: 14
training:
  epochs: 3
  batch_size: 4
  tandem_delay_epochs: 1
  tandem_ramp_epochs: 1
)");
  c.out_dir = out.string();
  return c;
}

Split sample_split(int n = 3) {
  RunConfig c = tiny("unused");
  return generate_split(c.dataset, 0, "test", Regime::near_ood, n);
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig d = parse_config("");
  CHECK(d.model.top_k == 10);
  CHECK(d.training.loss.lambda_div == 40.0);
  CHECK(parse_config("seed: 7").seed == 7);
  CHECK(dump_config(parse_config(dump_config(d))) == dump_config(d));

  const RunConfig t = tiny("x");
  CHECK(dump_config(parse_config(dump_config(t))) == dump_config(t));

  CHECK_THROWS_AS(parse_config("bogus: 1"), ConfigError);
  CHECK_THROWS_AS(parse_config("loss:\n  lambda_tq: -1"), ConfigError);
  CHECK_THROWS_AS(parse_config("model:\n  top_k: nope"), ConfigError);
  CHECK_THROWS_AS(parse_config("model:\n  top_k: 0"), ConfigError);
  try {
    parse_config("loss:\n  lamda_ta: 1");
    FAIL("accepted a misspelt key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lamda_ta") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/dbea.yaml"), ConfigError);
}

TEST_CASE("checkpoint round trip and rejection") {
  const RunConfig c = tiny("x");
  const TandemParams p = init_params(c.model_for(ModelMode::dbea), 3);
  const std::string bytes = encode_checkpoint(p);
  const TandemParams q = decode_checkpoint(bytes, p.config);
  CHECK(flatten(q.groups()) == flatten(p.groups()));
  CHECK(encode_checkpoint(q) == bytes);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 10)), DataError);
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), DataError);
  std::string version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(decode_checkpoint(version), DataError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), DataError);

  ModelConfig other = p.config;
  other.head_hidden += 1;
  CHECK_THROWS_AS(decode_checkpoint(bytes, other), ShapeError);

  TempDir dir;
  save_checkpoint(p, dir.path / "ck.bin");
  CHECK(read_file(dir.path / "ck.bin") == bytes);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.bin"), DataError);
}

TEST_CASE("dataset and dump round trips") {
  const Split s = sample_split();
  const std::string text = dump_split(s);
  const Split r = parse_split(text);
  REQUIRE(r.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(r[i].scene.scene_id == s[i].scene.scene_id);
    CHECK(r[i].scene.regime == s[i].scene.regime);
    CHECK(r[i].scene.objects == s[i].scene.objects);
    CHECK(r[i].queries.features == s[i].queries.features);
  }
  CHECK(dump_split(r) == text);
  CHECK(format_double(0.1) == "0.10000000000000001");

  try {
    parse_split(text + "{\"scene_id\": 3}\n", "bad.jsonl");
    FAIL("accepted a malformed line");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:4") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_split("not json\n"), DataError);

  ScoreRecord rec;
  rec.scene_id = "near-000001";
  rec.regime = Regime::near_ood;
  rec.image_usm = 1.0 / 3.0;
  rec.ood_score = 2.5e-9;
  rec.per_object = {{4, 0.125, 0.75, 0.125}};
  const auto back = parse_scores(dump_scores({rec}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].image_usm == rec.image_usm);
  CHECK(back[0].ood_score == rec.ood_score);
  CHECK(back[0].per_object[0].index == 4);
  CHECK(dump_scores(back) == dump_scores({rec}));

  DetectionRecord d;
  d.scene_id = "id-1";
  d.box = {0.1, 0.2, 0.3, 0.4};
  d.label = 2;
  d.confidence = 0.9;
  d.matched_gt = 1;
  d.iou = 0.6;
  d.class_match = true;
  CHECK(dump_detections(parse_detections(dump_detections({d}))) == dump_detections({d}));
  CHECK_THROWS_AS(parse_detections("{}\n"), DataError);
}

TEST_CASE("report json and csv") {
  ReportRow a;
  a.model = "dbea/image/far_ood";
  a.auroc = 0.987654321;
  a.fpr_at_95 = 0.0;
  ReportRow b;
  b.model = "vanilla";
  b.map = 0.25;
  b.pcorr_tp = -0.125;
  const std::vector<ReportRow> rows{a, b};
  CHECK(parse_report_json(report_json(rows)) == rows);
  CHECK(parse_report_json(report_json({})).empty());

  const std::string csv = report_csv(rows);
  CHECK(csv.substr(0, csv.find('\n')) == "model,mAP,AP50,PCorr-all,PCorr-tp,AUROC,AUPR-In,AUPR-Out,FPR@95,DE@95");
  CHECK(csv.find("dbea/image/far_ood,,,,,0.9877,,,0.0000,") != std::string::npos);
}

TEST_CASE("histograms and curves") {
  std::vector<ScoreRecord> scores;
  for (int i = 0; i < 50; ++i) {
    ScoreRecord r;
    r.scene_id = std::to_string(i);
    r.regime = i % 2 ? Regime::far_ood : Regime::in_distribution;
    r.ood_score = i * 0.37;
    scores.push_back(r);
  }
  const Histogram h = score_histogram(scores, Level::image, 7);
  REQUIRE(h.counts.size() == 2);
  std::size_t total = 0;
  for (const auto& series : h.counts) {
    CHECK(series.size() == 7);
    for (auto c : series) total += c;
  }
  CHECK(total == scores.size());
  CHECK(histogram_svg(h, "t").find("<svg") != std::string::npos);

  std::vector<ScoredSample> perfect;
  for (int i = 0; i < 5; ++i) perfect.push_back({10.0 + i, SampleLabel::ood});
  for (int i = 0; i < 5; ++i) perfect.push_back({-1.0 - i, SampleLabel::in_distribution});
  const auto roc = roc_curve(perfect);
  CHECK(auroc_from_roc_csv(roc_csv(roc)) == 1.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoredSample> mixed;
  for (int i = 0; i < 80; ++i) mixed.push_back({u(rng), i % 4 ? SampleLabel::in_distribution : SampleLabel::ood});
  CHECK(auroc_from_roc_csv(roc_csv(roc_curve(mixed))) == doctest::Approx(auroc(mixed)).epsilon(1e-9));
  CHECK(roc_svg({{"a", roc}}, "t").find("</svg>") != std::string::npos);
}

TEST_CASE("overhead") {
  const RunConfig c = tiny("x");
  const OverheadReport same = overhead_report(c.model, c.model);
  CHECK(same.delta == 0.0);
  CHECK(same.trunk_savings == 0);
  const OverheadReport r = overhead_report(c.model_for(ModelMode::vanilla), c.model_for(ModelMode::dbea));
  CHECK(r.vanilla.total() == param_count(c.model_for(ModelMode::vanilla)).total());
  CHECK(r.head_overhead == static_cast<long long>(r.dbea.per_head()));
  CHECK(r.delta == doctest::Approx((double(r.vanilla.total()) - double(r.dbea.total())) / double(r.vanilla.total())));
}

TEST_CASE("training determinism and edge cases") {
  const RunConfig c = tiny("x");
  const auto sizes = split_sizes(c.dataset);
  const Split train = generate_split(c.dataset, c.seed, "train", Regime::in_distribution, sizes.train);
  const ModelConfig m = c.model_for(ModelMode::dbea);

  TrainSettings zero = c.training;
  zero.epochs = 0;
  const TrainResult z = train_model(m, zero, train);
  CHECK(z.log.empty());
  CHECK(encode_checkpoint(z.params) == encode_checkpoint(init_params(m, zero.seed)));

  const TrainResult a = train_model(m, c.training, train);
  const TrainResult b = train_model(m, c.training, train);
  CHECK(encode_checkpoint(a.params) == encode_checkpoint(b.params));
  CHECK(a.log.size() == 3);

  CHECK(epoch_order(10, 1, 1) == epoch_order(10, 1, 1));
  CHECK(epoch_order(10, 1, 1) != epoch_order(10, 1, 2));
  const Split near = generate_split(c.dataset, c.seed, "near", Regime::near_ood, 4);
  CHECK_THROWS(train_model(m, c.training, near));

  TrainSettings wild = c.training;
  wild.optimizer.learning_rate = 1e300;
  try {
    train_model(m, wild, train);
    FAIL("no divergence reported");
  } catch (const TrainingDiverged& e) {
    for (const auto& g : e.last_good().params.groups()) {
      for (const auto& l : g.layers) CHECK(l.weight.allFinite());
    }
  }
}

TEST_CASE("commands write a consistent run directory") {
  TempDir dir;
  const RunConfig c = tiny(dir.path);
  generate_command(c, 1);
  CHECK(fs::exists(dir.path / "data" / "train.jsonl"));
  CHECK(fs::exists(dir.path / "data" / "far_ood.jsonl"));

  const TrainOutcome t = train_command(c, std::nullopt, 1);
  CHECK(fs::exists(t.checkpoint));
  const DetectionEvaluation ev = eval_command(c, std::nullopt, 1);
  const auto sizes = split_sizes(c.dataset);
  const Split test = generate_split(c.dataset, c.seed, "test", Regime::in_distribution, sizes.test);
  const DetectionMetrics from_dump = evaluate_detection_dump(mode_dir(c) / "detections.jsonl", test);
  CHECK(from_dump.map == ev.metrics.map);
  CHECK(from_dump.ap50 == ev.metrics.ap50);
  CHECK(from_dump.detections == ev.metrics.detections);

  const OodBenchmark ob = ood_bench_command(c, Level::image, std::nullopt, 1);
  REQUIRE(ob.runs.size() == 2);
  CHECK(ob.scores.size() == std::size_t(sizes.test + 20));
  CHECK(parse_scores(read_file(mode_dir(c) / "scores_image.jsonl")).size() == ob.scores.size());
  overhead_command(c);
  const auto rows = report_command(c);
  // Detection metrics ride on the OOD rows of the same mode.
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].map == ev.metrics.map);
  CHECK(rows[0].auroc.has_value());
  CHECK(parse_report_json(read_file(dir.path / "report.json")) == rows);

  Manifest m(dir.path);
  m.load();
  for (const auto& [rel, digest] : m.files()) CHECK(sha256_file(dir.path / rel) == digest);
  CHECK(m.files().count("report.csv") == 1);
  CHECK(m.files().count("dbea/checkpoint.bin") == 1);

  RunConfig wrong = c;
  wrong.model.head_hidden += 2;
  CHECK_THROWS_AS(ood_bench_command(wrong, Level::image, std::nullopt, 1), ShapeError);

  RunConfig no_novel = c;
  CHECK_THROWS_AS(novel_bench_command(no_novel, 1), ConfigError);
}
