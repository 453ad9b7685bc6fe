// dbea command line: one subcommand per experiment family.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "dbea/config.hpp"
#include "dbea/errors.hpp"
#include "dbea/harness.hpp"
#include "dbea/parallel.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string level = "image";
  std::optional<std::string> checkpoint;
  std::optional<std::string> detections;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "YAML run config")->required();
  cmd->add_option("--seed", o.seed, "override the master seed");
  cmd->add_option("--out", o.out, "override the output directory");
  cmd->add_option("--checkpoint", o.checkpoint, "checkpoint path (default <out>/<mode>/checkpoint.bin)");
}

void print_ood(const dbea::OodBenchmark& b) {
  for (const auto& r : b.runs) {
    std::printf("%-9s AUROC %.4f  AUPR-In %.4f  AUPR-Out %.4f  FPR@95 %.4f  DE@95 %.4f  (n_in %zu, n_ood %zu)\n",
                r.name.c_str(), r.result.auroc, r.result.aupr_in, r.result.aupr_out, r.result.fpr_at_95, r.result.de_at_95,
                r.result.n_in, r.result.n_ood);
  }
}

std::string opt(const std::optional<double>& v) {
  if (!v) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tandem-head OOD detection harness"};
  app.require_subcommand(1);
  Options o;
  const char* names[][2] = {{"generate", "write the dataset splits as JSON lines"},
                            {"train", "train the configured model and write a checkpoint"},
                            {"eval", "detection metrics on the in-distribution test split"},
                            {"ood-bench", "ID vs near/far OOD benchmark and score dump"},
                            {"novel-bench", "train with held-out classes and score novel objects"},
                            {"overhead", "parameter counts of vanilla vs DBEA"},
                            {"report", "collect results into report.json/csv and plots"}};
  for (const auto& [name, help] : names) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, o);
    if (std::string(name) == "ood-bench") {
      cmd->add_option("--level", o.level, "image or object")->check(CLI::IsMember({"image", "object"}));
    }
    if (std::string(name) == "eval") cmd->add_option("--detections", o.detections, "evaluate an existing detection dump");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(dbea::ExitCode::config);
  }

  try {
    dbea::RunConfig cfg = dbea::load_config(o.config);
    if (o.seed) {
      cfg.seed = *o.seed;
      cfg.training.seed = *o.seed;
    }
    if (o.out) cfg.out_dir = *o.out;
    const int threads = dbea::threads_from_env();
    std::optional<std::filesystem::path> ckpt;
    if (o.checkpoint) ckpt = *o.checkpoint;
    const std::string cmd = app.get_subcommands().front()->get_name();

    if (cmd == "generate") {
      dbea::generate_command(cfg, threads);
      std::printf("wrote %s/data\n", cfg.out_dir.c_str());
    } else if (cmd == "train") {
      const auto r = dbea::train_command(cfg, ckpt, threads);
      for (const auto& l : r.result.log) {
        std::printf("epoch %3d  base %.4f  ta %.4f  tq %.4f  div %.4f  total %.4f\n", l.epoch, l.mean.base, l.mean.ta,
                    l.mean.tq, l.mean.diversity, l.mean.total);
      }
      std::printf("checkpoint %s\n", r.checkpoint.string().c_str());
    } else if (cmd == "eval") {
      dbea::DetectionMetrics m;
      if (o.detections) {
        const auto sizes = dbea::split_sizes(cfg.dataset);
        const auto test = dbea::generate_split(cfg.dataset, cfg.seed, "test", dbea::Regime::in_distribution, sizes.test, threads);
        m = dbea::evaluate_detection_dump(*o.detections, test);
      } else {
        m = dbea::eval_command(cfg, ckpt, threads).metrics;
      }
      std::printf("mAP %s  AP50 %s  PCorr-all %s  PCorr-tp %s  (%zu detections, %zu ground truths)\n", opt(m.map).c_str(),
                  opt(m.ap50).c_str(), opt(m.pcorr_all).c_str(), opt(m.pcorr_tp).c_str(), m.detections, m.ground_truths);
    } else if (cmd == "ood-bench") {
      print_ood(dbea::ood_bench_command(cfg, dbea::parse_level(o.level), ckpt, threads));
    } else if (cmd == "novel-bench") {
      const auto b = dbea::novel_bench_command(cfg, threads);
      std::printf("novel detections %zu  known detections %zu  AUROC %s\n", b.novel_detections, b.known_detections,
                  b.result ? opt(b.result->auroc).c_str() : "absent");
    } else if (cmd == "overhead") {
      const auto r = dbea::overhead_command(cfg);
      std::printf("vanilla %zu  dbea %zu  trunk savings %lld  head duplication %lld  delta %.4f\n", r.vanilla.total(),
                  r.dbea.total(), r.trunk_savings, r.head_overhead, r.delta);
    } else if (cmd == "report") {
      const auto rows = dbea::report_command(cfg);
      std::cout << dbea::report_csv(rows);
    }
    return 0;
  } catch (const dbea::Error& e) {
    std::fprintf(stderr, "dbea: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dbea: %s\n", e.what());
    return static_cast<int>(dbea::ExitCode::data);
  }
}
