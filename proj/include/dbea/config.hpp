#pragma once

#include <cstdint>
#include <string>

#include "dbea/losses.hpp"
#include "dbea/model.hpp"
#include "dbea/monitor.hpp"
#include "dbea/training.hpp"
#include "dbea/world.hpp"

namespace dbea {

// Everything a run needs. Model input/query/class dimensions are taken from the dataset section so
// the two cannot disagree.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  DatasetConfig dataset;
  ModelConfig model;             // mode and widths of the model being trained
  int baseline_trunk_hidden = 128;  // vanilla trunk width used for comparisons and overhead
  TrainSettings training;           // loss weights and optimizer live here
  MonitorOptions monitor;

  // Model config for the given mode. Vanilla uses the baseline trunk width.
  ModelConfig model_for(ModelMode mode) const;
  void validate() const;
};

// Parses a nested YAML document. Unknown keys, wrong types and constraint violations raise
// ConfigError naming the key path. An empty document yields the defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical YAML rendering of every field. parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& cfg);

}  // namespace dbea
