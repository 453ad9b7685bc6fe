#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbea/evaluation.hpp"
#include "dbea/model.hpp"
#include "dbea/world.hpp"

namespace dbea {

// Shortest decimal that is exact to 17 significant digits ("%.17g").
std::string format_double(double v);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Dataset split, one scene per line:
//   {"scene_id": ..., "regime": ..., "objects": [{"class_id": k, "box": [cx, cy, w, h]}], "features": [[...], ...]}
// Query-to-object assignment is training metadata and is not exported.
std::string dump_split(const Split& split);
Split parse_split(const std::string& text, const std::string& source = "<memory>");

// Score dump, one scene per line:
//   {"scene_id", "regime", "image_usm", "ood_score", "per_object": [{"index", "usm", "confidence", "ood_score"}]}
// ood_score is the value the benchmark ranks by (U_SM for DBEA, 1 - confidence for vanilla).
struct ScoreRecord {
  std::string scene_id;
  Regime regime = Regime::in_distribution;
  double image_usm = 0.0;
  double ood_score = 0.0;
  struct Object {
    int index = 0;
    double usm = 0.0;
    double confidence = 0.0;
    double ood_score = 0.0;
  };
  std::vector<Object> per_object;
};
std::vector<ScoreRecord> score_records(const std::vector<SceneEval>& evals, ModelMode mode);
std::string dump_scores(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> parse_scores(const std::string& text, const std::string& source = "<memory>");

// Detection dump, one detection per line with the DetectionRecord fields.
std::string dump_detections(const std::vector<DetectionRecord>& records);
std::vector<DetectionRecord> parse_detections(const std::string& text, const std::string& source = "<memory>");

// Checkpoint layout (little endian):
//   "DBEACKPT" | u32 format_version | u32 header bytes | header JSON (ModelConfig) |
//   u32 array count | per array: u32 name bytes, name, u32 rows, u32 cols, rows*cols f64 |
//   32-byte SHA-256 of everything before it.
inline constexpr std::uint32_t checkpoint_format_version = 1;

std::string encode_checkpoint(const TandemParams& params);
// Throws DataError on bad magic, version, truncation or digest mismatch, and ShapeError when the
// stored config differs from `expected` or arrays do not fit the architecture.
TandemParams decode_checkpoint(const std::string& bytes, const std::optional<ModelConfig>& expected = std::nullopt);

void save_checkpoint(const TandemParams& params, const std::filesystem::path& path);
TandemParams load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace dbea
