#pragma once

#include <string>
#include <vector>

#include "dbea/metrics.hpp"
#include "dbea/model.hpp"
#include "dbea/monitor.hpp"
#include "dbea/world.hpp"

namespace dbea {

// Inference results for one scene: monitor scores plus fused top-K detections.
struct SceneEval {
  std::string scene_id;
  Regime regime = Regime::in_distribution;
  UncertaintyScore usm;
  std::vector<DetectionRecord> detections;  // top-K order
};

std::vector<SceneEval> run_inference(const TandemParams& params, const Split& split, const MonitorOptions& opt = {},
                                     int threads = 1);

// Fused top-K detections annotated with their best-overlap ground truth.
std::vector<DetectionRecord> detection_records(const TandemOutput& out, const Scene& scene, int top_k);

std::vector<GroundTruthRecord> ground_truth_records(const Split& split);

enum class Level { image, object };
std::string_view to_string(Level l);
Level parse_level(std::string_view s);

// OOD score of a scene: U_SM for DBEA models, 1 - mean top-K confidence for vanilla models.
double image_ood_score(const SceneEval& e, ModelMode mode);
// Per-detection score: object-level U_SM for DBEA, 1 - confidence for vanilla.
double object_ood_score(const SceneEval& e, std::size_t det, ModelMode mode);

std::vector<ScoredSample> image_samples(const std::vector<SceneEval>& id, const std::vector<SceneEval>& ood, ModelMode mode);
std::vector<ScoredSample> object_samples(const std::vector<SceneEval>& id, const std::vector<SceneEval>& ood, ModelMode mode);

// Novel-object labelling: detections overlapping held-out ground truth (IoU >= threshold) are
// OOD, detections overlapping known-class ground truth are in-distribution, everything else is
// dropped. The predicted class plays no part.
struct NovelSample {
  std::string scene_id;
  std::size_t detection = 0;
  ScoredSample sample;
};
std::vector<NovelSample> novel_object_samples(const std::vector<SceneEval>& evals, const Split& split,
                                              const std::vector<int>& held_out, ModelMode mode, double iou_threshold = 0.5);

struct DetectionMetrics {
  std::optional<double> map;
  std::optional<double> ap50;
  std::optional<double> pcorr_all;
  std::optional<double> pcorr_tp;
  std::size_t detections = 0;
  std::size_t ground_truths = 0;
};

DetectionMetrics detection_metrics(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruthRecord>& gts);

}  // namespace dbea
