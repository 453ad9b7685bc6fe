#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dbea/box.hpp"

namespace dbea {

enum class SampleLabel { in_distribution, ood };

// Higher score means more likely OOD.
struct ScoredSample {
  double score = 0.0;
  SampleLabel label = SampleLabel::in_distribution;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 1.0;
};

// ROC with OOD as the positive class. Equal scores form one threshold block. Starts at (0, 0).
std::vector<RocPoint> roc_curve(const std::vector<ScoredSample>& samples);

// Mann-Whitney statistic with midranks for ties.
double auroc(const std::vector<ScoredSample>& samples);
// Trapezoidal area under roc_curve(); agrees with auroc() up to rounding.
double auroc_trapezoid(const std::vector<ScoredSample>& samples);

enum class PositiveClass { in, out };

// `out` ranks OOD samples by score; `in` treats in-distribution as positive with negated score.
std::vector<PrPoint> pr_curve(const std::vector<ScoredSample>& samples, PositiveClass positive);
// Step integration: sum over threshold blocks of (recall delta) * precision.
double aupr(const std::vector<ScoredSample>& samples, PositiveClass positive);

struct OperatingPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

// Highest threshold whose TPR reaches the target (scores >= threshold are flagged OOD).
OperatingPoint operating_point(const std::vector<ScoredSample>& samples, double tpr_target = 0.95);
double fpr_at_tpr(const std::vector<ScoredSample>& samples, double tpr_target = 0.95);
// 0.5 * (1 - TPR) + 0.5 * FPR at the operating point.
double de_at_tpr(const std::vector<ScoredSample>& samples, double tpr_target = 0.95);
inline double detection_error(double tpr, double fpr) { return 0.5 * (1.0 - tpr) + 0.5 * fpr; }

struct OODBenchmarkResult {
  double auroc = 0.0;
  double aupr_in = 0.0;
  double aupr_out = 0.0;
  double fpr_at_95 = 0.0;
  double de_at_95 = 0.0;
  double tpr_at_95 = 0.0;  // TPR actually achieved at the operating point
  std::size_t n_in = 0;
  std::size_t n_ood = 0;
};

OODBenchmarkResult ood_benchmark(const std::vector<ScoredSample>& samples, double tpr_target = 0.95);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct DetectionRecord {
  std::string scene_id;
  Box box;
  int label = 0;
  double confidence = 0.0;
  int matched_gt = -1;  // best-overlap ground truth in the scene, -1 if none overlaps
  double iou = 0.0;
  bool class_match = false;
};

struct PcorrResult {
  std::optional<double> all;
  std::optional<double> tp;
};

// pcorr_all over every record; pcorr_tp over records with IoU >= threshold and matching class.
// Fewer than two TP records, or zero variance, leaves the value absent.
PcorrResult pcorr_split(const std::vector<DetectionRecord>& records, double iou_tp_threshold = 0.5);

struct GroundTruthRecord {
  std::string scene_id;
  int class_id = 0;
  Box box;
};

// AP of one class at one IoU threshold: confidence-sorted greedy matching (each GT consumed
// once, best IoU first), all-point interpolated precision. nullopt if the class has no GT.
std::optional<double> class_average_precision(const std::vector<DetectionRecord>& predictions,
                                              const std::vector<GroundTruthRecord>& gts, int class_id, double iou_threshold);

struct ApResult {
  std::optional<double> ap50;
  std::optional<double> map;  // mean over IoU 0.50:0.05:0.95 and classes with GT
};

ApResult average_precision(const std::vector<DetectionRecord>& predictions, const std::vector<GroundTruthRecord>& gts);

std::vector<double> coco_iou_thresholds();

}  // namespace dbea
