#pragma once

#include <span>
#include <vector>

#include "dbea/box.hpp"
#include "dbea/model.hpp"
#include "dbea/world.hpp"

namespace dbea {

struct ObjectScore {
  int index = 0;  // query index of the detection
  double usm = 0.0;
  double confidence = 0.0;
};

struct UncertaintyScore {
  double image_usm = 0.0;
  std::vector<ObjectScore> per_object;  // one per top-K detection, in top-K order
  int top_k_used = 0;
};

struct MonitorOptions {
  // Apply the outer square root to the centered xy term, as in the image-level formula. Off
  // gives xy_centered * wh_centered (ablation).
  bool outer_root = true;
};

// Per detection i over the selected set:
//   xy_i = sqrt(dx^2 + dy^2), wh_i = dw^2 + dh^2
//   U = mean_i( sqrt(xy_i * mean(xy)) * wh_i * mean(wh) )
double usm_image(const HeadOutput& alpha, const HeadOutput& beta, std::span<const int> topk,
                 const MonitorOptions& opt = {});

// sqrt(xy) * wh / sqrt(C) for one detection.
double usm_object(const Box& alpha, const Box& beta, double confidence);

// Scores one scene's raw head outputs; top-K membership comes from fused confidence.
UncertaintyScore score_scene(const TandemOutput& out, int top_k, const MonitorOptions& opt = {});

// Scene-ordered scores for a split. Parallel over scenes; output order follows the input.
std::vector<UncertaintyScore> score_batch(const TandemParams& params, const Split& split, const MonitorOptions& opt = {},
                                          int threads = 1);

}  // namespace dbea
