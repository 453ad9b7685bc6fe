#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dbea/adamw.hpp"
#include "dbea/errors.hpp"
#include "dbea/losses.hpp"
#include "dbea/model.hpp"
#include "dbea/world.hpp"

namespace dbea {

struct TrainSettings {
  int epochs = 50;
  int batch_size = 8;
  AdamWSettings optimizer;
  LossWeights loss;
  std::uint64_t seed = 0;  // initialization and shuffling
  // Tandem and diversity weights are zero for the first tandem_delay_epochs, then ramp linearly
  // to full strength over tandem_ramp_epochs. Quelling applied before the matching has settled
  // pushes every query apart, object queries included.
  int tandem_delay_epochs = 20;
  int tandem_ramp_epochs = 20;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  LossBreakdown mean;
};

struct TrainResult {
  TandemParams params;
  std::vector<EpochLog> log;
};

// Loss and gradient of one scene slice of a batched forward pass.
struct SceneLoss {
  LossBreakdown breakdown;
  MatchAssignment match;
};

// Slices rows [first, first + count) out of a batched output.
TandemOutput slice_output(const TandemOutput& out, Eigen::Index first, Eigen::Index count);

// Computes the loss for each scene in the batch and returns the summed head gradients scaled by
// 1 / batch size, plus the per-scene breakdowns.
std::vector<HeadGrad> batch_loss(const TandemParams& params, const TandemOutput& out, const std::vector<const Sample*>& batch,
                                 const LossWeights& w, std::vector<SceneLoss>* scene_losses);

// Non-finite loss or parameters. Carries the parameters at the end of the last complete epoch.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, TrainResult last_good)
      : DivergenceError(what), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const noexcept { return last_good_; }

 private:
  TrainResult last_good_;
};

using EpochCallback = std::function<void(const EpochLog&, const TandemParams&)>;

// Multiplier on the tandem and diversity weights for a 1-based epoch.
double tandem_ramp(const TrainSettings& settings, int epoch);

// Serial and deterministic: scene order per epoch is a seeded shuffle. Training data must be
// in-distribution; any other regime is rejected before the first step.

TrainResult train_model(const ModelConfig& model, const TrainSettings& settings, const Split& train,
                        const EpochCallback& on_epoch = {});

// Training iterator order for an epoch (exposed for inspection in tests).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace dbea
