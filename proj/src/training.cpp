#include "dbea/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "dbea/errors.hpp"
#include "dbea/rng.hpp"

namespace dbea {

TandemOutput slice_output(const TandemOutput& out, Eigen::Index first, Eigen::Index count) {
  TandemOutput s;
  s.alpha = {out.alpha.boxes.middleRows(first, count), out.alpha.logits.middleRows(first, count)};
  s.beta = {out.beta.boxes.middleRows(first, count), out.beta.logits.middleRows(first, count)};
  s.fused.boxes = out.fused.boxes.middleRows(first, count);
  s.fused.class_probs = out.fused.class_probs.middleRows(first, count);
  s.fused.confidence = out.fused.confidence.segment(first, count);
  s.fused.labels.assign(out.fused.labels.begin() + first, out.fused.labels.begin() + first + count);
  return s;
}

std::vector<HeadGrad> batch_loss(const TandemParams& params, const TandemOutput& out, const std::vector<const Sample*>& batch,
                                 const LossWeights& w, std::vector<SceneLoss>* scene_losses) {
  const Eigen::Index q = params.config.queries;
  const Eigen::Index rows = out.alpha.boxes.rows();
  if (rows != q * static_cast<Eigen::Index>(batch.size())) throw ShapeError("batch output rows");
  const bool tandem = params.config.mode == ModelMode::dbea;
  const double inv_b = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());

  std::vector<HeadGrad> grads(params.heads.size());
  for (auto& g : grads) g = {Matrix::Zero(rows, 4), Matrix::Zero(rows, params.config.logit_dim())};

  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Eigen::Index first = static_cast<Eigen::Index>(b) * q;
    const TandemOutput s = slice_output(out, first, q);
    const auto& gt = batch[b]->scene.objects;
    SceneLoss sl;
    sl.match = hungarian_match(s.fused, gt, w.match_weights());
    const DbeaLoss l = dbea_loss(s, sl.match, gt, w, tandem);
    sl.breakdown = l.breakdown;
    grads[0].boxes.middleRows(first, q) = l.alpha.boxes * inv_b;
    grads[0].logits.middleRows(first, q) = l.alpha.logits * inv_b;
    if (tandem) {
      grads[1].boxes.middleRows(first, q) = l.beta.boxes * inv_b;
      grads[1].logits.middleRows(first, q) = l.beta.logits * inv_b;
    }
    if (scene_losses) scene_losses->push_back(std::move(sl));
  }
  return grads;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "train/shuffle", static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

bool all_finite(const std::vector<MlpParams<double>>& groups) {
  for (const auto& g : groups) {
    for (const auto& l : g.layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
  }
  return true;
}

}  // namespace

double tandem_ramp(const TrainSettings& settings, int epoch) {
  if (epoch <= settings.tandem_delay_epochs) return 0.0;
  if (settings.tandem_ramp_epochs <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch - settings.tandem_delay_epochs) /
                           static_cast<double>(settings.tandem_ramp_epochs));
}

TrainResult train_model(const ModelConfig& model, const TrainSettings& settings, const Split& train,
                        const EpochCallback& on_epoch) {
  model.validate();
  settings.loss.validate();
  if (settings.epochs < 0) throw ConfigError("training.epochs: must be >= 0");
  if (settings.batch_size < 1) throw ConfigError("training.batch_size: must be >= 1");
  if (settings.tandem_delay_epochs < 0) throw ConfigError("training.tandem_delay_epochs: must be >= 0");
  if (settings.tandem_ramp_epochs < 0) throw ConfigError("training.tandem_ramp_epochs: must be >= 0");
  for (const auto& s : train) {
    if (s.scene.regime != Regime::in_distribution) {
      throw DataError("training split contains a " + std::string(to_string(s.scene.regime)) + " scene (" +
                      s.scene.scene_id + ")");
    }
    if (s.queries.features.rows() != model.queries || s.queries.features.cols() != model.feature_dim) {
      throw ShapeError("training scene " + s.scene.scene_id + " does not match the model query/feature shape");
    }
  }

  TrainResult res;
  res.params = init_params(model, settings.seed);
  auto groups = res.params.groups();
  auto state = make_optim_state<double>(groups, settings.optimizer);
  const Eigen::Index q = model.queries;

  TrainResult last_good = res;
  for (int epoch = 1; epoch <= settings.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), settings.seed, epoch);
    LossBreakdown sum;
    std::size_t seen = 0;
    LossWeights weights = settings.loss;
    const double ramp = tandem_ramp(settings, epoch);
    weights.lambda_ta *= ramp;
    weights.lambda_tq *= ramp;
    weights.lambda_div *= ramp;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(settings.batch_size));
      std::vector<const Sample*> batch;
      Matrix features(static_cast<Eigen::Index>(end - start) * q, model.feature_dim);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train[order[i]];
        features.middleRows(static_cast<Eigen::Index>(i - start) * q, q) = s.queries.features;
        batch.push_back(&s);
      }
      std::optional<ModelForward> fw;
      try {
        fw = model_forward_train(res.params, features);
      } catch (const DivergenceError& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch), std::move(last_good));
      }
      std::vector<SceneLoss> losses;
      const auto head_grads = batch_loss(res.params, fw->output, batch, weights, &losses);
      for (const auto& l : losses) {
        if (!std::isfinite(l.breakdown.total)) {
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch), std::move(last_good));
        }
      }
      const auto grads = model_backward(res.params, fw->tape, head_grads);
      adamw_step<double>(groups, grads, state);
      res.params.set_groups(groups);
      if (!all_finite(groups)) {
        throw TrainingDiverged("non-finite parameters at epoch " + std::to_string(epoch), std::move(last_good));
      }
      for (const auto& l : losses) {
        sum.base += l.breakdown.base;
        sum.ta += l.breakdown.ta;
        sum.tq += l.breakdown.tq;
        sum.tandem += l.breakdown.tandem;
        sum.diversity += l.breakdown.diversity;
        sum.total += l.breakdown.total;
      }
      seen += losses.size();
    }
    EpochLog log;
    log.epoch = epoch;
    if (seen > 0) {
      const double inv = 1.0 / static_cast<double>(seen);
      log.mean = {sum.base * inv, sum.ta * inv, sum.tq * inv, sum.tandem * inv, sum.diversity * inv, sum.total * inv};
    }
    res.log.push_back(log);
    last_good = res;
    if (on_epoch) on_epoch(log, res.params);
  }
  return res;
}

}  // namespace dbea
