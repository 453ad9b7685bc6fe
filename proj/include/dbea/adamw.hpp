#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dbea/errors.hpp"
#include "dbea/mlp.hpp"

namespace dbea {

struct AdamWSettings {
  double learning_rate = 0.0002;
  double weight_decay = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct OptimState {
  std::uint64_t step = 0;
  std::vector<MlpParams<Scalar>> first_moment;
  std::vector<MlpParams<Scalar>> second_moment;
  AdamWSettings settings;
};

template <typename Scalar>
OptimState<Scalar> make_optim_state(std::span<const MlpParams<Scalar>> params, const AdamWSettings& settings) {
  OptimState<Scalar> s;
  s.settings = settings;
  for (const auto& p : params) {
    s.first_moment.push_back(p.zeros_like());
    s.second_moment.push_back(p.zeros_like());
  }
  return s;
}

// One AdamW update with decoupled weight decay:
//   w <- w - lr * wd * w - lr * m_hat / (sqrt(v_hat) + eps)
// Rejects non-finite gradients before touching any state.
template <typename Scalar>
void adamw_step(std::span<MlpParams<Scalar>> params, std::span<const MlpParams<Scalar>> grads,
                OptimState<Scalar>& state) {
  const auto& hp = state.settings;
  if (!(hp.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be > 0");
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adamw: parameter, gradient and moment groups differ in count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].layers.size() != params[i].layers.size()) throw ShapeError("adamw: gradient depth mismatch");
    for (std::size_t k = 0; k < params[i].layers.size(); ++k) {
      const auto& g = grads[i].layers[k];
      const auto& p = params[i].layers[k];
      require_shape(g.weight, p.weight.rows(), p.weight.cols(), "adamw weight gradient");
      require_shape(state.first_moment[i].layers[k].weight, p.weight.rows(), p.weight.cols(), "adamw moment");
      if (g.bias.size() != p.bias.size()) throw ShapeError("adamw bias gradient");
      if (!g.weight.allFinite() || !g.bias.allFinite()) {
        throw DivergenceError("non-finite gradient in parameter group " + std::to_string(i));
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const Scalar lr = static_cast<Scalar>(hp.learning_rate);
  const Scalar decay = static_cast<Scalar>(1.0 - hp.learning_rate * hp.weight_decay);
  const Scalar b1 = static_cast<Scalar>(hp.beta1);
  const Scalar b2 = static_cast<Scalar>(hp.beta2);
  const Scalar bc1 = static_cast<Scalar>(1.0 - std::pow(hp.beta1, t));
  const Scalar bc2 = static_cast<Scalar>(1.0 - std::pow(hp.beta2, t));
  const Scalar eps = static_cast<Scalar>(hp.eps);

  auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    w *= decay;
    w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
  };

  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].layers.size(); ++k) {
      auto& p = params[i].layers[k];
      const auto& g = grads[i].layers[k];
      auto& m = state.first_moment[i].layers[k];
      auto& v = state.second_moment[i].layers[k];
      update(p.weight, g.weight, m.weight, v.weight);
      update(p.bias, g.bias, m.bias, v.bias);
    }
  }
}

}  // namespace dbea
