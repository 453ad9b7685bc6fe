#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "dbea/errors.hpp"
#include "dbea/tensor.hpp"

namespace dbea {

enum class Activation { identity, relu, sigmoid };

template <typename Scalar>
struct Layer {
  Tensor2<Scalar> weight;  // in x out, applied as X * W
  Vector<Scalar> bias;     // out
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }
};

template <typename Scalar>
struct MlpParams {
  std::vector<Layer<Scalar>> layers;

  Eigen::Index in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  // Adjacent layers chain and biases match their layer width.
  void validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.bias.size() != l.out_dim()) throw ShapeError("layer " + std::to_string(k) + " bias width");
      if (k + 1 < layers.size() && l.out_dim() != layers[k + 1].in_dim()) {
        throw ShapeError("layer " + std::to_string(k) + " output does not chain into layer " +
                         std::to_string(k + 1));
      }
    }
  }

  // Same shapes, all zeros. Used for gradients and optimizer moments.
  MlpParams zeros_like() const {
    MlpParams z;
    z.layers.reserve(layers.size());
    for (const auto& l : layers) {
      z.layers.push_back({Tensor2<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                          Vector<Scalar>::Zero(l.bias.size()), l.activation});
    }
    return z;
  }
};

struct LayerSpec {
  Eigen::Index out_dim;
  Activation activation;
};

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename Scalar, typename Rng>
MlpParams<Scalar> make_mlp(Eigen::Index in_dim, const std::vector<LayerSpec>& specs, Rng& rng) {
  MlpParams<Scalar> p;
  Eigen::Index fan_in = in_dim;
  for (const auto& s : specs) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + s.out_dim));
    std::uniform_real_distribution<double> u(-limit, limit);
    Layer<Scalar> l;
    l.weight.resize(fan_in, s.out_dim);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = static_cast<Scalar>(u(rng));
    l.bias = Vector<Scalar>::Zero(s.out_dim);
    l.activation = s.activation;
    p.layers.push_back(std::move(l));
    fan_in = s.out_dim;
  }
  return p;
}

template <typename Scalar>
struct MlpCache {
  std::vector<Tensor2<Scalar>> inputs;   // input to each layer
  std::vector<Tensor2<Scalar>> outputs;  // post-activation output of each layer
};

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  // Split on sign so exp never overflows.
  if (x >= Scalar(0)) {
    const Scalar e = std::exp(-x);
    return Scalar(1) / (Scalar(1) + e);
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
void apply_activation(Tensor2<Scalar>& z, Activation a) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      z = z.cwiseMax(Scalar(0));
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](Scalar v) { return sigmoid(v); });
      break;
  }
}

// Multiplies the upstream gradient by the activation derivative, expressed via the output.
template <typename Scalar>
void activation_backward(Tensor2<Scalar>& grad, const Tensor2<Scalar>& out, Activation a) {
  switch (a) {
    case Activation::identity:
      break;
    case Activation::relu:
      grad = (out.array() > Scalar(0)).select(grad, Scalar(0));
      break;
    case Activation::sigmoid:
      grad.array() *= out.array() * (Scalar(1) - out.array());
      break;
  }
}

}  // namespace detail

template <typename Scalar>
struct MlpForward {
  Tensor2<Scalar> output;
  MlpCache<Scalar> cache;
};

template <typename Scalar>
MlpForward<Scalar> mlp_forward(const MlpParams<Scalar>& params, const Tensor2<Scalar>& input) {
  if (params.layers.empty()) throw ShapeError("mlp has no layers");
  if (input.cols() != params.in_dim()) {
    throw ShapeError("mlp input has " + std::to_string(input.cols()) + " columns, first layer expects " +
                     std::to_string(params.in_dim()));
  }
  MlpForward<Scalar> fw;
  fw.cache.inputs.reserve(params.layers.size());
  fw.cache.outputs.reserve(params.layers.size());
  Tensor2<Scalar> x = input;
  for (const auto& l : params.layers) {
    Tensor2<Scalar> z = x * l.weight;
    z.rowwise() += l.bias.transpose();
    detail::apply_activation(z, l.activation);
    fw.cache.inputs.push_back(std::move(x));
    x = z;
    fw.cache.outputs.push_back(std::move(z));
  }
  if (!x.allFinite()) throw DivergenceError("non-finite mlp output");
  fw.output = std::move(x);
  return fw;
}

template <typename Scalar>
struct MlpBackward {
  Tensor2<Scalar> input_grad;
  MlpParams<Scalar> param_grads;
};

template <typename Scalar>
MlpBackward<Scalar> mlp_backward(const MlpParams<Scalar>& params, const MlpCache<Scalar>& cache,
                                 const Tensor2<Scalar>& output_grad) {
  const std::size_t n = params.layers.size();
  if (cache.outputs.size() != n || cache.inputs.size() != n) throw ShapeError("cache does not match mlp depth");
  require_shape(output_grad, cache.outputs.back().rows(), cache.outputs.back().cols(), "mlp output gradient");

  MlpBackward<Scalar> bw;
  bw.param_grads.layers.resize(n);
  Tensor2<Scalar> g = output_grad;
  for (std::size_t k = n; k-- > 0;) {
    const auto& l = params.layers[k];
    detail::activation_backward(g, cache.outputs[k], l.activation);
    auto& pg = bw.param_grads.layers[k];
    pg.weight = cache.inputs[k].transpose() * g;
    pg.bias = g.colwise().sum().transpose();
    pg.activation = l.activation;
    g = g * l.weight.transpose();
  }
  bw.input_grad = std::move(g);
  return bw;
}

// In-place a += scale * b for identically shaped parameter sets.
template <typename Scalar>
void accumulate(MlpParams<Scalar>& a, const MlpParams<Scalar>& b, Scalar scale = Scalar(1)) {
  if (a.layers.size() != b.layers.size()) throw ShapeError("accumulate: depth mismatch");
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    require_shape(b.layers[k].weight, a.layers[k].weight.rows(), a.layers[k].weight.cols(), "accumulate weight");
    a.layers[k].weight += scale * b.layers[k].weight;
    a.layers[k].bias += scale * b.layers[k].bias;
  }
}

// Flat views for finite-difference checks and serialization. Order: layer by layer, weight
// (row-major) then bias.
template <typename Scalar>
Vector<Scalar> flatten(const std::vector<MlpParams<Scalar>>& nets) {
  std::size_t total = 0;
  for (const auto& p : nets) total += p.param_count();
  Vector<Scalar> flat(static_cast<Eigen::Index>(total));
  Eigen::Index at = 0;
  for (const auto& p : nets) {
    for (const auto& l : p.layers) {
      flat.segment(at, l.weight.size()) = Eigen::Map<const Vector<Scalar>>(l.weight.data(), l.weight.size());
      at += l.weight.size();
      flat.segment(at, l.bias.size()) = l.bias;
      at += l.bias.size();
    }
  }
  return flat;
}

template <typename Scalar>
void unflatten(const Vector<Scalar>& flat, std::vector<MlpParams<Scalar>>& nets) {
  Eigen::Index at = 0;
  for (auto& p : nets) {
    for (auto& l : p.layers) {
      if (at + l.weight.size() + l.bias.size() > flat.size()) throw ShapeError("flat parameter vector too short");
      Eigen::Map<Vector<Scalar>>(l.weight.data(), l.weight.size()) = flat.segment(at, l.weight.size());
      at += l.weight.size();
      l.bias = flat.segment(at, l.bias.size());
      at += l.bias.size();
    }
  }
  if (at != flat.size()) throw ShapeError("flat parameter vector too long");
}

}  // namespace dbea
