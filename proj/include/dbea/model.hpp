#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dbea/box.hpp"
#include "dbea/mlp.hpp"
#include "dbea/tensor.hpp"

namespace dbea {

enum class ModelMode { vanilla, dbea };

std::string_view to_string(ModelMode m);
ModelMode parse_mode(std::string_view s);

struct ModelConfig {
  int feature_dim = 32;
  int trunk_hidden = 64;  // feed-forward width of the shared trunk
  int embed_dim = 32;
  int head_hidden = 32;
  int num_classes = 5;  // foreground classes; logits carry one extra no-object column
  int queries = 25;
  int top_k = 10;
  ModelMode mode = ModelMode::dbea;

  int logit_dim() const { return num_classes + 1; }
  int no_object_class() const { return num_classes; }
  int num_heads() const { return mode == ModelMode::dbea ? 2 : 1; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One detector: a 3-layer box FFN ending in a sigmoid, plus a linear classification layer.
struct HeadParams {
  MlpParams<double> box;
  MlpParams<double> cls;
};

struct TandemParams {
  ModelConfig config;
  MlpParams<double> trunk;
  std::vector<HeadParams> heads;  // [alpha] or [alpha, beta]

  // Parameter groups in a fixed order: trunk, alpha.box, alpha.cls, beta.box, beta.cls.
  std::vector<MlpParams<double>> groups() const;
  void set_groups(const std::vector<MlpParams<double>>& g);
  std::vector<std::string> group_names() const;
};

// Seeded initialization; each head draws from its own stream.
TandemParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct HeadOutput {
  Matrix boxes;   // rows x 4, (cx, cy, w, h) in [0, 1]
  Matrix logits;  // rows x (C + 1)

  Box box(Eigen::Index row) const { return {boxes(row, 0), boxes(row, 1), boxes(row, 2), boxes(row, 3)}; }
};

struct FusedDetections {
  Matrix boxes;               // mean of alpha/beta boxes
  Matrix class_probs;         // mean of per-head softmax
  VectorXd confidence;        // max foreground probability
  std::vector<int> labels;    // argmax foreground class

  Eigen::Index size() const { return boxes.rows(); }
  Box box(Eigen::Index row) const { return {boxes(row, 0), boxes(row, 1), boxes(row, 2), boxes(row, 3)}; }
};

struct TandemOutput {
  HeadOutput alpha;
  HeadOutput beta;  // equals alpha in vanilla mode
  FusedDetections fused;
};

Matrix softmax_rows(const Matrix& logits);

Matrix trunk_forward(const TandemParams& params, const Matrix& features);
HeadOutput head_forward(const HeadParams& head, const Matrix& embeddings);
FusedDetections fuse_tandem(const HeadOutput& alpha, const HeadOutput& beta);

// Indices of the k most confident detections, descending; ties go to the lower index.
std::vector<int> select_topk(const VectorXd& confidence, int k);

TandemOutput model_forward(const TandemParams& params, const Matrix& features);

// Forward pass with everything needed for the backward pass.
struct ModelTape {
  MlpCache<double> trunk;
  std::vector<MlpCache<double>> box;
  std::vector<MlpCache<double>> cls;
};

struct ModelForward {
  TandemOutput output;
  ModelTape tape;
};

ModelForward model_forward_train(const TandemParams& params, const Matrix& features);

struct HeadGrad {
  Matrix boxes;
  Matrix logits;
};

// Gradients of a scalar loss with respect to every parameter group (same order as groups()).
std::vector<MlpParams<double>> model_backward(const TandemParams& params, const ModelTape& tape,
                                              const std::vector<HeadGrad>& head_grads);

struct ParamReport {
  std::size_t trunk = 0;
  std::size_t box_head = 0;  // per head
  std::size_t cls_head = 0;  // per head
  int heads = 1;
  std::size_t per_head() const { return box_head + cls_head; }
  std::size_t total() const { return trunk + per_head() * static_cast<std::size_t>(heads); }
};

// Closed form: sum over layers of in*out + out.
ParamReport param_count(const ModelConfig& cfg);

}  // namespace dbea
