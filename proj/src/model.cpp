#include "dbea/model.hpp"

#include <algorithm>
#include <numeric>

#include "dbea/errors.hpp"
#include "dbea/rng.hpp"

namespace dbea {

std::string_view to_string(ModelMode m) { return m == ModelMode::dbea ? "dbea" : "vanilla"; }

ModelMode parse_mode(std::string_view s) {
  if (s == "dbea") return ModelMode::dbea;
  if (s == "vanilla") return ModelMode::vanilla;
  throw ConfigError("model.mode: expected 'dbea' or 'vanilla', got '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) throw ConfigError(std::string(key) + ": must be >= 1");
  };
  positive(feature_dim, "model.feature_dim");
  positive(trunk_hidden, "model.trunk_hidden");
  positive(embed_dim, "model.embed_dim");
  positive(head_hidden, "model.head_hidden");
  positive(num_classes, "model.num_classes");
  positive(queries, "model.queries");
  positive(top_k, "model.top_k");
  if (top_k > queries) throw ConfigError("model.top_k: must not exceed the query count");
}

namespace {

std::vector<LayerSpec> trunk_layers(const ModelConfig& c) {
  return {{c.trunk_hidden, Activation::relu}, {c.embed_dim, Activation::relu}};
}
std::vector<LayerSpec> box_layers(const ModelConfig& c) {
  return {{c.head_hidden, Activation::relu}, {c.head_hidden, Activation::relu}, {4, Activation::sigmoid}};
}
std::vector<LayerSpec> cls_layers(const ModelConfig& c) { return {{c.logit_dim(), Activation::identity}}; }

std::size_t closed_form(Eigen::Index in, const std::vector<LayerSpec>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(in * l.out_dim + l.out_dim);
    in = l.out_dim;
  }
  return n;
}

}  // namespace

std::vector<MlpParams<double>> TandemParams::groups() const {
  std::vector<MlpParams<double>> g{trunk};
  for (const auto& h : heads) {
    g.push_back(h.box);
    g.push_back(h.cls);
  }
  return g;
}

void TandemParams::set_groups(const std::vector<MlpParams<double>>& g) {
  if (g.size() != 1 + 2 * heads.size()) throw ShapeError("parameter group count");
  trunk = g[0];
  for (std::size_t i = 0; i < heads.size(); ++i) {
    heads[i].box = g[1 + 2 * i];
    heads[i].cls = g[2 + 2 * i];
  }
}

std::vector<std::string> TandemParams::group_names() const {
  std::vector<std::string> n{"trunk"};
  const char* head_names[] = {"alpha", "beta"};
  for (std::size_t i = 0; i < heads.size(); ++i) {
    n.push_back(std::string(head_names[i]) + ".box");
    n.push_back(std::string(head_names[i]) + ".cls");
  }
  return n;
}

TandemParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TandemParams p;
  p.config = cfg;
  Rng trunk_rng(derive_seed(seed, "init/trunk"));
  p.trunk = make_mlp<double>(cfg.feature_dim, trunk_layers(cfg), trunk_rng);
  const char* tags[] = {"init/alpha", "init/beta"};
  for (int h = 0; h < cfg.num_heads(); ++h) {
    Rng rng(derive_seed(seed, tags[h]));
    HeadParams head;
    head.box = make_mlp<double>(cfg.embed_dim, box_layers(cfg), rng);
    head.cls = make_mlp<double>(cfg.embed_dim, cls_layers(cfg), rng);
    p.heads.push_back(std::move(head));
  }
  return p;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

Matrix trunk_forward(const TandemParams& params, const Matrix& features) {
  return mlp_forward(params.trunk, features).output;
}

HeadOutput head_forward(const HeadParams& head, const Matrix& embeddings) {
  return {mlp_forward(head.box, embeddings).output, mlp_forward(head.cls, embeddings).output};
}

FusedDetections fuse_tandem(const HeadOutput& alpha, const HeadOutput& beta) {
  require_shape(beta.boxes, alpha.boxes.rows(), alpha.boxes.cols(), "fuse_tandem beta boxes");
  require_shape(beta.logits, alpha.logits.rows(), alpha.logits.cols(), "fuse_tandem beta logits");
  FusedDetections f;
  f.boxes = 0.5 * (alpha.boxes + beta.boxes);
  f.class_probs = 0.5 * (softmax_rows(alpha.logits) + softmax_rows(beta.logits));
  const Eigen::Index n = f.class_probs.rows();
  const Eigen::Index fg = std::max<Eigen::Index>(1, f.class_probs.cols() - 1);
  f.confidence.resize(n);
  f.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index arg = 0;
    f.confidence[r] = f.class_probs.row(r).head(fg).maxCoeff(&arg);
    f.labels[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return f;
}

std::vector<int> select_topk(const VectorXd& confidence, int k) {
  const int n = static_cast<int>(confidence.size());
  if (k < 0 || k > n) throw ConfigError("select_topk: k must lie in [0, " + std::to_string(n) + "]");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return confidence[a] > confidence[b]; });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

ModelForward model_forward_train(const TandemParams& params, const Matrix& features) {
  if (features.cols() != params.config.feature_dim) {
    throw ShapeError("features have " + std::to_string(features.cols()) + " columns, model expects " +
                     std::to_string(params.config.feature_dim));
  }
  ModelForward fw;
  auto trunk = mlp_forward(params.trunk, features);
  fw.tape.trunk = std::move(trunk.cache);
  std::vector<HeadOutput> outs;
  for (const auto& h : params.heads) {
    auto box = mlp_forward(h.box, trunk.output);
    auto cls = mlp_forward(h.cls, trunk.output);
    outs.push_back({std::move(box.output), std::move(cls.output)});
    fw.tape.box.push_back(std::move(box.cache));
    fw.tape.cls.push_back(std::move(cls.cache));
  }
  fw.output.alpha = outs[0];
  fw.output.beta = outs.size() > 1 ? outs[1] : outs[0];
  fw.output.fused = fuse_tandem(fw.output.alpha, fw.output.beta);
  return fw;
}

TandemOutput model_forward(const TandemParams& params, const Matrix& features) {
  return model_forward_train(params, features).output;
}

std::vector<MlpParams<double>> model_backward(const TandemParams& params, const ModelTape& tape,
                                              const std::vector<HeadGrad>& head_grads) {
  if (head_grads.size() != params.heads.size()) throw ShapeError("one gradient per head expected");
  std::vector<MlpParams<double>> grads(1 + 2 * params.heads.size());
  Matrix embed_grad;
  for (std::size_t h = 0; h < params.heads.size(); ++h) {
    auto box = mlp_backward(params.heads[h].box, tape.box[h], head_grads[h].boxes);
    auto cls = mlp_backward(params.heads[h].cls, tape.cls[h], head_grads[h].logits);
    Matrix g = box.input_grad + cls.input_grad;
    if (h == 0) {
      embed_grad = std::move(g);
    } else {
      embed_grad += g;
    }
    grads[1 + 2 * h] = std::move(box.param_grads);
    grads[2 + 2 * h] = std::move(cls.param_grads);
  }
  grads[0] = mlp_backward(params.trunk, tape.trunk, embed_grad).param_grads;
  return grads;
}

ParamReport param_count(const ModelConfig& cfg) {
  cfg.validate();
  ParamReport r;
  r.trunk = closed_form(cfg.feature_dim, trunk_layers(cfg));
  r.box_head = closed_form(cfg.embed_dim, box_layers(cfg));
  r.cls_head = closed_form(cfg.embed_dim, cls_layers(cfg));
  r.heads = cfg.num_heads();
  return r;
}

}  // namespace dbea
