#include "dbea/losses.hpp"

#include <cmath>

#include "dbea/errors.hpp"

namespace dbea {

void LossWeights::validate() const {
  auto nonneg = [](double v, const char* key) {
    if (!(v >= 0.0)) throw ConfigError(std::string(key) + ": must be >= 0");
  };
  nonneg(lambda_ta, "loss.lambda_ta");
  nonneg(lambda_tq, "loss.lambda_tq");
  nonneg(lambda_div, "loss.lambda_div");
  nonneg(w_cls, "loss.w_cls");
  nonneg(w_l1, "loss.w_l1");
  nonneg(w_giou, "loss.w_giou");
  if (!(epsilon_tq > 0.0)) throw ConfigError("loss.epsilon_tq: must be > 0");
}

TandemLoss zero_loss(const HeadOutput& alpha, const HeadOutput& beta) {
  TandemLoss l;
  l.alpha = {Matrix::Zero(alpha.boxes.rows(), alpha.boxes.cols()), Matrix::Zero(alpha.logits.rows(), alpha.logits.cols())};
  l.beta = {Matrix::Zero(beta.boxes.rows(), beta.boxes.cols()), Matrix::Zero(beta.logits.rows(), beta.logits.cols())};
  return l;
}

namespace {

void check_pair(const HeadOutput& a, const HeadOutput& b) {
  require_shape(b.boxes, a.boxes.rows(), 4, "beta boxes");
  require_shape(a.boxes, a.boxes.rows(), 4, "alpha boxes");
  require_shape(b.logits, a.logits.rows(), a.logits.cols(), "beta logits");
}

void check_match(const MatchAssignment& m, Eigen::Index queries) {
  if (static_cast<Eigen::Index>(m.gt_for_query.size()) != queries) throw ShapeError("match covers a different query count");
}

}  // namespace

double head_base_loss(const HeadOutput& head, const MatchAssignment& match, const std::vector<SceneObject>& gt,
                      const LossWeights& w, HeadGrad* grad, BaseTerms* terms) {
  const Eigen::Index q = head.logits.rows();
  check_match(match, q);
  if (grad) {
    grad->boxes = Matrix::Zero(head.boxes.rows(), head.boxes.cols());
    grad->logits = Matrix::Zero(head.logits.rows(), head.logits.cols());
  }
  if (q == 0) {
    if (terms) *terms = {};
    return 0.0;
  }
  const int no_object = static_cast<int>(head.logits.cols()) - 1;
  const Matrix probs = softmax_rows(head.logits);
  const double inv_q = 1.0 / static_cast<double>(q);

  BaseTerms t;
  for (Eigen::Index r = 0; r < q; ++r) {
    const int g = match.gt_for_query[static_cast<std::size_t>(r)];
    const int target = g >= 0 ? gt[static_cast<std::size_t>(g)].class_id : no_object;
    if (target < 0 || target > no_object) throw ShapeError("target class outside the logit range");
    t.cls += -std::log(std::max(probs(r, target), 1e-300)) * inv_q;
    if (grad) {
      grad->logits.row(r) = probs.row(r) * (w.w_cls * inv_q);
      grad->logits(r, target) -= w.w_cls * inv_q;
    }
    if (g < 0) continue;

    const Box& tb = gt[static_cast<std::size_t>(g)].box;
    const Box pb = head.box(r);
    const auto target_arr = tb.as_array();
    for (int k = 0; k < 4; ++k) {
      const double d = head.boxes(r, k) - target_arr[static_cast<std::size_t>(k)];
      t.l1 += std::abs(d) * inv_q;
      if (grad) grad->boxes(r, k) += w.w_l1 * inv_q * (d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0);
    }
    const GiouGrad gg = giou_with_grad(pb, tb);
    t.giou += (1.0 - gg.value) * inv_q;
    if (grad) {
      for (int k = 0; k < 4; ++k) grad->boxes(r, k) -= w.w_giou * inv_q * gg.d_a[static_cast<std::size_t>(k)];
    }
  }
  if (terms) *terms = t;
  return w.w_cls * t.cls + w.w_l1 * t.l1 + w.w_giou * t.giou;
}

TandemLoss base_loss(const TandemOutput& out, const MatchAssignment& match, const std::vector<SceneObject>& gt,
                     const LossWeights& w) {
  check_pair(out.alpha, out.beta);
  TandemLoss l;
  const double a = head_base_loss(out.alpha, match, gt, w, &l.alpha);
  const double b = head_base_loss(out.beta, match, gt, w, &l.beta);
  l.value = 0.5 * (a + b);
  l.alpha.boxes *= 0.5;
  l.alpha.logits *= 0.5;
  l.beta.boxes *= 0.5;
  l.beta.logits *= 0.5;
  return l;
}

TandemLoss tandem_aiding(const HeadOutput& alpha, const HeadOutput& beta, const MatchAssignment& match) {
  check_pair(alpha, beta);
  check_match(match, alpha.boxes.rows());
  TandemLoss l = zero_loss(alpha, beta);
  if (match.pairs.empty()) return l;
  const double inv_m = 1.0 / static_cast<double>(match.pairs.size());
  for (const auto& [q, g] : match.pairs) {
    (void)g;
    for (int k = 0; k < 4; ++k) {
      const double d = alpha.boxes(q, k) - beta.boxes(q, k);
      l.value += std::abs(d) * inv_m;
      const double s = d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0;
      l.alpha.boxes(q, k) = s * inv_m;
      l.beta.boxes(q, k) = -s * inv_m;
    }
  }
  return l;
}

TandemLoss tandem_quelling(const HeadOutput& alpha, const HeadOutput& beta, const MatchAssignment& match,
                           double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("loss.epsilon_tq: must be > 0");
  check_pair(alpha, beta);
  check_match(match, alpha.boxes.rows());
  TandemLoss l = zero_loss(alpha, beta);
  if (match.unmatched_queries.empty()) return l;
  const double inv_u = 1.0 / static_cast<double>(match.unmatched_queries.size());
  for (int q : match.unmatched_queries) {
    for (int k = 0; k < 4; ++k) {
      const double d = alpha.boxes(q, k) - beta.boxes(q, k);
      const double s = d * d + epsilon;
      const double r = 1.0 / std::sqrt(s);
      l.value += r * inv_u;
      const double dd = -d * r / s * inv_u;  // d/dd (s^-1/2) = -d s^-3/2
      l.alpha.boxes(q, k) = dd;
      l.beta.boxes(q, k) = -dd;
    }
  }
  return l;
}

TandemLoss diversity_loss(const HeadOutput& alpha, const HeadOutput& beta) {
  check_pair(alpha, beta);
  TandemLoss l = zero_loss(alpha, beta);
  const Eigen::Index n = alpha.logits.rows();
  if (n == 0) return l;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto a = alpha.logits.row(r);
    const auto b = beta.logits.row(r);
    const double na = a.norm(), nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) continue;
    const double cos = a.dot(b) / (na * nb);
    l.value += cos * inv_n;
    l.alpha.logits.row(r) = (b / (na * nb) - cos * a / (na * na)) * inv_n;
    l.beta.logits.row(r) = (a / (na * nb) - cos * b / (nb * nb)) * inv_n;
  }
  return l;
}

DbeaLoss dbea_loss(const TandemOutput& out, const MatchAssignment& match, const std::vector<SceneObject>& gt,
                   const LossWeights& w, bool tandem) {
  w.validate();
  DbeaLoss res;
  if (!tandem) {
    res.breakdown.base = head_base_loss(out.alpha, match, gt, w, &res.alpha);
    res.breakdown.total = res.breakdown.base;
    res.beta = {Matrix::Zero(out.beta.boxes.rows(), 4), Matrix::Zero(out.beta.logits.rows(), out.beta.logits.cols())};
    if (!std::isfinite(res.breakdown.total)) throw DivergenceError("non-finite loss");
    return res;
  }
  const TandemLoss base = base_loss(out, match, gt, w);
  const TandemLoss ta = tandem_aiding(out.alpha, out.beta, match);
  const TandemLoss tq = tandem_quelling(out.alpha, out.beta, match, w.epsilon_tq);
  const TandemLoss div = diversity_loss(out.alpha, out.beta);

  auto& b = res.breakdown;
  b.base = base.value;
  b.ta = ta.value;
  b.tq = tq.value;
  b.tandem = w.lambda_ta * ta.value + w.lambda_tq * tq.value;
  b.diversity = div.value;
  b.total = b.base + b.tandem + w.lambda_div * b.diversity;
  if (!std::isfinite(b.total)) throw DivergenceError("non-finite loss");

  res.alpha.boxes = base.alpha.boxes + w.lambda_ta * ta.alpha.boxes + w.lambda_tq * tq.alpha.boxes;
  res.beta.boxes = base.beta.boxes + w.lambda_ta * ta.beta.boxes + w.lambda_tq * tq.beta.boxes;
  res.alpha.logits = base.alpha.logits + w.lambda_div * div.alpha.logits;
  res.beta.logits = base.beta.logits + w.lambda_div * div.beta.logits;
  return res;
}

}  // namespace dbea
