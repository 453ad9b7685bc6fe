#include "dbea/monitor.hpp"

#include <cmath>

#include "dbea/errors.hpp"
#include "dbea/parallel.hpp"

namespace dbea {

namespace {

double xy_var(const Box& a, const Box& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  return std::sqrt(dx * dx + dy * dy);
}

double wh_var(const Box& a, const Box& b) {
  const double dw = a.w - b.w, dh = a.h - b.h;
  return dw * dw + dh * dh;
}

}  // namespace

double usm_image(const HeadOutput& alpha, const HeadOutput& beta, std::span<const int> topk, const MonitorOptions& opt) {
  if (topk.empty()) throw DataError("usm_image: empty top-K selection");
  const Eigen::Index rows = alpha.boxes.rows();
  require_shape(beta.boxes, rows, 4, "usm_image beta boxes");
  const std::size_t k = topk.size();
  std::vector<double> xy(k), wh(k);
  double mean_xy = 0.0, mean_wh = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const int q = topk[i];
    if (q < 0 || q >= rows) throw DataError("usm_image: top-K index out of range");
    const Box a = alpha.box(q), b = beta.box(q);
    xy[i] = xy_var(a, b);
    wh[i] = wh_var(a, b);
    mean_xy += xy[i];
    mean_wh += wh[i];
  }
  mean_xy /= static_cast<double>(k);
  mean_wh /= static_cast<double>(k);
  double u = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double xy_c = xy[i] * mean_xy;
    const double wh_c = wh[i] * mean_wh;
    u += (opt.outer_root ? std::sqrt(xy_c) : xy_c) * wh_c;
  }
  return u / static_cast<double>(k);
}

double usm_object(const Box& alpha, const Box& beta, double confidence) {
  if (!(confidence > 0.0) || confidence > 1.0) throw DataError("usm_object: confidence must lie in (0, 1]");
  return std::sqrt(xy_var(alpha, beta)) * wh_var(alpha, beta) / std::sqrt(confidence);
}

UncertaintyScore score_scene(const TandemOutput& out, int top_k, const MonitorOptions& opt) {
  const std::vector<int> sel = select_topk(out.fused.confidence, top_k);
  UncertaintyScore s;
  s.top_k_used = static_cast<int>(sel.size());
  s.image_usm = usm_image(out.alpha, out.beta, sel, opt);
  s.per_object.reserve(sel.size());
  for (int q : sel) {
    // Confidence is a softmax probability; the floor only guards exact underflow.
    const double c = std::max(out.fused.confidence[q], 1e-300);
    s.per_object.push_back({q, usm_object(out.alpha.box(q), out.beta.box(q), c), out.fused.confidence[q]});
  }
  return s;
}

std::vector<UncertaintyScore> score_batch(const TandemParams& params, const Split& split, const MonitorOptions& opt,
                                          int threads) {
  std::vector<UncertaintyScore> out(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    out[i] = score_scene(model_forward(params, split[i].queries.features), params.config.top_k, opt);
  });
  return out;
}

}  // namespace dbea
