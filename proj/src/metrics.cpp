#include "dbea/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dbea/errors.hpp"

namespace dbea {

namespace {

struct Counts {
  std::size_t pos = 0, neg = 0;
};

Counts count_labels(const std::vector<ScoredSample>& s) {
  Counts c;
  for (const auto& x : s) {
    if (!std::isfinite(x.score)) throw DataError("scored sample has a non-finite score");
    (x.label == SampleLabel::ood ? c.pos : c.neg) += 1;
  }
  return c;
}

Counts require_both(const std::vector<ScoredSample>& s) {
  const Counts c = count_labels(s);
  if (c.pos == 0 || c.neg == 0) throw UndefinedMetric("need at least one in-distribution and one OOD sample");
  return c;
}

std::vector<std::size_t> order_desc(const std::vector<ScoredSample>& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a].score > s[b].score; });
  return idx;
}

}  // namespace

std::vector<RocPoint> roc_curve(const std::vector<ScoredSample>& samples) {
  const Counts c = require_both(samples);
  const auto idx = order_desc(samples);
  std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double thr = samples[idx[i]].score;
    for (; i < idx.size() && samples[idx[i]].score == thr; ++i) {
      (samples[idx[i]].label == SampleLabel::ood ? tp : fp) += 1;
    }
    pts.push_back({thr, double(fp) / double(c.neg), double(tp) / double(c.pos)});
  }
  return pts;
}

double auroc(const std::vector<ScoredSample>& samples) {
  const Counts c = require_both(samples);
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && samples[idx[j]].score == samples[idx[i]].score) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // average of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (samples[idx[k]].label == SampleLabel::ood) rank_sum += midrank;
    }
    i = j;
  }
  const double np = double(c.pos), nn = double(c.neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auroc_trapezoid(const std::vector<ScoredSample>& samples) {
  const auto pts = roc_curve(samples);
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].fpr - pts[i - 1].fpr) * 0.5 * (pts[i].tpr + pts[i - 1].tpr);
  }
  return area;
}

std::vector<PrPoint> pr_curve(const std::vector<ScoredSample>& samples, PositiveClass positive) {
  std::vector<ScoredSample> s = samples;
  if (positive == PositiveClass::in) {
    for (auto& x : s) {
      x.score = -x.score;
      x.label = x.label == SampleLabel::ood ? SampleLabel::in_distribution : SampleLabel::ood;
    }
  }
  const Counts c = count_labels(s);
  if (c.pos == 0) throw UndefinedMetric("precision-recall needs at least one positive sample");
  const auto idx = order_desc(s);
  std::vector<PrPoint> pts;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double thr = s[idx[i]].score;
    for (; i < idx.size() && s[idx[i]].score == thr; ++i) (s[idx[i]].label == SampleLabel::ood ? tp : fp) += 1;
    pts.push_back({positive == PositiveClass::in ? -thr : thr, double(tp) / double(c.pos), double(tp) / double(tp + fp)});
  }
  return pts;
}

double aupr(const std::vector<ScoredSample>& samples, PositiveClass positive) {
  const auto pts = pr_curve(samples, positive);
  double area = 0.0, prev_recall = 0.0;
  for (const auto& p : pts) {
    area += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return area;
}

OperatingPoint operating_point(const std::vector<ScoredSample>& samples, double tpr_target) {
  const auto pts = roc_curve(samples);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].tpr >= tpr_target) return {pts[i].threshold, pts[i].tpr, pts[i].fpr};
  }
  const auto& last = pts.back();
  return {last.threshold, last.tpr, last.fpr};
}

double fpr_at_tpr(const std::vector<ScoredSample>& samples, double tpr_target) {
  return operating_point(samples, tpr_target).fpr;
}

double de_at_tpr(const std::vector<ScoredSample>& samples, double tpr_target) {
  const auto op = operating_point(samples, tpr_target);
  return detection_error(op.tpr, op.fpr);
}

OODBenchmarkResult ood_benchmark(const std::vector<ScoredSample>& samples, double tpr_target) {
  const Counts c = require_both(samples);
  OODBenchmarkResult r;
  r.n_in = c.neg;
  r.n_ood = c.pos;
  r.auroc = auroc(samples);
  r.aupr_in = aupr(samples, PositiveClass::in);
  r.aupr_out = aupr(samples, PositiveClass::out);
  const auto op = operating_point(samples, tpr_target);
  r.fpr_at_95 = op.fpr;
  r.tpr_at_95 = op.tpr;
  r.de_at_95 = detection_error(op.tpr, op.fpr);
  return r;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DataError("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 2) throw UndefinedMetric("pearson needs at least two points");
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / double(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedMetric("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PcorrResult pcorr_split(const std::vector<DetectionRecord>& records, double iou_tp_threshold) {
  if (!(iou_tp_threshold > 0.0 && iou_tp_threshold < 1.0)) throw ConfigError("pcorr_split: threshold must lie in (0, 1)");
  PcorrResult r;
  std::vector<double> c_all, i_all, c_tp, i_tp;
  for (const auto& d : records) {
    const double iou_v = d.matched_gt >= 0 ? d.iou : 0.0;
    c_all.push_back(d.confidence);
    i_all.push_back(iou_v);
    if (d.matched_gt >= 0 && d.class_match && iou_v >= iou_tp_threshold) {
      c_tp.push_back(d.confidence);
      i_tp.push_back(iou_v);
    }
  }
  auto attempt = [](const std::vector<double>& x, const std::vector<double>& y) -> std::optional<double> {
    try {
      return pearson(x, y);
    } catch (const UndefinedMetric&) {
      return std::nullopt;
    }
  };
  r.all = attempt(c_all, i_all);
  r.tp = attempt(c_tp, i_tp);
  return r;
}

std::optional<double> class_average_precision(const std::vector<DetectionRecord>& predictions,
                                              const std::vector<GroundTruthRecord>& gts, int class_id,
                                              double iou_threshold) {
  std::map<std::string, std::vector<const GroundTruthRecord*>> by_scene;
  std::size_t npos = 0;
  for (const auto& g : gts) {
    if (g.class_id != class_id) continue;
    by_scene[g.scene_id].push_back(&g);
    ++npos;
  }
  if (npos == 0) return std::nullopt;

  std::vector<const DetectionRecord*> preds;
  for (const auto& p : predictions) {
    if (p.label == class_id) preds.push_back(&p);
  }
  std::stable_sort(preds.begin(), preds.end(),
                   [](const DetectionRecord* a, const DetectionRecord* b) { return a->confidence > b->confidence; });

  std::map<std::string, std::vector<char>> used;
  for (const auto& [scene, list] : by_scene) used[scene].assign(list.size(), 0);

  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const DetectionRecord* p : preds) {
    bool hit = false;
    auto it = by_scene.find(p->scene_id);
    if (it != by_scene.end()) {
      auto& flags = used[p->scene_id];
      double best = -1.0;
      std::size_t best_idx = 0;
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        if (flags[k]) continue;
        const double v = iou(p->box, it->second[k]->box);
        if (v > best) {
          best = v;
          best_idx = k;
        }
      }
      if (best >= iou_threshold) {
        flags[best_idx] = 1;
        hit = true;
      }
    }
    (hit ? tp : fp) += 1;
    precision.push_back(double(tp) / double(tp + fp));
    recall.push_back(double(tp) / double(npos));
  }

  // All-point interpolation: precision envelope from the right.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.50 + 0.05 * i);
  return t;
}

ApResult average_precision(const std::vector<DetectionRecord>& predictions, const std::vector<GroundTruthRecord>& gts) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);
  ApResult r;
  if (classes.empty()) return r;
  const auto thresholds = coco_iou_thresholds();
  double sum50 = 0.0, sum_all = 0.0;
  for (int c : classes) {
    sum50 += *class_average_precision(predictions, gts, c, 0.5);
    double s = 0.0;
    for (double t : thresholds) s += *class_average_precision(predictions, gts, c, t);
    sum_all += s / double(thresholds.size());
  }
  r.ap50 = sum50 / double(classes.size());
  r.map = sum_all / double(classes.size());
  return r;
}

}  // namespace dbea
