#include "dbea/evaluation.hpp"

#include <algorithm>

#include "dbea/errors.hpp"
#include "dbea/parallel.hpp"

namespace dbea {

std::string_view to_string(Level l) { return l == Level::image ? "image" : "object"; }

Level parse_level(std::string_view s) {
  if (s == "image") return Level::image;
  if (s == "object") return Level::object;
  throw ConfigError("--level: expected 'image' or 'object', got '" + std::string(s) + "'");
}

std::vector<DetectionRecord> detection_records(const TandemOutput& out, const Scene& scene, int top_k) {
  std::vector<DetectionRecord> recs;
  for (int q : select_topk(out.fused.confidence, top_k)) {
    DetectionRecord d;
    d.scene_id = scene.scene_id;
    d.box = out.fused.box(q);
    d.label = out.fused.labels[static_cast<std::size_t>(q)];
    d.confidence = out.fused.confidence[q];
    double best = 0.0;
    for (std::size_t g = 0; g < scene.objects.size(); ++g) {
      const double v = iou(d.box, scene.objects[g].box);
      if (v > best) {
        best = v;
        d.matched_gt = static_cast<int>(g);
      }
    }
    if (d.matched_gt >= 0) {
      d.iou = best;
      d.class_match = scene.objects[static_cast<std::size_t>(d.matched_gt)].class_id == d.label;
    }
    recs.push_back(d);
  }
  return recs;
}

std::vector<SceneEval> run_inference(const TandemParams& params, const Split& split, const MonitorOptions& opt,
                                     int threads) {
  std::vector<SceneEval> out(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    const Sample& s = split[i];
    if (s.queries.features.cols() != params.config.feature_dim || s.queries.features.rows() != params.config.queries) {
      throw ShapeError("scene " + s.scene.scene_id + " does not match the model query/feature shape");
    }
    const TandemOutput o = model_forward(params, s.queries.features);
    SceneEval e;
    e.scene_id = s.scene.scene_id;
    e.regime = s.scene.regime;
    e.usm = score_scene(o, params.config.top_k, opt);
    e.detections = detection_records(o, s.scene, params.config.top_k);
    out[i] = std::move(e);
  });
  return out;
}

std::vector<GroundTruthRecord> ground_truth_records(const Split& split) {
  std::vector<GroundTruthRecord> gts;
  for (const auto& s : split) {
    for (const auto& o : s.scene.objects) gts.push_back({s.scene.scene_id, o.class_id, o.box});
  }
  return gts;
}

double image_ood_score(const SceneEval& e, ModelMode mode) {
  if (mode == ModelMode::dbea) return e.usm.image_usm;
  if (e.detections.empty()) throw DataError("scene " + e.scene_id + " has no detections");
  double c = 0.0;
  for (const auto& d : e.detections) c += d.confidence;
  return 1.0 - c / static_cast<double>(e.detections.size());
}

double object_ood_score(const SceneEval& e, std::size_t det, ModelMode mode) {
  if (mode == ModelMode::dbea) return e.usm.per_object.at(det).usm;
  return 1.0 - e.detections.at(det).confidence;
}

std::vector<ScoredSample> image_samples(const std::vector<SceneEval>& id, const std::vector<SceneEval>& ood, ModelMode mode) {
  std::vector<ScoredSample> s;
  for (const auto& e : id) s.push_back({image_ood_score(e, mode), SampleLabel::in_distribution});
  for (const auto& e : ood) s.push_back({image_ood_score(e, mode), SampleLabel::ood});
  return s;
}

std::vector<ScoredSample> object_samples(const std::vector<SceneEval>& id, const std::vector<SceneEval>& ood, ModelMode mode) {
  std::vector<ScoredSample> s;
  for (const auto& e : id) {
    for (std::size_t d = 0; d < e.detections.size(); ++d) s.push_back({object_ood_score(e, d, mode), SampleLabel::in_distribution});
  }
  for (const auto& e : ood) {
    for (std::size_t d = 0; d < e.detections.size(); ++d) s.push_back({object_ood_score(e, d, mode), SampleLabel::ood});
  }
  return s;
}

std::vector<NovelSample> novel_object_samples(const std::vector<SceneEval>& evals, const Split& split,
                                              const std::vector<int>& held_out, ModelMode mode, double iou_threshold) {
  if (evals.size() != split.size()) throw DataError("novel benchmark: evaluations and scenes differ in count");
  auto is_novel = [&](int c) { return std::find(held_out.begin(), held_out.end(), c) != held_out.end(); };
  std::vector<NovelSample> out;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const Scene& scene = split[i].scene;
    const SceneEval& e = evals[i];
    for (std::size_t d = 0; d < e.detections.size(); ++d) {
      double best_novel = 0.0, best_known = 0.0;
      for (const auto& o : scene.objects) {
        const double v = iou(e.detections[d].box, o.box);
        (is_novel(o.class_id) ? best_novel : best_known) = std::max(is_novel(o.class_id) ? best_novel : best_known, v);
      }
      if (best_novel >= iou_threshold) {
        out.push_back({e.scene_id, d, {object_ood_score(e, d, mode), SampleLabel::ood}});
      } else if (best_known >= iou_threshold) {
        out.push_back({e.scene_id, d, {object_ood_score(e, d, mode), SampleLabel::in_distribution}});
      }
    }
  }
  return out;
}

DetectionMetrics detection_metrics(const std::vector<DetectionRecord>& dets, const std::vector<GroundTruthRecord>& gts) {
  DetectionMetrics m;
  m.detections = dets.size();
  m.ground_truths = gts.size();
  const ApResult ap = average_precision(dets, gts);
  m.map = ap.map;
  m.ap50 = ap.ap50;
  const PcorrResult pc = pcorr_split(dets, 0.5);
  m.pcorr_all = pc.all;
  m.pcorr_tp = pc.tp;
  return m;
}

}  // namespace dbea
