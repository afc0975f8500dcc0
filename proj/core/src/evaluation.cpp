#include "vpf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vpf/error.hpp"

namespace vpf {

void validate(const EvalConfig& cfg) {
  if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0)) {
    throw ValidationError("EvalConfig: iou_threshold must lie in (0, 1]");
  }
  if (cfg.recall_positions < 1) {
    throw ValidationError("EvalConfig: recall_positions must be >= 1");
  }
}

Difficulty difficulty_bucket(const LabeledObject& obj) {
  const double height = obj.bbox2d.height();
  if (height >= 40.0 && obj.occlusion_level <= 0 && obj.truncation <= 0.15) {
    return Difficulty::easy;
  }
  if (height >= 25.0 && obj.occlusion_level <= 1 && obj.truncation <= 0.30) {
    return Difficulty::moderate;
  }
  if (height >= 25.0 && obj.occlusion_level <= 2 && obj.truncation <= 0.50) {
    return Difficulty::hard;
  }
  return Difficulty::ignored;
}

MatchResult match_detections(std::span<const Detection> detections, std::span<const GtEntry> gts,
                             const EvalConfig& cfg, MatchMetric metric) {
  validate(cfg);
  auto overlap = [&](const Box3D& a, const Box3D& b) {
    return metric == MatchMetric::iou_3d ? iou_3d(a, b) : iou_bev(a, b);
  };

  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  MatchResult result;
  result.det_flags.assign(detections.size(), DetFlag::fp);
  result.gt_matched.assign(gts.size(), false);
  result.det_to_gt.assign(detections.size(), -1);

  for (std::size_t det_idx : order) {
    const Box3D& det_box = detections[det_idx].box;
    int best_counted = -1, best_ignored = -1;
    double best_counted_iou = 0.0, best_ignored_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (result.gt_matched[g]) continue;
      const double iou = overlap(det_box, gts[g].box);
      if (iou < cfg.iou_threshold) continue;
      if (gts[g].ignored) {
        if (iou > best_ignored_iou || best_ignored < 0) {
          best_ignored_iou = iou;
          best_ignored = static_cast<int>(g);
        }
      } else {
        if (iou > best_counted_iou || best_counted < 0) {
          best_counted_iou = iou;
          best_counted = static_cast<int>(g);
        }
      }
    }
    if (best_counted >= 0) {
      result.det_flags[det_idx] = DetFlag::tp;
      result.det_to_gt[det_idx] = best_counted;
      result.gt_matched[best_counted] = true;
    } else if (best_ignored >= 0) {
      result.det_flags[det_idx] = DetFlag::ignored;
      result.det_to_gt[det_idx] = best_ignored;
      result.gt_matched[best_ignored] = true;
    }
  }
  return result;
}

std::optional<PRCurve> ap40(std::span<const EvalFrame> frames, const EvalConfig& cfg,
                            MatchMetric metric) {
  validate(cfg);
  std::size_t total_gt = 0;
  std::vector<std::pair<double, bool>> scored;  // (score, is_tp), ignored dets excluded
  for (const EvalFrame& frame : frames) {
    for (const GtEntry& gt : frame.gts) {
      if (!gt.ignored) ++total_gt;
    }
    const MatchResult match = match_detections(frame.dets, frame.gts, cfg, metric);
    for (std::size_t d = 0; d < frame.dets.size(); ++d) {
      if (match.det_flags[d] == DetFlag::ignored) continue;
      scored.emplace_back(frame.dets[d].score, match.det_flags[d] == DetFlag::tp);
    }
  }
  if (total_gt == 0) return std::nullopt;

  // Descending score; ties TP-first keeps the result independent of frame
  // order.
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second > b.second;
  });

  std::vector<double> precision(scored.size());
  std::vector<double> recall(scored.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].second) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }
  // Right-max envelope: envelope[i] = best precision at recall >= recall[i].
  std::vector<double> envelope(scored.size());
  double running = 0.0;
  for (std::size_t i = scored.size(); i-- > 0;) {
    running = std::max(running, precision[i]);
    envelope[i] = running;
  }

  PRCurve curve;
  const int n = cfg.recall_positions;
  curve.samples.reserve(n);
  double sum = 0.0;
  for (int j = 1; j <= n; ++j) {
    const double r = static_cast<double>(j) / n;
    // First pooled rank reaching recall r; its envelope value is the
    // interpolated precision (0 when the recall is never reached).
    double p = 0.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) p = envelope[static_cast<std::size_t>(it - recall.begin())];
    curve.samples.emplace_back(r, p);
    sum += p;
  }
  curve.ap = sum / n;
  return curve;
}

std::vector<HeightBinStat> height_iou_stats(std::span<const HeightFrame> frames,
                                            const EvalConfig& cfg, MatchMetric metric,
                                            std::span<const double> depth_bin_edges) {
  if (depth_bin_edges.size() < 2) {
    throw DomainError("height_iou_stats: need at least two bin edges");
  }
  const std::size_t bins = depth_bin_edges.size() - 1;
  std::vector<std::vector<double>> samples(bins);

  for (const HeightFrame& frame : frames) {
    std::vector<GtEntry> gts;
    gts.reserve(frame.gts.size());
    for (const auto& obj : frame.gts) gts.push_back({obj.box, false});
    const MatchResult match = match_detections(frame.dets, gts, cfg, metric);
    for (std::size_t d = 0; d < frame.dets.size(); ++d) {
      if (match.det_flags[d] != DetFlag::tp) continue;
      const LabeledObject& gt = frame.gts[match.det_to_gt[d]];
      const auto gt_proj = try_project_point(gt.box.center(), frame.calib);
      if (!gt_proj) continue;
      const auto det_rect = project_box_to_rect(frame.dets[d].box, frame.calib);
      if (!det_rect) continue;
      const double iou = iou_1d_vertical(*det_rect, gt.bbox2d);
      for (std::size_t b = 0; b < bins; ++b) {
        if (gt_proj->depth >= depth_bin_edges[b] && gt_proj->depth < depth_bin_edges[b + 1]) {
          samples[b].push_back(iou);
          break;
        }
      }
    }
  }

  std::vector<HeightBinStat> stats;
  for (std::size_t b = 0; b < bins; ++b) {
    if (samples[b].empty()) continue;
    HeightBinStat stat;
    stat.depth_lo = depth_bin_edges[b];
    stat.depth_hi = depth_bin_edges[b + 1];
    stat.count = static_cast<int>(samples[b].size());
    stat.mean = std::accumulate(samples[b].begin(), samples[b].end(), 0.0) / samples[b].size();
    double var = 0.0;
    for (double v : samples[b]) var += (v - stat.mean) * (v - stat.mean);
    stat.variance = var / samples[b].size();
    stats.push_back(stat);
  }
  return stats;
}

}  // namespace vpf
