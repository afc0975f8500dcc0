#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vpf/heads_losses.hpp"

namespace vpf {

enum class Difficulty { easy, moderate, hard, ignored };

struct EvalConfig {
  double iou_threshold = 0.7;  ///< car-category matching threshold
  int recall_positions = 40;
  Category category = Category::Car;
};

void validate(const EvalConfig& cfg);

enum class MatchMetric { iou_3d, iou_bev };

/// Standard protocol bucketing from 2D box height, occlusion and truncation:
/// Easy >= 40 px / occ 0 / trunc 0.15, Moderate >= 25 px / occ 1 / 0.30,
/// Hard >= 25 px / occ 2 / 0.50; anything harder is Ignored.
Difficulty difficulty_bucket(const LabeledObject& obj);

/// Single-category ground truth with its ignore flag for one difficulty cut.
struct GtEntry {
  Box3D box;
  bool ignored = false;
};

enum class DetFlag { tp, fp, ignored };

struct MatchResult {
  std::vector<DetFlag> det_flags;
  std::vector<bool> gt_matched;
  std::vector<int> det_to_gt;  ///< matched gt index or -1
};

/// Greedy score-descending matching: each detection takes the unmatched
/// counted ground truth of highest IoU when that IoU reaches the threshold;
/// failing that, a match to an ignored ground truth makes the detection
/// ignored (neither TP nor FP); otherwise it is a false positive. Each ground
/// truth matches at most once.
MatchResult match_detections(std::span<const Detection> detections,
                             std::span<const GtEntry> gts, const EvalConfig& cfg,
                             MatchMetric metric);

/// 40-point interpolated precision/recall curve. `samples` hold the
/// (recall threshold, interpolated precision) pairs; ap is their mean.
struct PRCurve {
  std::vector<std::pair<double, double>> samples;
  double ap = 0.0;
};

struct EvalFrame {
  std::vector<Detection> dets;
  std::vector<GtEntry> gts;
};

/// Pools matches across frames, samples right-max interpolated precision at
/// recalls r in {1/N, ..., N/N} and averages. Returns nullopt when there is
/// no counted ground truth (AP undefined, not zero). Score ties across
/// frames break TP-first, so frame order never changes the result.
std::optional<PRCurve> ap40(std::span<const EvalFrame> frames, const EvalConfig& cfg,
                            MatchMetric metric);

struct HeightBinStat {
  double depth_lo = 0.0, depth_hi = 0.0;
  int count = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< population variance
};

/// One frame of the height-estimation study: LiDAR-frame detections and
/// labels plus the camera used for projection.
struct HeightFrame {
  std::vector<Detection> dets;
  std::vector<LabeledObject> gts;  ///< LiDAR frame, with annotated 2D boxes
  CalibrationSet calib;
};

/// Vertical 1D IoU between each matched detection (projected to the image)
/// and its ground truth's 2D box, bucketed by the ground truth's camera
/// depth. Bins are [edge_i, edge_{i+1}); empty bins are omitted.
std::vector<HeightBinStat> height_iou_stats(std::span<const HeightFrame> frames,
                                            const EvalConfig& cfg, MatchMetric metric,
                                            std::span<const double> depth_bin_edges);

}  // namespace vpf
