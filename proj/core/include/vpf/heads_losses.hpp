#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vpf/mlp.hpp"

namespace vpf {

struct Detection {
  Box3D box;
  double score = 0.0;          ///< [0, 1]
  double predicted_iou = 0.0;  ///< [0, 1]
};

/// Branch weights of the second-stage loss: total = L_IoU + w_main * L_main
/// + w_aux * L_aux.
struct LossWeights {
  double w_main = 1.0;
  double w_aux = 0.5;
};

enum class HeadBranch { main, aux };

struct HeadOutput {
  BoxResidual residual{};                ///< predicted box regression
  std::optional<double> iou_logit;       ///< main branch only
};

/// Detection head forward: a ReLU trunk under `head.{branch}.fc.*` reduces
/// the flattened pooled tensor to a 512 vector, then linear heads
/// `head.{branch}.reg` (7 outputs) and, for the main branch,
/// `head.main.iou` (1 logit).
HeadOutput head_forward(std::span<const double> pooled, const WeightBundle& weights,
                        HeadBranch branch);

/// Loss value with its analytic derivative w.r.t. the prediction.
struct ValueGrad {
  double value = 0.0;
  double grad = 0.0;
};

/// Smooth-L1 with transition at |pred - target| = 1:
/// 0.5 x^2 inside, |x| - 0.5 outside.
ValueGrad smooth_l1(double pred, double target);

/// Focal loss -alpha_t (1 - p_t)^gamma log(p_t) for the binary label y.
/// Throws DomainError unless p is strictly inside (0, 1).
ValueGrad focal_loss(double p, int y, double alpha = 0.25, double gamma = 2.0);

/// Numerically stable binary cross entropy on a logit.
ValueGrad bce_with_logit(double logit, double target);

struct RcnnTargets {
  BoxResidual residual{};  ///< from encode_residual(gt, anchor)
  double iou = 0.0;        ///< 3D IoU regression target in [0, 1]
};

struct RcnnLossResult {
  double value = 0.0;
  BoxResidual d_main{};
  BoxResidual d_aux{};
  double d_iou_logit = 0.0;
};

/// Second-stage loss: BCE on the IoU logit plus weighted smooth-L1 sums over
/// the 7 residual dimensions of the two branches.
RcnnLossResult rcnn_loss(const BoxResidual& main_pred, const BoxResidual& aux_pred,
                         double iou_logit, const RcnnTargets& targets, const LossWeights& weights);

struct RpnLossResult {
  double value = 0.0;
  std::vector<double> d_cls;          ///< per anchor
  std::vector<BoxResidual> d_box;     ///< per anchor (zero for negatives)
};

/// First-stage loss: focal classification over every anchor plus
/// beta-weighted smooth-L1 box regression over positive anchors. An anchor is
/// positive when its `gts` entry is present; targets come from
/// encode_residual(gt, anchor).
RpnLossResult rpn_loss(std::span<const double> cls_probs,
                       std::span<const BoxResidual> box_preds, std::span<const Box3D> anchors,
                       std::span<const std::optional<Box3D>> gts, double beta,
                       double focal_alpha = 0.25, double focal_gamma = 2.0);

/// Greedy BEV non-maximum suppression: detections are visited in descending
/// score (stable on ties); a detection is dropped when its BEV IoU with any
/// kept detection exceeds the threshold. Output keeps the visiting order,
/// truncated at max_keep.
std::vector<Detection> nms_bev(std::span<const Detection> detections, double iou_threshold,
                               std::size_t max_keep);

/// NMS, then score filter (keep score >= score_threshold), then truncation to
/// `count`.
std::vector<Detection> select_proposals(std::span<const Detection> detections,
                                        double iou_threshold, std::size_t count,
                                        double score_threshold);

}  // namespace vpf
