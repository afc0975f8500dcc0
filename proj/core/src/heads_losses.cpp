#include "vpf/heads_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vpf/error.hpp"

namespace vpf {

HeadOutput head_forward(std::span<const double> pooled, const WeightBundle& weights,
                        HeadBranch branch) {
  const std::string prefix = branch == HeadBranch::main ? "head.main" : "head.aux";
  const Mlp trunk = mlp_from_bundle(weights, prefix + ".fc", /*relu_after_last=*/true);
  if (static_cast<int>(pooled.size()) != trunk.input_dim()) {
    throw ShapeError("head_forward: pooled length " + std::to_string(pooled.size()) +
                     " != trunk input dim " + std::to_string(trunk.input_dim()));
  }
  const Eigen::VectorXd hidden = trunk.forward(
      Eigen::Map<const Eigen::VectorXd>(pooled.data(), static_cast<Eigen::Index>(pooled.size())));

  const Mlp reg = mlp_from_bundle(weights, prefix + ".reg");
  const Eigen::VectorXd residual = reg.forward(hidden);
  if (residual.size() != 7) throw ShapeError("head_forward: regression head must emit 7 values");

  HeadOutput out;
  for (int i = 0; i < 7; ++i) out.residual[i] = residual(i);
  if (branch == HeadBranch::main) {
    const Mlp iou = mlp_from_bundle(weights, prefix + ".iou");
    const Eigen::VectorXd logit = iou.forward(hidden);
    if (logit.size() != 1) throw ShapeError("head_forward: IoU head must emit 1 value");
    out.iou_logit = logit(0);
  }
  return out;
}

ValueGrad smooth_l1(double pred, double target) {
  const double x = pred - target;
  if (std::abs(x) < 1.0) return {0.5 * x * x, x};
  return {std::abs(x) - 0.5, x > 0.0 ? 1.0 : -1.0};
}

ValueGrad focal_loss(double p, int y, double alpha, double gamma) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("focal_loss: p must lie strictly in (0, 1)");
  if (y != 0 && y != 1) throw DomainError("focal_loss: label must be 0 or 1");
  const double pt = y == 1 ? p : 1.0 - p;
  const double at = y == 1 ? alpha : 1.0 - alpha;
  const double one_minus = 1.0 - pt;
  const double value = -at * std::pow(one_minus, gamma) * std::log(pt);
  // d/dpt [-at (1-pt)^g log(pt)] = at [g (1-pt)^(g-1) log(pt) - (1-pt)^g / pt]
  const double d_pt =
      at * (gamma * std::pow(one_minus, gamma - 1.0) * std::log(pt) - std::pow(one_minus, gamma) / pt);
  return {value, y == 1 ? d_pt : -d_pt};
}

ValueGrad bce_with_logit(double logit, double target) {
  const double value =
      std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
  const double sigmoid = 1.0 / (1.0 + std::exp(-logit));
  return {value, sigmoid - target};
}

RcnnLossResult rcnn_loss(const BoxResidual& main_pred, const BoxResidual& aux_pred,
                         double iou_logit, const RcnnTargets& targets, const LossWeights& weights) {
  if (weights.w_main < 0.0 || weights.w_aux < 0.0) {
    throw DomainError("rcnn_loss: branch weights must be >= 0");
  }
  RcnnLossResult result;
  const ValueGrad iou = bce_with_logit(iou_logit, targets.iou);
  result.value = iou.value;
  result.d_iou_logit = iou.grad;
  for (int i = 0; i < 7; ++i) {
    const ValueGrad main_term = smooth_l1(main_pred[i], targets.residual[i]);
    const ValueGrad aux_term = smooth_l1(aux_pred[i], targets.residual[i]);
    result.value += weights.w_main * main_term.value + weights.w_aux * aux_term.value;
    result.d_main[i] = weights.w_main * main_term.grad;
    result.d_aux[i] = weights.w_aux * aux_term.grad;
  }
  return result;
}

RpnLossResult rpn_loss(std::span<const double> cls_probs,
                       std::span<const BoxResidual> box_preds, std::span<const Box3D> anchors,
                       std::span<const std::optional<Box3D>> gts, double beta, double focal_alpha,
                       double focal_gamma) {
  const std::size_t n = cls_probs.size();
  if (box_preds.size() != n || anchors.size() != n || gts.size() != n) {
    throw ShapeError("rpn_loss: per-anchor spans must have equal length");
  }
  RpnLossResult result;
  result.d_cls.resize(n, 0.0);
  result.d_box.assign(n, BoxResidual{});
  for (std::size_t i = 0; i < n; ++i) {
    const int label = gts[i].has_value() ? 1 : 0;
    const ValueGrad cls = focal_loss(cls_probs[i], label, focal_alpha, focal_gamma);
    result.value += cls.value;
    result.d_cls[i] = cls.grad;
    if (!gts[i]) continue;
    const BoxResidual target = encode_residual(*gts[i], anchors[i]);
    for (int d = 0; d < 7; ++d) {
      const ValueGrad reg = smooth_l1(box_preds[i][d], target[d]);
      result.value += beta * reg.value;
      result.d_box[i][d] = beta * reg.grad;
    }
  }
  return result;
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> detections) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  return order;
}

}  // namespace

std::vector<Detection> nms_bev(std::span<const Detection> detections, double iou_threshold,
                               std::size_t max_keep) {
  std::vector<Detection> kept;
  for (std::size_t idx : score_order(detections)) {
    const Detection& candidate = detections[idx];
    bool suppressed = false;
    for (const Detection& keeper : kept) {
      if (iou_bev(candidate.box, keeper.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    kept.push_back(candidate);
    if (kept.size() == max_keep) break;
  }
  return kept;
}

std::vector<Detection> select_proposals(std::span<const Detection> detections,
                                        double iou_threshold, std::size_t count,
                                        double score_threshold) {
  std::vector<Detection> kept = nms_bev(detections, iou_threshold, detections.size());
  std::erase_if(kept, [&](const Detection& d) { return d.score < score_threshold; });
  if (kept.size() > count) kept.resize(count);
  return kept;
}

}  // namespace vpf
