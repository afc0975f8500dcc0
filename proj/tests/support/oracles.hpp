#pragma once

// Reference implementations used as independent oracles. Everything here
// recomputes results from first principles (Monte-Carlo sampling, dense
// loops, full enumeration) without touching the library's fast paths.

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "vpf/heads_losses.hpp"
#include "vpf/rng.hpp"
#include "vpf/sparse_voxel.hpp"

namespace vpf::testing {

/// Half-plane point-in-rotated-rectangle test with its own corner math.
bool oracle_point_in_bev(double px, double py, const Box3D& box);

/// Rejection-sampling BEV IoU over the union bounding box.
double mc_iou_bev(const Box3D& a, const Box3D& b, int samples, Rng& rng);

/// Rejection-sampling volumetric IoU.
double mc_iou_3d(const Box3D& a, const Box3D& b, int samples, Rng& rng);

/// Dense triple-loop 3D convolution over the grid's (padded) bounding box.
/// Returns the expected feature at `site`, or an empty vector when no input
/// voxel touches the site's stencil.
std::vector<double> dense_conv3d_at(const SparseVoxelGrid& grid, const Tensor& kernel,
                                    const Tensor* bias, bool relu, const VoxelCoord& site);

/// Full-scan voxel query reference: every active voxel within the per-axis
/// range box, sorted by (Manhattan distance, i, j, k), truncated at k.
std::vector<VoxelCoord> brute_force_query(const SparseVoxelGrid& grid, const Vec3& center,
                                          const std::array<int, 3>& range, int k);

/// O(n^2) greedy NMS reference.
std::vector<Detection> nms_reference(std::span<const Detection> detections, double iou_threshold,
                                     std::size_t max_keep);

/// Minimum assignment total over all permutations of the zero-padded square
/// matrix (feasible up to ~8x8).
double min_assignment_total(const Eigen::MatrixXd& cost);

/// Central finite difference with step eps.
template <typename F>
double central_diff(F&& f, double x, double eps = 1e-5) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

/// |a - b| <= max(abs_floor, rel * max(|a|, |b|)).
bool close_rel(double a, double b, double rel, double abs_floor);

/// Random box with extents in [0.5, 4] and center within `spread` of origin.
Box3D random_box(Rng& rng, double spread = 4.0);

}  // namespace vpf::testing
