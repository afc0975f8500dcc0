#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "vpf/image_features.hpp"
#include "vpf/rng.hpp"

namespace vpf {

/// Half-widths of the uniform proposal-resizing noise.
struct ResizeConfig {
  double u_theta = 0.08;   ///< radians
  double u_xyzwlh = 0.15;  ///< meters, applied to each of x, y, z, w, l, h
};

/// Per-point visibility bits in VirtualPointSet::view_flags.
inline constexpr std::uint8_t kLeftInView = 1;
inline constexpr std::uint8_t kRightInView = 2;

/// Ordered grid of aggregation locations inside a proposal. Positions follow
/// the box_grid_points ordering (x-major, then y, then z) — fixed so the
/// flattened features feed a plain MLP head. After assemble_features each
/// point carries [left image feature | right image feature | x, y, z].
struct VirtualPointSet {
  Box3D proposal;
  std::array<int, 3> resolution{1, 1, 1};
  std::vector<Vec3> positions;
  int feature_dim = 0;
  std::vector<double> features;  ///< positions.size() * feature_dim, row-major
  std::vector<std::uint8_t> view_flags;

  std::span<const double> feature(std::size_t i) const {
    return {features.data() + i * feature_dim, static_cast<std::size_t>(feature_dim)};
  }
};

/// Grows each extent by `margin` meters (total, not per side); center and yaw
/// unchanged.
Box3D expand_proposal(const Box3D& box, double margin);

/// Adds an independent uniform draw in [-u_k, u_k] to each of the seven box
/// dimensions, in the fixed order x, y, z, w, l, h, theta. Resized extents
/// are clamped to >= 0.01 m.
Box3D random_resize(const Box3D& box, const ResizeConfig& cfg, Rng& rng);

/// Cell-center grid of resolution (N_x, N_y, N_z) inside the box (positions
/// only; features empty).
VirtualPointSet generate_virtual_points(const Box3D& box, const std::array<int, 3>& resolution);

/// Projects every virtual point to both image planes, samples the maps
/// bilinearly, and fills features as [left || right || x, y, z]. Points
/// behind a camera or outside its view contribute zeros for that side and a
/// cleared view flag.
void assemble_features(VirtualPointSet& points, const FeatureMap2D& left,
                       const FeatureMap2D& right, const CalibrationSet& calib_left,
                       const CalibrationSet& calib_right);

/// Diagnostic for the sampling-density gap: virtual points per proposal over
/// the mean count of actual LiDAR points inside a proposal. A proposal with
/// no interior points contributes 1 to the mean.
double foreground_density_ratio(const PointCloud& cloud, std::span<const Box3D> proposals,
                                const std::array<int, 3>& resolution);

}  // namespace vpf
