#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vpf/mlp.hpp"
#include "vpf/virtual_points.hpp"

namespace vpf {

struct VoxelizationConfig {
  Vec3 origin = Vec3::Zero();          ///< world position of voxel (0,0,0) corner
  Vec3 voxel_size = Vec3::Ones();      ///< meters per cell
  std::array<std::array<double, 2>, 3> range{{{0.0, 70.0}, {-40.0, 40.0}, {-3.0, 1.0}}};
  int max_points_per_voxel = 5;
  int max_voxels = 40000;
};

/// Throws ValidationError on non-positive voxel sizes or caps.
void validate(const VoxelizationConfig& cfg);

struct VoxelCoord {
  std::int32_t i = 0, j = 0, k = 0;
  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
};

struct VoxelCoordHash {
  std::size_t operator()(const VoxelCoord& c) const {
    std::uint64_t h = static_cast<std::uint32_t>(c.i);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.j);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.k);
    h *= 0xBF58476D1CE4E5B9ull;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Coordinate-indexed sparse container of per-voxel feature vectors. Voxels
/// keep their insertion order; the grid is immutable once built, so
/// concurrent read access is safe.
class SparseVoxelGrid {
 public:
  SparseVoxelGrid() = default;
  SparseVoxelGrid(VoxelizationConfig config, int channels);

  const VoxelizationConfig& config() const { return config_; }
  int channels() const { return channels_; }
  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }

  const std::vector<VoxelCoord>& coords() const { return coords_; }
  std::span<const double> feature(std::size_t index) const {
    return {features_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<double> feature_mut(std::size_t index) {
    return {features_.data() + index * channels_, static_cast<std::size_t>(channels_)};
  }

  std::optional<std::size_t> index_of(const VoxelCoord& coord) const;
  bool contains(const VoxelCoord& coord) const { return index_of(coord).has_value(); }

  /// Inserts a voxel with the given feature (throws ValidationError on
  /// duplicates or dimension mismatch). Returns the new index.
  std::size_t insert(const VoxelCoord& coord, std::span<const double> feature);

  /// World-space center of a voxel cell.
  Vec3 voxel_center(const VoxelCoord& coord) const;

  /// Voxel coordinate containing a world point (half-open cells [lo, hi)).
  VoxelCoord coord_of(const Vec3& p) const;

 private:
  VoxelizationConfig config_;
  int channels_ = 0;
  std::vector<VoxelCoord> coords_;
  std::vector<double> features_;
  std::unordered_map<VoxelCoord, std::uint32_t, VoxelCoordHash> index_;
};

/// Per-axis query ranges (voxel cells) and neighbor caps, one entry per
/// scale. Offset visit order is precomputed at construction: ascending
/// (|di|+|dj|+|dk|, di, dj, dk), which makes query results deterministic and
/// lets scans stop at K.
class QueryConfig {
 public:
  QueryConfig() = default;
  QueryConfig(std::vector<std::array<int, 3>> ranges, std::vector<int> k_per_scale);

  /// Convenience: one K shared by every scale.
  QueryConfig(std::vector<std::array<int, 3>> ranges, int k);

  int scales() const { return static_cast<int>(ranges_.size()); }
  const std::array<int, 3>& range(int scale) const { return ranges_[scale]; }
  int k(int scale) const { return k_per_scale_[scale]; }
  const std::vector<VoxelCoord>& offsets(int scale) const { return offsets_[scale]; }

 private:
  std::vector<std::array<int, 3>> ranges_;
  std::vector<int> k_per_scale_;
  std::vector<std::vector<VoxelCoord>> offsets_;
};

/// One query hit: integer cell, its world-space center, and a view of the
/// stored feature vector (valid while the grid is alive).
struct VoxelNeighbor {
  VoxelCoord coord;
  Vec3 center;
  std::span<const double> feature;
};

/// Points (x, y, z, intensity) to a C=4 grid: out-of-range points dropped
/// (half-open range on every axis), per-voxel feature is the mean of the
/// first max_points_per_voxel points, grid truncated at max_voxels in
/// first-seen order.
SparseVoxelGrid voxelize(const PointCloud& cloud, const VoxelizationConfig& cfg);

/// As voxelize, but the features are the virtual points' assembled vectors;
/// colliding points are averaged (same insertion-order caps). Points whose
/// features are all zero still occupy voxels.
SparseVoxelGrid voxelize_virtual(const VirtualPointSet& points, const VoxelizationConfig& cfg);

/// Sparse 3x3x3 cross-correlation. Kernel shape (C_out, C_in, 3, 3, 3),
/// optional bias (C_out). The regular variant emits every voxel with at least
/// one active input in its 3^3 stencil; the submanifold variant emits only at
/// active input sites.
SparseVoxelGrid sparse_conv3d(const SparseVoxelGrid& grid, const Tensor& kernel, bool submanifold,
                              Activation activation = Activation::relu,
                              const Tensor* bias = nullptr);

/// Six-block sparse feature extractor over the voxelized virtual points:
/// layer i reads spconv{i}.weight (+ optional bias) from the bundle and runs
/// a submanifold conv with ReLU. Channel plan comes from the declared shapes.
SparseVoxelGrid spconv_stack(const SparseVoxelGrid& grid, const WeightBundle& weights);

/// Active voxels whose per-axis offsets from the query point's cell are
/// within the scale's range box, ordered ascending by (Manhattan distance,
/// i, j, k) and truncated at K.
std::vector<VoxelNeighbor> voxel_query(const SparseVoxelGrid& grid, const Vec3& center,
                                       const QueryConfig& qcfg, int scale_idx);

/// Neighborhood reduction: max_k { psi1(d_k - v) + psi2(F_k) } over the
/// neighbor list; the empty list yields the zero vector. psi1 takes the
/// 3-vector offset, psi2 the voxel feature; output dims must match.
Eigen::VectorXd aggregate(std::span<const VoxelNeighbor> neighbors, const Vec3& query_point,
                          const Mlp& psi1, const Mlp& psi2);

/// Multi-map multi-scale pooling over a G_x x G_y x G_z cell-center query
/// grid inside the proposal. For map m and scale s the bundle provides MLP
/// pairs under `pool.m{m}.s{s}.psi1` / `.psi2`. The pooled layout is
/// point-major: for each query point (grid order), for each map, for each
/// scale, the aggregated vector.
std::vector<double> roi_pool(const Box3D& proposal,
                             std::span<const SparseVoxelGrid* const> maps, const QueryConfig& qcfg,
                             const std::array<int, 3>& grid_res, const WeightBundle& weights);

/// Grid file: magic "VPFG1\n"; config block (origin, voxel size, ranges as
/// float64, max caps as u32, channel count u32); u32 voxel count; per voxel
/// i32 x3 coords + float32 x C features. Little-endian throughout.
std::vector<std::uint8_t> serialize_grid(const SparseVoxelGrid& grid);
SparseVoxelGrid load_grid(std::span<const std::uint8_t> bytes);

}  // namespace vpf
