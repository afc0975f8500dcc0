#include "vpf/sparse_voxel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "vpf/error.hpp"

namespace vpf {

namespace {

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  append_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

void append_f64_le(std::vector<std::uint8_t>& out, double v) {
  append_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

bool in_range(const Vec3& p, const VoxelizationConfig& cfg) {
  for (int a = 0; a < 3; ++a) {
    if (!(p(a) >= cfg.range[a][0] && p(a) < cfg.range[a][1])) return false;
  }
  return true;
}

/// Shared accumulation for voxelize / voxelize_virtual: mean of the first
/// max_points_per_voxel features landing in each cell, cells capped at
/// max_voxels in first-seen order.
class VoxelAccumulator {
 public:
  VoxelAccumulator(const VoxelizationConfig& cfg, int channels)
      : grid_(cfg, channels), channels_(channels) {}

  void add(const Vec3& position, std::span<const double> feature) {
    if (!in_range(position, grid_.config())) return;
    const VoxelCoord coord = grid_.coord_of(position);
    auto idx = grid_.index_of(coord);
    if (!idx) {
      if (grid_.size() >= static_cast<std::size_t>(grid_.config().max_voxels)) return;
      std::vector<double> zeros(channels_, 0.0);
      idx = grid_.insert(coord, zeros);
      counts_.push_back(0);
    }
    if (counts_[*idx] >= grid_.config().max_points_per_voxel) return;
    auto acc = grid_.feature_mut(*idx);
    for (int c = 0; c < channels_; ++c) acc[c] += feature[c];
    ++counts_[*idx];
  }

  SparseVoxelGrid finish() {
    for (std::size_t v = 0; v < grid_.size(); ++v) {
      auto acc = grid_.feature_mut(v);
      const double inv = 1.0 / counts_[v];
      for (int c = 0; c < channels_; ++c) acc[c] *= inv;
    }
    return std::move(grid_);
  }

 private:
  SparseVoxelGrid grid_;
  int channels_;
  std::vector<int> counts_;
};

}  // namespace

void validate(const VoxelizationConfig& cfg) {
  for (int a = 0; a < 3; ++a) {
    if (!(cfg.voxel_size(a) > 0.0)) throw ValidationError("VoxelizationConfig: voxel size <= 0");
    if (!(cfg.range[a][0] < cfg.range[a][1])) {
      throw ValidationError("VoxelizationConfig: empty range on axis " + std::to_string(a));
    }
  }
  if (cfg.max_points_per_voxel < 1 || cfg.max_voxels < 1) {
    throw ValidationError("VoxelizationConfig: caps must be >= 1");
  }
}

SparseVoxelGrid::SparseVoxelGrid(VoxelizationConfig config, int channels)
    : config_(std::move(config)), channels_(channels) {
  validate(config_);
  if (channels_ < 1) throw ValidationError("SparseVoxelGrid: channels must be >= 1");
}

std::optional<std::size_t> SparseVoxelGrid::index_of(const VoxelCoord& coord) const {
  const auto it = index_.find(coord);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t SparseVoxelGrid::insert(const VoxelCoord& coord, std::span<const double> feature) {
  if (feature.size() != static_cast<std::size_t>(channels_)) {
    throw ValidationError("SparseVoxelGrid::insert: feature dimension mismatch");
  }
  if (index_.count(coord)) throw ValidationError("SparseVoxelGrid::insert: duplicate coordinate");
  const std::size_t idx = coords_.size();
  coords_.push_back(coord);
  features_.insert(features_.end(), feature.begin(), feature.end());
  index_.emplace(coord, static_cast<std::uint32_t>(idx));
  return idx;
}

Vec3 SparseVoxelGrid::voxel_center(const VoxelCoord& coord) const {
  return {config_.origin(0) + (coord.i + 0.5) * config_.voxel_size(0),
          config_.origin(1) + (coord.j + 0.5) * config_.voxel_size(1),
          config_.origin(2) + (coord.k + 0.5) * config_.voxel_size(2)};
}

VoxelCoord SparseVoxelGrid::coord_of(const Vec3& p) const {
  return {static_cast<std::int32_t>(std::floor((p.x() - config_.origin(0)) / config_.voxel_size(0))),
          static_cast<std::int32_t>(std::floor((p.y() - config_.origin(1)) / config_.voxel_size(1))),
          static_cast<std::int32_t>(std::floor((p.z() - config_.origin(2)) / config_.voxel_size(2)))};
}

QueryConfig::QueryConfig(std::vector<std::array<int, 3>> ranges, std::vector<int> k_per_scale)
    : ranges_(std::move(ranges)), k_per_scale_(std::move(k_per_scale)) {
  if (ranges_.empty() || ranges_.size() != k_per_scale_.size()) {
    throw ValidationError("QueryConfig: ranges and K lists must be non-empty and equal length");
  }
  for (int k : k_per_scale_) {
    if (k < 1) throw ValidationError("QueryConfig: K must be >= 1");
  }
  offsets_.reserve(ranges_.size());
  for (const auto& range : ranges_) {
    for (int r : range) {
      if (r < 0) throw ValidationError("QueryConfig: ranges must be >= 0");
    }
    std::vector<VoxelCoord> offsets;
    offsets.reserve(static_cast<std::size_t>(2 * range[0] + 1) * (2 * range[1] + 1) *
                    (2 * range[2] + 1));
    for (int di = -range[0]; di <= range[0]; ++di) {
      for (int dj = -range[1]; dj <= range[1]; ++dj) {
        for (int dk = -range[2]; dk <= range[2]; ++dk) {
          offsets.push_back({di, dj, dk});
        }
      }
    }
    // Ascending (Manhattan distance, di, dj, dk). Offsets translate by the
    // query cell, so this is also ascending (distance, i, j, k) in absolute
    // coordinates — the documented tie-break.
    std::sort(offsets.begin(), offsets.end(), [](const VoxelCoord& a, const VoxelCoord& b) {
      const int da = std::abs(a.i) + std::abs(a.j) + std::abs(a.k);
      const int db = std::abs(b.i) + std::abs(b.j) + std::abs(b.k);
      if (da != db) return da < db;
      if (a.i != b.i) return a.i < b.i;
      if (a.j != b.j) return a.j < b.j;
      return a.k < b.k;
    });
    offsets_.push_back(std::move(offsets));
  }
}

QueryConfig::QueryConfig(std::vector<std::array<int, 3>> ranges, int k)
    : QueryConfig(ranges, std::vector<int>(ranges.size(), k)) {}

SparseVoxelGrid voxelize(const PointCloud& cloud, const VoxelizationConfig& cfg) {
  validate(cfg);
  VoxelAccumulator acc(cfg, 4);
  for (const auto& p : cloud.points) {
    const double feature[4] = {p.x, p.y, p.z, p.intensity};
    acc.add({p.x, p.y, p.z}, feature);
  }
  return acc.finish();
}

SparseVoxelGrid voxelize_virtual(const VirtualPointSet& points, const VoxelizationConfig& cfg) {
  validate(cfg);
  if (points.feature_dim < 1) {
    throw ValidationError("voxelize_virtual: virtual points have no assembled features");
  }
  VoxelAccumulator acc(cfg, points.feature_dim);
  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    acc.add(points.positions[i], points.feature(i));
  }
  return acc.finish();
}

SparseVoxelGrid sparse_conv3d(const SparseVoxelGrid& grid, const Tensor& kernel, bool submanifold,
                              Activation activation, const Tensor* bias) {
  if (kernel.shape.size() != 5 || kernel.shape[2] != 3 || kernel.shape[3] != 3 ||
      kernel.shape[4] != 3) {
    throw ShapeError("sparse_conv3d: kernel must have shape (C_out, C_in, 3, 3, 3)");
  }
  const int c_out = static_cast<int>(kernel.shape[0]);
  const int c_in = static_cast<int>(kernel.shape[1]);
  if (c_in != grid.channels()) {
    throw ShapeError("sparse_conv3d: kernel C_in " + std::to_string(c_in) + " != grid channels " +
                     std::to_string(grid.channels()));
  }
  if (bias && (bias->shape.size() != 1 || static_cast<int>(bias->shape[0]) != c_out)) {
    throw ShapeError("sparse_conv3d: bias must have shape (C_out)");
  }

  SparseVoxelGrid out(grid.config(), c_out);
  if (grid.empty()) return out;

  // Output sites: input sites (submanifold) or their dilation by the 3^3
  // stencil, in deterministic first-seen order.
  const std::vector<double> zeros(c_out, 0.0);
  if (submanifold) {
    for (const VoxelCoord& coord : grid.coords()) out.insert(coord, zeros);
  } else {
    for (const VoxelCoord& coord : grid.coords()) {
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          for (int dk = -1; dk <= 1; ++dk) {
            const VoxelCoord site{coord.i + di, coord.j + dj, coord.k + dk};
            if (!out.contains(site)) out.insert(site, zeros);
          }
        }
      }
    }
  }

  const double* w = kernel.values.data();
  std::vector<double> acc(c_out);
  for (std::size_t v = 0; v < out.size(); ++v) {
    const VoxelCoord site = out.coords()[v];
    for (int co = 0; co < c_out; ++co) acc[co] = bias ? bias->values[co] : 0.0;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) {
          const VoxelCoord neighbor{site.i + a - 1, site.j + b - 1, site.k + c - 1};
          const auto idx = grid.index_of(neighbor);
          if (!idx) continue;
          const auto input = grid.feature(*idx);
          const std::size_t w_base = (static_cast<std::size_t>(a) * 3 + b) * 3 + c;
          for (int co = 0; co < c_out; ++co) {
            const double* wc = w + (static_cast<std::size_t>(co) * c_in * 27) + w_base;
            double sum = 0.0;
            for (int ci = 0; ci < c_in; ++ci) {
              sum += wc[static_cast<std::size_t>(ci) * 27] * input[ci];
            }
            acc[co] += sum;
          }
        }
      }
    }
    auto feature = out.feature_mut(v);
    for (int co = 0; co < c_out; ++co) {
      feature[co] = activation == Activation::relu ? std::max(0.0, acc[co]) : acc[co];
    }
  }
  return out;
}

SparseVoxelGrid spconv_stack(const SparseVoxelGrid& grid, const WeightBundle& weights) {
  SparseVoxelGrid current = grid;
  for (int layer = 1; layer <= 6; ++layer) {
    const std::string base = "spconv" + std::to_string(layer);
    const Tensor& kernel = weights.at(base + ".weight");
    const Tensor* bias = weights.find(base + ".bias");
    current = sparse_conv3d(current, kernel, /*submanifold=*/true, Activation::relu, bias);
  }
  return current;
}

std::vector<VoxelNeighbor> voxel_query(const SparseVoxelGrid& grid, const Vec3& center,
                                       const QueryConfig& qcfg, int scale_idx) {
  if (scale_idx < 0 || scale_idx >= qcfg.scales()) {
    throw DomainError("voxel_query: scale index out of range");
  }
  const VoxelCoord base = grid.coord_of(center);
  const int k_limit = qcfg.k(scale_idx);
  std::vector<VoxelNeighbor> neighbors;
  neighbors.reserve(static_cast<std::size_t>(k_limit));
  for (const VoxelCoord& offset : qcfg.offsets(scale_idx)) {
    const VoxelCoord coord{base.i + offset.i, base.j + offset.j, base.k + offset.k};
    const auto idx = grid.index_of(coord);
    if (!idx) continue;
    neighbors.push_back({coord, grid.voxel_center(coord), grid.feature(*idx)});
    if (neighbors.size() == static_cast<std::size_t>(k_limit)) break;
  }
  return neighbors;
}

Eigen::VectorXd aggregate(std::span<const VoxelNeighbor> neighbors, const Vec3& query_point,
                          const Mlp& psi1, const Mlp& psi2) {
  if (psi1.input_dim() != 3) throw ShapeError("aggregate: psi1 must take a 3-vector");
  if (psi1.output_dim() != psi2.output_dim()) {
    throw ShapeError("aggregate: psi1/psi2 output dims must match");
  }
  Eigen::VectorXd result = Eigen::VectorXd::Zero(psi1.output_dim());
  bool first = true;
  for (const VoxelNeighbor& n : neighbors) {
    if (static_cast<int>(n.feature.size()) != psi2.input_dim()) {
      throw ShapeError("aggregate: neighbor feature dim != psi2 input dim");
    }
    const Eigen::VectorXd offset = n.center - query_point;
    const Eigen::VectorXd feature =
        Eigen::Map<const Eigen::VectorXd>(n.feature.data(), static_cast<Eigen::Index>(n.feature.size()));
    const Eigen::VectorXd value = psi1.forward(offset) + psi2.forward(feature);
    if (first) {
      result = value;
      first = false;
    } else {
      result = result.cwiseMax(value);
    }
  }
  return result;
}

std::vector<double> roi_pool(const Box3D& proposal,
                             std::span<const SparseVoxelGrid* const> maps, const QueryConfig& qcfg,
                             const std::array<int, 3>& grid_res, const WeightBundle& weights) {
  struct PsiPair {
    Mlp psi1, psi2;
  };
  std::vector<std::vector<PsiPair>> mlps(maps.size());
  int out_dim = -1;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    for (int s = 0; s < qcfg.scales(); ++s) {
      const std::string prefix = "pool.m" + std::to_string(m) + ".s" + std::to_string(s);
      PsiPair pair{mlp_from_bundle(weights, prefix + ".psi1"),
                   mlp_from_bundle(weights, prefix + ".psi2")};
      if (pair.psi2.input_dim() != maps[m]->channels()) {
        throw ShapeError("roi_pool: psi2 input dim != map channels for " + prefix);
      }
      if (out_dim < 0) out_dim = pair.psi1.output_dim();
      if (pair.psi1.output_dim() != out_dim || pair.psi2.output_dim() != out_dim) {
        throw ShapeError("roi_pool: aggregated output dims must match across maps and scales");
      }
      mlps[m].push_back(std::move(pair));
    }
  }

  const std::vector<Vec3> query_points = box_grid_points(proposal, grid_res);
  std::vector<double> pooled;
  pooled.reserve(query_points.size() * maps.size() * qcfg.scales() * out_dim);
  for (const Vec3& point : query_points) {
    for (std::size_t m = 0; m < maps.size(); ++m) {
      for (int s = 0; s < qcfg.scales(); ++s) {
        const auto neighbors = voxel_query(*maps[m], point, qcfg, s);
        const Eigen::VectorXd value = aggregate(neighbors, point, mlps[m][s].psi1, mlps[m][s].psi2);
        pooled.insert(pooled.end(), value.data(), value.data() + value.size());
      }
    }
  }
  return pooled;
}

namespace {
constexpr char kGridMagic[] = {'V', 'P', 'F', 'G', '1', '\n'};
}

std::vector<std::uint8_t> serialize_grid(const SparseVoxelGrid& grid) {
  std::vector<std::uint8_t> out(kGridMagic, kGridMagic + sizeof(kGridMagic));
  const VoxelizationConfig& cfg = grid.config();
  for (int a = 0; a < 3; ++a) append_f64_le(out, cfg.origin(a));
  for (int a = 0; a < 3; ++a) append_f64_le(out, cfg.voxel_size(a));
  for (int a = 0; a < 3; ++a) {
    append_f64_le(out, cfg.range[a][0]);
    append_f64_le(out, cfg.range[a][1]);
  }
  append_u32_le(out, static_cast<std::uint32_t>(cfg.max_points_per_voxel));
  append_u32_le(out, static_cast<std::uint32_t>(cfg.max_voxels));
  append_u32_le(out, static_cast<std::uint32_t>(grid.channels()));
  append_u32_le(out, static_cast<std::uint32_t>(grid.size()));
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const VoxelCoord& coord = grid.coords()[v];
    append_u32_le(out, static_cast<std::uint32_t>(coord.i));
    append_u32_le(out, static_cast<std::uint32_t>(coord.j));
    append_u32_le(out, static_cast<std::uint32_t>(coord.k));
    for (double f : grid.feature(v)) append_f32_le(out, static_cast<float>(f));
  }
  return out;
}

SparseVoxelGrid load_grid(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kGridMagic) ||
      std::memcmp(bytes.data(), kGridMagic, sizeof(kGridMagic)) != 0) {
    throw FormatError("load_grid: bad magic, expected VPFG1");
  }
  std::size_t off = sizeof(kGridMagic);
  auto need = [&](std::size_t n) {
    if (bytes.size() - off < n) throw TruncatedInput("load_grid: unexpected end of stream");
  };
  auto f64 = [&]() {
    need(8);
    const double v = std::bit_cast<double>(read_u64_le(bytes.data() + off));
    off += 8;
    return v;
  };
  auto u32 = [&]() {
    need(4);
    const std::uint32_t v = read_u32_le(bytes.data() + off);
    off += 4;
    return v;
  };
  VoxelizationConfig cfg;
  for (int a = 0; a < 3; ++a) cfg.origin(a) = f64();
  for (int a = 0; a < 3; ++a) cfg.voxel_size(a) = f64();
  for (int a = 0; a < 3; ++a) {
    cfg.range[a][0] = f64();
    cfg.range[a][1] = f64();
  }
  cfg.max_points_per_voxel = static_cast<int>(u32());
  cfg.max_voxels = static_cast<int>(u32());
  const int channels = static_cast<int>(u32());
  const std::uint32_t count = u32();

  SparseVoxelGrid grid(cfg, channels);
  std::vector<double> feature(channels);
  for (std::uint32_t v = 0; v < count; ++v) {
    VoxelCoord coord;
    coord.i = static_cast<std::int32_t>(u32());
    coord.j = static_cast<std::int32_t>(u32());
    coord.k = static_cast<std::int32_t>(u32());
    need(4 * static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
      feature[c] = std::bit_cast<float>(read_u32_le(bytes.data() + off));
      off += 4;
    }
    grid.insert(coord, feature);
  }
  return grid;
}

}  // namespace vpf
