#include <benchmark/benchmark.h>

#include "vpf/rng.hpp"
#include "vpf/sparse_voxel.hpp"

namespace {

using namespace vpf;

VoxelizationConfig bench_voxels() {
  VoxelizationConfig cfg;
  cfg.origin = {0, -40, -3};
  cfg.voxel_size = {0.2, 0.2, 0.1};
  cfg.range = {{{0.0, 70.0}, {-40.0, 40.0}, {-3.0, 1.0}}};
  cfg.max_voxels = 1000000;
  return cfg;
}

/// Clustered occupancy around a handful of box-sized regions, KITTI-like.
SparseVoxelGrid clustered_grid(int channels, std::size_t voxels) {
  Rng rng(0xBE7C5);
  SparseVoxelGrid grid(bench_voxels(), channels);
  std::vector<double> feature(channels);
  std::vector<Vec3> centers;
  for (int c = 0; c < 40; ++c) {
    centers.emplace_back(rng.uniform(6, 55), rng.uniform(-18, 18), rng.uniform(-1.4, -0.2));
  }
  while (grid.size() < voxels) {
    const Vec3& c = centers[rng.next_below(centers.size())];
    const Vec3 p{c.x() + rng.uniform(-2.6, 2.6), c.y() + rng.uniform(-1.6, 1.6),
                 c.z() + rng.uniform(-1.2, 1.2)};
    const VoxelCoord coord = grid.coord_of(p);
    if (grid.contains(coord)) continue;
    for (double& f : feature) f = rng.uniform(-1, 1);
    grid.insert(coord, feature);
  }
  return grid;
}

void BM_Voxelize(benchmark::State& state) {
  Rng rng(0xBE7C6);
  PointCloud cloud;
  for (int i = 0; i < 20000; ++i) {
    cloud.points.push_back(
        {rng.uniform(0, 70), rng.uniform(-40, 40), rng.uniform(-3, 1), rng.uniform01()});
  }
  VoxelizationConfig cfg = bench_voxels();
  cfg.voxel_size = {0.05, 0.05, 0.1};
  cfg.max_voxels = 40000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(voxelize(cloud, cfg));
  }
  state.SetItemsProcessed(state.iterations() * cloud.size());
}
BENCHMARK(BM_Voxelize);

void BM_VoxelQuery(benchmark::State& state) {
  const auto grid = clustered_grid(16, 40000);
  const QueryConfig qcfg({{static_cast<int>(state.range(0)), static_cast<int>(state.range(0)),
                           static_cast<int>(state.range(0))}},
                         16);
  Rng rng(0xBE7C7);
  std::vector<Vec3> queries;
  for (int i = 0; i < 1024; ++i) {
    queries.emplace_back(rng.uniform(6, 55), rng.uniform(-18, 18), rng.uniform(-1.4, -0.2));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(voxel_query(grid, queries[i++ % queries.size()], qcfg, 0));
  }
}
BENCHMARK(BM_VoxelQuery)->Arg(2)->Arg(4);

void BM_SparseConv3d(benchmark::State& state) {
  const auto grid = clustered_grid(9, static_cast<std::size_t>(state.range(0)));
  Rng rng(0xBE7C8);
  Tensor kernel;
  kernel.shape = {12, 9, 3, 3, 3};
  kernel.values.resize(kernel.size());
  for (double& v : kernel.values) v = rng.uniform(-0.5, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sparse_conv3d(grid, kernel, /*submanifold=*/true));
  }
  state.SetItemsProcessed(state.iterations() * grid.size());
}
BENCHMARK(BM_SparseConv3d)->Arg(5000)->Arg(20000);

void BM_RoiPool(benchmark::State& state) {
  const auto d0 = clustered_grid(16, 40000);
  auto coarse_cfg = bench_voxels();
  coarse_cfg.voxel_size = {0.4, 0.4, 0.2};
  Rng rng(0xBE7C9);
  SparseVoxelGrid d1(coarse_cfg, 4), d2(coarse_cfg, 4);
  std::vector<double> feature(4);
  for (int i = 0; i < 20000; ++i) {
    const Vec3 p{rng.uniform(6, 55), rng.uniform(-18, 18), rng.uniform(-1.4, -0.2)};
    SparseVoxelGrid& target = i % 2 ? d1 : d2;
    const VoxelCoord coord = target.coord_of(p);
    if (target.contains(coord)) continue;
    for (double& f : feature) f = rng.uniform(-1, 1);
    target.insert(coord, feature);
  }

  WeightBundle weights;
  const int map_channels[3] = {16, 4, 4};
  for (int m = 0; m < 3; ++m) {
    for (int s = 0; s < 2; ++s) {
      const std::string prefix = "pool.m" + std::to_string(m) + ".s" + std::to_string(s);
      Tensor w1;
      w1.shape = {8, 3};
      w1.values.resize(24);
      for (double& v : w1.values) v = rng.uniform(-0.5, 0.5);
      weights.tensors[prefix + ".psi1.0.weight"] = std::move(w1);
      Tensor w2;
      w2.shape = {8, static_cast<std::size_t>(map_channels[m])};
      w2.values.resize(8 * map_channels[m]);
      for (double& v : w2.values) v = rng.uniform(-0.5, 0.5);
      weights.tensors[prefix + ".psi2.0.weight"] = std::move(w2);
    }
  }
  const QueryConfig qcfg({{2, 2, 2}, {4, 4, 4}}, 16);
  const SparseVoxelGrid* maps[3] = {&d0, &d1, &d2};

  Box3D proposal{20, 0, -0.8, 1.8, 4.4, 1.6, 0.5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(roi_pool(proposal, maps, qcfg, {6, 6, 6}, weights));
  }
  state.SetItemsProcessed(state.iterations() * 6 * 6 * 6 * 3 * 2);
}
BENCHMARK(BM_RoiPool);

}  // namespace

BENCHMARK_MAIN();
