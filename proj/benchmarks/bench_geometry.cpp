#include <benchmark/benchmark.h>

#include "vpf/geometry.hpp"
#include "vpf/rng.hpp"

namespace {

using namespace vpf;

std::vector<Box3D> random_boxes(std::size_t count, double spread) {
  Rng rng(0xBE7C4);
  std::vector<Box3D> boxes(count);
  for (auto& box : boxes) {
    box.x = rng.uniform(-spread, spread);
    box.y = rng.uniform(-spread, spread);
    box.z = rng.uniform(-2, 2);
    box.w = rng.uniform(0.5, 4.0);
    box.l = rng.uniform(0.5, 4.0);
    box.h = rng.uniform(0.5, 4.0);
    box.theta = rng.uniform(-3.14159, 3.14159);
  }
  return boxes;
}

void BM_IouBev(benchmark::State& state) {
  const auto boxes = random_boxes(256, 2.0);
  std::size_t i = 0;
  for (auto _ : state) {
    const Box3D& a = boxes[i % boxes.size()];
    const Box3D& b = boxes[(i * 7 + 3) % boxes.size()];
    benchmark::DoNotOptimize(iou_bev(a, b));
    ++i;
  }
}
BENCHMARK(BM_IouBev);

void BM_Iou3d(benchmark::State& state) {
  const auto boxes = random_boxes(256, 2.0);
  std::size_t i = 0;
  for (auto _ : state) {
    const Box3D& a = boxes[i % boxes.size()];
    const Box3D& b = boxes[(i * 7 + 3) % boxes.size()];
    benchmark::DoNotOptimize(iou_3d(a, b));
    ++i;
  }
}
BENCHMARK(BM_Iou3d);

void BM_BoxCorners(benchmark::State& state) {
  const auto boxes = random_boxes(256, 20.0);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(box_corners(boxes[i++ % boxes.size()]));
  }
}
BENCHMARK(BM_BoxCorners);

void BM_BoxGridPoints(benchmark::State& state) {
  const auto boxes = random_boxes(16, 20.0);
  const std::array<int, 3> resolution{16, 8, 22};
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(box_grid_points(boxes[i++ % boxes.size()], resolution));
  }
  state.SetItemsProcessed(state.iterations() * 16 * 8 * 22);
}
BENCHMARK(BM_BoxGridPoints);

void BM_ResidualCodec(benchmark::State& state) {
  const auto boxes = random_boxes(256, 5.0);
  std::size_t i = 0;
  for (auto _ : state) {
    const Box3D& gt = boxes[i % boxes.size()];
    const Box3D& anchor = boxes[(i + 1) % boxes.size()];
    auto res = encode_residual(gt, anchor);
    res[6] = std::clamp(res[6], -1.0, 1.0);
    benchmark::DoNotOptimize(decode_residual(res, anchor));
    ++i;
  }
}
BENCHMARK(BM_ResidualCodec);

}  // namespace

BENCHMARK_MAIN();
