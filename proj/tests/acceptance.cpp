// Acceptance suite: independent-oracle checks over the full pipeline, one
// pass/fail line per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "vpf/augmentation.hpp"
#include "vpf/evaluation.hpp"
#include "vpf/pipeline.hpp"

using namespace vpf;
using namespace vpf::testing;

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

int g_failures = 0;

void report(int number, const char* label, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %s%s%s\n", pass ? "PASS" : "FAIL", number, label,
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run_criterion(int number, const char* label, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(number, label, pass, detail);
  } catch (const std::exception& e) {
    report(number, label, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), fmt, a, b);
  return buf;
}

// -- 1: rotated IoU vs Monte Carlo --------------------------------------------

std::pair<bool, std::string> criterion_iou_monte_carlo() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(0xACCE1);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Box3D a = random_box(rng, 1.5);
    const Box3D b = random_box(rng, 1.5);
    Rng mc_bev = rng.split(2 * trial);
    Rng mc_vol = rng.split(2 * trial + 1);
    const double bev_err = std::abs(iou_bev(a, b) - mc_iou_bev(a, b, 1000000, mc_bev));
    const double vol_err = std::abs(iou_3d(a, b) - mc_iou_3d(a, b, 1000000, mc_vol));
    worst = std::max({worst, bev_err, vol_err});
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst <= 0.01 && elapsed < 60.0;
  return {pass, format("max |poly - MC| = %.5f over 200 pairs, %.1f s", worst, elapsed)};
}

// -- 2: sparse conv vs dense oracle -------------------------------------------

std::pair<bool, std::string> criterion_sparse_conv() {
  Rng rng(0xACCE2);
  VoxelizationConfig vcfg;
  vcfg.origin = {-50, -50, -50};
  vcfg.voxel_size = {1, 1, 1};
  vcfg.range = {{{-50.0, 50.0}, {-50.0, 50.0}, {-50.0, 50.0}}};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int extent = 4 + static_cast<int>(rng.next_below(9));  // up to 12^3
    const int c_in = 1 + static_cast<int>(rng.next_below(3));
    const int c_out = 1 + static_cast<int>(rng.next_below(3));
    SparseVoxelGrid grid(vcfg, c_in);
    std::vector<double> feature(c_in);
    for (int i = 0; i < extent; ++i) {
      for (int j = 0; j < extent; ++j) {
        for (int k = 0; k < extent; ++k) {
          if (rng.uniform01() >= 0.18) continue;
          for (double& f : feature) f = rng.uniform(-1, 1);
          grid.insert({i, j, k}, feature);
        }
      }
    }
    Tensor kernel;
    kernel.shape = {static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in), 3, 3, 3};
    kernel.values.resize(kernel.size());
    for (double& v : kernel.values) v = rng.uniform(-0.5, 0.5);

    const bool submanifold = trial % 2 == 0;
    const SparseVoxelGrid out = sparse_conv3d(grid, kernel, submanifold, Activation::relu);
    for (std::size_t v = 0; v < out.size(); ++v) {
      const auto expected = dense_conv3d_at(grid, kernel, nullptr, true, out.coords()[v]);
      if (expected.empty()) return {false, "active site without stencil support"};
      for (int c = 0; c < c_out; ++c) {
        worst = std::max(worst, std::abs(out.feature(v)[c] - expected[c]));
      }
    }
  }
  return {worst <= 1e-5, format("max abs error %.2e over 50 grids", worst)};
}

// -- 3: voxel query vs brute force ---------------------------------------------

std::pair<bool, std::string> criterion_voxel_query() {
  Rng rng(0xACCE3);
  VoxelizationConfig vcfg;
  vcfg.origin = {-50, -50, -50};
  vcfg.voxel_size = {0.5, 0.5, 0.5};
  vcfg.range = {{{-50.0, 50.0}, {-50.0, 50.0}, {-50.0, 50.0}}};
  const std::array<int, 3> range_options[] = {{2, 2, 2}, {4, 4, 4}, {1, 2, 3}};
  for (int trial = 0; trial < 100; ++trial) {
    SparseVoxelGrid grid(vcfg, 2);
    const int extent = 10 + static_cast<int>(rng.next_below(10));
    const double density = rng.uniform(0.02, 0.5);
    std::vector<double> feature(2);
    for (int i = 0; i < extent; ++i) {
      for (int j = 0; j < extent; ++j) {
        for (int k = 0; k < extent; ++k) {
          if (rng.uniform01() >= density) continue;
          feature[0] = rng.uniform(-1, 1);
          feature[1] = rng.uniform(-1, 1);
          grid.insert({i, j, k}, feature);
        }
      }
    }
    const std::array<int, 3> range = range_options[rng.next_below(3)];
    const int k_limit = 1 + static_cast<int>(rng.next_below(20));
    const QueryConfig qcfg({range}, k_limit);
    const Vec3 center{-50.0 + rng.uniform(0.0, extent * 0.5),
                      -50.0 + rng.uniform(0.0, extent * 0.5),
                      -50.0 + rng.uniform(0.0, extent * 0.5)};
    const auto fast = voxel_query(grid, center, qcfg, 0);
    const auto slow = brute_force_query(grid, center, range, k_limit);
    if (fast.size() != slow.size()) return {false, "result size mismatch"};
    for (std::size_t i = 0; i < slow.size(); ++i) {
      if (!(fast[i].coord == slow[i])) return {false, "order mismatch"};
    }
  }
  return {true, "100 random grids/queries, exact set-and-order equality"};
}

// -- 4: loss gradients vs finite differences --------------------------------------

std::pair<bool, std::string> criterion_gradients() {
  Rng rng(0xACCE4);
  auto check = [&](double analytic, double fd) {
    return std::abs(analytic - fd) <=
           std::max(1e-7, 1e-4 * std::max(std::abs(analytic), std::abs(fd)));
  };
  int failures = 0;

  for (int trial = 0; trial < 500; ++trial) {
    const double target = rng.uniform(-3, 3);
    double pred = target + rng.uniform(-2.5, 2.5);
    if (std::abs(std::abs(pred - target) - 1.0) < 1e-3) pred += 0.01;
    if (!check(smooth_l1(pred, target).grad,
               central_diff([&](double x) { return smooth_l1(x, target).value; }, pred))) {
      ++failures;
    }
  }
  for (int trial = 0; trial < 500; ++trial) {
    const double p = rng.uniform(0.05, 0.95);
    const int y = rng.uniform01() < 0.5 ? 0 : 1;
    if (!check(focal_loss(p, y).grad,
               central_diff([&](double x) { return focal_loss(x, y).value; }, p))) {
      ++failures;
    }
  }
  for (int trial = 0; trial < 500; ++trial) {
    const double logit = rng.uniform(-6, 6);
    const double target = rng.uniform01();
    if (!check(bce_with_logit(logit, target).grad,
               central_diff([&](double x) { return bce_with_logit(x, target).value; }, logit))) {
      ++failures;
    }
  }
  for (int trial = 0; trial < 500; ++trial) {
    BoxResidual main_pred, aux_pred;
    RcnnTargets targets;
    for (int i = 0; i < 7; ++i) {
      main_pred[i] = rng.uniform(-2, 2);
      aux_pred[i] = rng.uniform(-2, 2);
      targets.residual[i] = rng.uniform(-1, 1);
      if (std::abs(std::abs(main_pred[i] - targets.residual[i]) - 1.0) < 1e-3) main_pred[i] += 0.01;
      if (std::abs(std::abs(aux_pred[i] - targets.residual[i]) - 1.0) < 1e-3) aux_pred[i] += 0.01;
    }
    targets.iou = rng.uniform01();
    const double logit = rng.uniform(-3, 3);
    const LossWeights lw{rng.uniform(0, 2), rng.uniform(0, 2)};
    const auto result = rcnn_loss(main_pred, aux_pred, logit, targets, lw);
    const int dim = static_cast<int>(rng.next_below(7));
    const bool pick_aux = rng.uniform01() < 0.5;
    const double analytic = pick_aux ? result.d_aux[dim] : result.d_main[dim];
    const double fd = central_diff(
        [&](double x) {
          BoxResidual main_p = main_pred, aux_p = aux_pred;
          (pick_aux ? aux_p[dim] : main_p[dim]) = x;
          return rcnn_loss(main_p, aux_p, logit, targets, lw).value;
        },
        pick_aux ? aux_pred[dim] : main_pred[dim]);
    if (!check(analytic, fd)) ++failures;
    if (!check(result.d_iou_logit,
               central_diff(
                   [&](double x) { return rcnn_loss(main_pred, aux_pred, x, targets, lw).value; },
                   logit))) {
      ++failures;
    }
  }
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 4;
    std::vector<double> probs(n);
    std::vector<BoxResidual> preds(n);
    std::vector<Box3D> anchors(n);
    std::vector<std::optional<Box3D>> gts(n);
    for (int i = 0; i < n; ++i) {
      probs[i] = rng.uniform(0.05, 0.95);
      anchors[i] = random_box(rng);
      if (i % 2 == 0) {
        Box3D gt = random_box(rng);
        gt.theta = normalize_angle(anchors[i].theta + rng.uniform(-1.0, 1.0));
        gts[i] = gt;
        preds[i] = encode_residual(gt, anchors[i]);
        for (int d = 0; d < 7; ++d) {
          preds[i][d] += rng.uniform(-0.4, 0.4);
          if (std::abs(std::abs(preds[i][d] - encode_residual(gt, anchors[i])[d]) - 1.0) < 1e-3) {
            preds[i][d] += 0.01;
          }
        }
      }
    }
    const double beta = rng.uniform(0.5, 2.5);
    const auto result = rpn_loss(probs, preds, anchors, gts, beta);
    const int i = 2 * static_cast<int>(rng.next_below(n / 2));  // a positive anchor
    const int d = static_cast<int>(rng.next_below(7));
    const double fd_box = central_diff(
        [&](double x) {
          auto p = preds;
          p[i][d] = x;
          return rpn_loss(probs, p, anchors, gts, beta).value;
        },
        preds[i][d]);
    if (!check(result.d_box[i][d], fd_box)) ++failures;
    const int ci = static_cast<int>(rng.next_below(n));
    const double fd_cls = central_diff(
        [&](double x) {
          auto pr = probs;
          pr[ci] = x;
          return rpn_loss(pr, preds, anchors, gts, beta).value;
        },
        probs[ci]);
    if (!check(result.d_cls[ci], fd_cls)) ++failures;
  }
  return {failures == 0,
          format("%.0f mismatches over 2500 randomized gradient checks",
                 static_cast<double>(failures))};
}

// -- 5: residual codec round trip ---------------------------------------------------

std::pair<bool, std::string> criterion_residual_codec() {
  Rng rng(0xACCE5);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Box3D anchor = random_box(rng);
    Box3D gt = random_box(rng);
    gt.theta = normalize_angle(anchor.theta + rng.uniform(-kPi / 2 + 1e-9, kPi / 2 - 1e-9));
    const Box3D decoded = decode_residual(encode_residual(gt, anchor), anchor);
    worst = std::max({worst, std::abs(decoded.x - gt.x), std::abs(decoded.y - gt.y),
                      std::abs(decoded.z - gt.z), std::abs(decoded.w - gt.w),
                      std::abs(decoded.l - gt.l), std::abs(decoded.h - gt.h),
                      std::abs(normalize_angle(decoded.theta - gt.theta))});
  }
  return {worst <= 1e-9, format("max abs error %.2e over 10^4 pairs", worst)};
}

// -- 6: virtual point density ----------------------------------------------------------

std::pair<bool, std::string> criterion_density() {
  const Box3D box{10, 0, 0, 1.7, 4.2, 1.6, 0.3};
  const std::size_t count = generate_virtual_points(box, {16, 8, 22}).positions.size();
  if (count != 2816) return {false, format("resolution (16,8,22) gave %.0f points", double(count))};

  Rng rng(0xACCE6);
  const Scene scene = make_fixture_scene(rng, {.objects = 6, .points_per_object = 130});
  std::vector<Box3D> proposals;
  for (const auto& obj : scene.labels) proposals.push_back(obj.box);
  const double ratio = foreground_density_ratio(scene.cloud, proposals, {16, 8, 22});
  return {ratio >= 15.0, format("2816 points/proposal; density ratio %.1fx (>= 15x)", ratio)};
}

// -- 7: Hungarian vs permutation enumeration ----------------------------------------------

std::pair<bool, std::string> criterion_hungarian() {
  Rng rng(0xACCE7);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 1 + static_cast<int>(rng.next_below(7));
    const int cols = 1 + static_cast<int>(rng.next_below(7));
    Eigen::MatrixXd cost(rows, cols);
    for (int r = 0; r < rows; ++r) {
      // Integer-valued costs make both totals exact in double arithmetic.
      for (int c = 0; c < cols; ++c) cost(r, c) = static_cast<double>(rng.next_below(1000));
    }
    const auto pairs = hungarian_assign(cost, 1e18);
    double total = 0.0;
    for (const auto& [r, c] : pairs) total += cost(r, c);
    if (total != min_assignment_total(cost)) {
      return {false, format("trial %.0f: total %.0f != enumerated minimum", double(trial), total)};
    }
  }
  return {true, "200 trials up to 7x7, exact equality"};
}

// -- 8: AP40 ----------------------------------------------------------------------------

std::pair<bool, std::string> criterion_ap40() {
  // Hand-built 5-frame set. Pooled by descending score the detections read
  // TP, FP, TP, TP, FP, TP against 4 counted ground truths:
  //   precisions 1, 1/2, 2/3, 3/4, 3/5, 2/3 at recalls 1/4, 1/4, 1/2, 3/4, 3/4, 1.
  // Right-max interpolation samples 1 (r <= 1/4), 3/4 (1/4 < r <= 3/4) and
  // 2/3 (r > 3/4), so AP40 = (10*1 + 20*(3/4) + 10*(2/3)) / 40 = 19/24.
  const Box3D base{10, 0, 0, 2, 4, 1.5, 0.2};
  auto shifted = [&](double dx) {
    Box3D b = base;
    b.x += dx;
    return b;
  };
  std::vector<EvalFrame> frames(5);
  frames[0].gts = {{shifted(0), false}};
  frames[0].dets = {{shifted(0), 0.95, 0.0}};
  frames[1].gts = {{shifted(30), false}};
  frames[1].dets = {{shifted(200), 0.90, 0.0}, {shifted(30), 0.85, 0.0}};
  frames[2].gts = {{shifted(60), false}};
  frames[2].dets = {{shifted(60), 0.80, 0.0}};
  frames[3].gts = {};
  frames[3].dets = {{shifted(300), 0.75, 0.0}};
  frames[4].gts = {{shifted(90), false}};
  frames[4].dets = {{shifted(90), 0.70, 0.0}};
  const auto curve = ap40(frames, {}, MatchMetric::iou_3d);
  if (!curve) return {false, "AP unexpectedly undefined"};
  const double expected = 19.0 / 24.0;
  if (std::abs(curve->ap - expected) > 1e-12) {
    return {false, format("AP %.15f != hand value %.15f", curve->ap, expected)};
  }

  // Perfect detections on the mixed-difficulty fixture: AP 1.0 in every bucket.
  Rng rng(0xACCE8);
  std::vector<Scene> scenes;
  for (int f = 0; f < 5; ++f) {
    Rng frame_rng = rng.split(f);
    scenes.push_back(make_fixture_scene(frame_rng, {.objects = 5, .points_per_object = 60}));
  }
  for (const Difficulty difficulty : {Difficulty::easy, Difficulty::moderate, Difficulty::hard}) {
    std::vector<EvalFrame> eval_frames;
    bool any_counted = false;
    for (const Scene& scene : scenes) {
      EvalFrame frame;
      for (const auto& obj : scene.labels) {
        const bool counted = difficulty_bucket(obj) <= difficulty;
        any_counted |= counted;
        frame.gts.push_back({obj.box, !counted});
        frame.dets.push_back({obj.box, 0.9, 0.0});
      }
      eval_frames.push_back(std::move(frame));
    }
    if (!any_counted) return {false, "fixture produced no counted objects for a bucket"};
    for (const MatchMetric metric : {MatchMetric::iou_3d, MatchMetric::iou_bev}) {
      const auto bucket_curve = ap40(eval_frames, {}, metric);
      if (!bucket_curve || bucket_curve->ap != 1.0) {
        return {false, "perfect detections did not score AP 1.0 in some bucket"};
      }
    }
  }
  return {true, "hand case = 19/24 within 1e-12; perfect detections AP 1.0 in every bucket"};
}

// -- 9: augmentation audit ------------------------------------------------------------------

std::pair<bool, std::string> criterion_augmentation() {
  Rng rng(0xACCE9);

  // Cut-n-paste admission audit at tau_2d = 0.7, tau_3d = 0.
  PasteConfig cfg;
  cfg.tau_2d = 0.7;
  cfg.tau_3d = 0.0;
  std::size_t audited = 0;
  for (int round = 0; round < 10; ++round) {
    Rng donor_rng = rng.split(100 + round);
    Rng target_rng = rng.split(200 + round);
    const Scene donor = make_fixture_scene(donor_rng, {.objects = 5, .points_per_object = 100});
    const Scene target =
        make_fixture_scene(target_rng, {.objects = round % 3, .points_per_object = 80});
    const Scene donors[] = {donor};
    const SampleBank bank = build_sample_bank(donors, cfg);
    Rng paste_rng = rng.split(300 + round);
    const Scene out = cut_n_paste(target, bank, cfg, paste_rng);
    if (out.labels.size() - target.labels.size() > static_cast<std::size_t>(cfg.n_paste)) {
      return {false, "admitted more than n_paste objects"};
    }
    std::vector<std::pair<Box3D, Rect2D>> current;
    for (const auto& obj : target.labels) current.emplace_back(obj.box, obj.bbox2d);
    for (std::size_t i = target.labels.size(); i < out.labels.size(); ++i) {
      const auto [i3d, i2d] =
          occlusion_indicator(out.labels[i].box, out.labels[i].bbox2d, current);
      if (i3d > cfg.tau_3d || i2d > cfg.tau_2d) {
        return {false, "an admitted paste violates the occlusion thresholds"};
      }
      current.emplace_back(out.labels[i].box, out.labels[i].bbox2d);
      ++audited;
    }
  }
  if (audited == 0) return {false, "no pastes were admitted to audit"};

  // Global rotate/flip preserve point-in-box membership exactly.
  auto membership = [](const Scene& scene) {
    std::vector<std::set<std::size_t>> result(scene.labels.size());
    for (std::size_t b = 0; b < scene.labels.size(); ++b) {
      for (std::size_t i = 0; i < scene.cloud.points.size(); ++i) {
        const auto& p = scene.cloud.points[i];
        if (point_in_box({p.x, p.y, p.z}, scene.labels[b].box)) result[b].insert(i);
      }
    }
    return result;
  };
  for (int trial = 0; trial < 50; ++trial) {
    Rng scene_rng = rng.split(400 + trial);
    const Scene scene = make_fixture_scene(scene_rng, {.objects = 4, .points_per_object = 60});
    const auto before = membership(scene);
    if (membership(global_rotate(scene, scene_rng.split(1).uniform(-kPi / 2, kPi / 2))) != before) {
      return {false, "rotation changed point-in-box membership"};
    }
    if (membership(global_flip(scene)) != before) {
      return {false, "flip changed point-in-box membership"};
    }
  }
  return {true, format("%.0f pastes audited; 50 scenes membership-exact", double(audited))};
}

// -- 10: performance smoke --------------------------------------------------------------------

std::pair<bool, std::string> criterion_performance() {
  Rng rng(0xACCEA);

  // 40 proposals, a 40k-voxel primary grid, coarser LiDAR grids.
  VoxelizationConfig vcfg;
  vcfg.origin = {0, -40, -3};
  vcfg.voxel_size = {0.2, 0.2, 0.1};
  vcfg.range = {{{0.0, 70.0}, {-40.0, 40.0}, {-3.0, 1.0}}};
  vcfg.max_voxels = 1000000;

  std::vector<Box3D> proposals;
  for (int p = 0; p < 40; ++p) {
    Box3D box;
    box.x = rng.uniform(6, 55);
    box.y = rng.uniform(-18, 18);
    box.z = rng.uniform(-1.2, -0.4);
    box.w = rng.uniform(1.6, 1.9);
    box.l = rng.uniform(3.9, 4.6);
    box.h = rng.uniform(1.4, 1.7);
    box.theta = rng.uniform(-kPi, kPi);
    proposals.push_back(box);
  }

  const int kD0Channels = 16;
  SparseVoxelGrid d0(vcfg, kD0Channels);
  std::vector<double> feature(kD0Channels);
  std::size_t attempts = 0;
  while (d0.size() < 40000 && attempts < 2000000) {
    ++attempts;
    const Box3D& box = proposals[rng.next_below(proposals.size())];
    const Box3D region = expand_proposal(box, 0.8);
    const double c = std::cos(region.theta), s = std::sin(region.theta);
    const double lx = rng.uniform(-0.5, 0.5) * region.l;
    const double ly = rng.uniform(-0.5, 0.5) * region.w;
    const double lz = rng.uniform(-0.5, 0.5) * region.h;
    const Vec3 p{region.x + c * lx - s * ly, region.y + s * lx + c * ly, region.z + lz};
    const VoxelCoord coord = d0.coord_of(p);
    if (d0.contains(coord)) continue;
    for (double& f : feature) f = rng.uniform(-1, 1);
    d0.insert(coord, feature);
  }
  if (d0.size() < 40000) return {false, "could not build the 40k-voxel grid"};

  VoxelizationConfig coarse = vcfg;
  coarse.voxel_size = {0.4, 0.4, 0.2};
  SparseVoxelGrid d1(coarse, 4), d2(coarse, 4);
  std::vector<double> lidar_feature(4);
  for (int i = 0; i < 30000; ++i) {
    const Box3D& box = proposals[rng.next_below(proposals.size())];
    const Vec3 p{box.x + rng.uniform(-4, 4), box.y + rng.uniform(-4, 4),
                 box.z + rng.uniform(-1, 1)};
    for (double& f : lidar_feature) f = rng.uniform(-1, 1);
    SparseVoxelGrid& target = i % 2 == 0 ? d1 : d2;
    const VoxelCoord coord = target.coord_of(p);
    if (!target.contains(coord)) target.insert(coord, lidar_feature);
  }

  WeightBundle weights;
  const int map_channels[3] = {kD0Channels, 4, 4};
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

  const auto start = std::chrono::steady_clock::now();
  volatile double sink = 0.0;  // keeps the pooled loop observable
  for (const Box3D& proposal : proposals) {
    const auto pooled = roi_pool(proposal, maps, qcfg, {6, 6, 6}, weights);
    sink += pooled.empty() ? 0.0 : pooled[0];
  }
  const double elapsed = seconds_since(start);
  if (elapsed >= 1.0) {
    return {false, format("roi_pool over 40 proposals took %.2f s (budget 1 s)", elapsed)};
  }

  // Bench trend: wall time must not decrease as virtual-point density grows.
  const fs::path dataset = make_temp_dir("accept_bench");
  DatasetOptions options;
  options.frames = 1;
  options.scene.objects = 4;
  options.scene.points_per_object = 120;
  make_mini_dataset(dataset, options);
  PipelineConfig cfg = fixture_config(dataset);
  // Density steps of 2.2x or more keep the trend well clear of timing noise.
  const std::vector<BenchSetting> settings{
      {{8, 4, 10}, 6}, {{16, 8, 22}, 6}, {{25, 12, 25}, 6}, {{30, 18, 30}, 6}};
  std::vector<BenchRow> rows;
  std::ostringstream sinkstream;
  if (run_bench(cfg, "000000", settings, 3, {}, sinkstream, &rows) != kExitOk) {
    fs::remove_all(dataset);
    return {false, "bench run failed"};
  }
  fs::remove_all(dataset);
  std::string times;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    times += format("%.0f ", rows[i].wall_ms);
    if (i > 0 && rows[i].wall_ms < rows[i - 1].wall_ms) {
      return {false, "bench wall time decreased with density: " + times + "ms"};
    }
  }
  return {true, format("roi_pool 40 proposals in %.3f s; ", elapsed) + "bench ms: " + times};
}

// -- 11: determinism -----------------------------------------------------------------------------

std::pair<bool, std::string> criterion_determinism() {
  const fs::path dataset = make_temp_dir("accept_det");
  DatasetOptions options;
  options.frames = 2;
  options.scene.objects = 4;
  options.scene.points_per_object = 100;
  make_mini_dataset(dataset, options);

  const fs::path config_path = dataset / "config.json";
  write_file(config_path, std::string(R"({
    "data_root": ")" + dataset.string() + R"(",
    "seed": 1234,
    "virtual_resolution": [8, 4, 10],
    "paste": {"n_paste": 4}
  })"));

  auto cli = [&](const std::string& args) {
    const std::string command = std::string(VPF_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  auto same_tree = [&](const fs::path& a, const fs::path& b) {
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), a);
      if (!fs::exists(b / rel)) return false;
      if (read_file(entry.path()) != read_file(b / rel)) return false;
    }
    return true;
  };

  const std::string base = "--config " + config_path.string();
  for (const char* run : {"r1", "r2"}) {
    if (cli(base + " fuse --frame 000000 --from-labels --resize --out " +
            (dataset / ("fuse_" + std::string(run))).string()) != 0) {
      fs::remove_all(dataset);
      return {false, "fuse run failed"};
    }
    if (cli(base + " augment --frames 000000,000001 --out " +
            (dataset / ("aug_" + std::string(run))).string()) != 0) {
      fs::remove_all(dataset);
      return {false, "augment run failed"};
    }
  }
  const bool fuse_same = same_tree(dataset / "fuse_r1", dataset / "fuse_r2");
  const bool aug_same = same_tree(dataset / "aug_r1", dataset / "aug_r2");
  fs::remove_all(dataset);
  if (!fuse_same) return {false, "fuse outputs differ between identical runs"};
  if (!aug_same) return {false, "augment outputs differ between identical runs"};
  return {true, "fuse and augment re-runs byte-identical"};
}

}  // namespace

int main() {
  std::puts("acceptance suite");
  run_criterion(1, "rotated BEV/3D IoU vs Monte-Carlo oracle", criterion_iou_monte_carlo);
  run_criterion(2, "sparse 3D conv vs dense triple-loop oracle", criterion_sparse_conv);
  run_criterion(3, "voxel query vs brute-force scan", criterion_voxel_query);
  run_criterion(4, "loss gradients vs central finite differences", criterion_gradients);
  run_criterion(5, "residual codec round trip", criterion_residual_codec);
  run_criterion(6, "virtual-point density", criterion_density);
  run_criterion(7, "Hungarian assignment vs permutation enumeration", criterion_hungarian);
  run_criterion(8, "AP40 hand case and perfect-detection buckets", criterion_ap40);
  run_criterion(9, "augmentation audit and membership preservation", criterion_augmentation);
  run_criterion(10, "performance smoke (roi_pool budget, bench trend)", criterion_performance);
  run_criterion(11, "determinism of fuse and augment", criterion_determinism);
  if (g_failures == 0) {
    std::puts("all criteria passed");
  } else {
    std::printf("%d criterion(s) failed\n", g_failures);
  }
  return g_failures;
}
