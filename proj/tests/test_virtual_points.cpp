#include <doctest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "vpf/virtual_points.hpp"

using namespace vpf;
using namespace vpf::testing;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("expand_proposal: zero margin, paper margin, monotone volume") {
  const Box3D unit{0, 0, 0, 1, 1, 1, 0.4};
  const Box3D same = expand_proposal(unit, 0.0);
  CHECK(same.w == unit.w);
  CHECK(same.l == unit.l);
  CHECK(same.h == unit.h);

  const Box3D grown = expand_proposal(unit, 0.8);
  CHECK(grown.w == doctest::Approx(1.8));
  CHECK(grown.l == doctest::Approx(1.8));
  CHECK(grown.h == doctest::Approx(1.8));
  CHECK(grown.x == unit.x);
  CHECK(grown.theta == unit.theta);

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Box3D box = random_box(rng);
    const double margin = rng.uniform(0.001, 2.0);
    CHECK(expand_proposal(box, margin).volume() > box.volume());
  }
}

TEST_CASE("random_resize: zero config is the identity") {
  Rng rng(2);
  const Box3D box{1, 2, 3, 2, 4, 1.5, 0.7};
  const Box3D out = random_resize(box, {0.0, 0.0}, rng);
  CHECK(out.x == box.x);
  CHECK(out.y == box.y);
  CHECK(out.z == box.z);
  CHECK(out.w == box.w);
  CHECK(out.l == box.l);
  CHECK(out.h == box.h);
  CHECK(out.theta == box.theta);
}

TEST_CASE("random_resize: all draws stay within the configured bounds") {
  Rng rng(3);
  const ResizeConfig cfg;  // 0.08 rad / 0.15 m
  const Box3D box{5, -3, 0.5, 1.8, 4.2, 1.6, -1.1};
  for (int trial = 0; trial < 10000; ++trial) {
    const Box3D out = random_resize(box, cfg, rng);
    CHECK(std::abs(out.x - box.x) <= cfg.u_xyzwlh);
    CHECK(std::abs(out.y - box.y) <= cfg.u_xyzwlh);
    CHECK(std::abs(out.z - box.z) <= cfg.u_xyzwlh);
    CHECK(std::abs(out.w - box.w) <= cfg.u_xyzwlh);
    CHECK(std::abs(out.l - box.l) <= cfg.u_xyzwlh);
    CHECK(std::abs(out.h - box.h) <= cfg.u_xyzwlh);
    CHECK(std::abs(normalize_angle(out.theta - box.theta)) <= cfg.u_theta);
  }
}

TEST_CASE("random_resize: same seed, same box; extents clamped") {
  const Box3D box{0, 0, 0, 1, 1, 1, 0};
  Rng a(42), b(42);
  const Box3D out_a = random_resize(box, {}, a);
  const Box3D out_b = random_resize(box, {}, b);
  CHECK(out_a.x == out_b.x);
  CHECK(out_a.theta == out_b.theta);

  const Box3D sliver{0, 0, 0, 0.001, 0.001, 0.001, 0};
  Rng c(7);
  const Box3D clamped = random_resize(sliver, {0.0, 0.5}, c);
  CHECK(clamped.w >= 0.01);
  CHECK(clamped.l >= 0.01);
  CHECK(clamped.h >= 0.01);
}

TEST_CASE("generate_virtual_points: counts and degenerate grid") {
  const Box3D box{3, -1, 0.2, 1.7, 4.1, 1.5, 0.9};
  CHECK(generate_virtual_points(box, {16, 8, 22}).positions.size() == 2816);
  const auto single = generate_virtual_points(box, {1, 1, 1});
  REQUIRE(single.positions.size() == 1);
  CHECK((single.positions[0] - box.center()).norm() < 1e-12);
}

TEST_CASE("virtual points stay inside the box; order is a pure function") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Box3D box = random_box(rng);
    const auto set = generate_virtual_points(box, {5, 4, 3});
    for (const Vec3& p : set.positions) CHECK(point_in_box(p, box, 1e-9));
    const auto again = generate_virtual_points(box, {5, 4, 3});
    for (std::size_t i = 0; i < set.positions.size(); ++i) {
      CHECK((set.positions[i] - again.positions[i]).norm() == 0.0);
    }
  }
}

TEST_CASE("assemble_features: constant maps and feature layout") {
  const StereoCalibration calib = fixture_calibration();
  FeatureMap2D left;
  left.width = kImageWidth;
  left.height = kImageHeight;
  left.channels = 1;
  left.stride_from_input = 1;
  left.data.assign(static_cast<std::size_t>(kImageWidth) * kImageHeight, 0.25);
  FeatureMap2D right = left;
  for (double& v : right.data) v = 0.75;

  const Box3D box{12.0, 0.0, -0.8, 1.7, 4.2, 1.5, 0.3};
  VirtualPointSet points = generate_virtual_points(box, {4, 4, 4});
  assemble_features(points, left, right, calib.left, calib.right);
  CHECK(points.feature_dim == 1 + 1 + 3);
  REQUIRE(points.features.size() == points.positions.size() * 5);
  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    const auto f = points.feature(i);
    REQUIRE((points.view_flags[i] & kLeftInView) != 0);  // box sits mid-frame
    CHECK(f[0] == doctest::Approx(0.25));
    CHECK(f[1] == doctest::Approx(0.75));
    CHECK(f[2] == doctest::Approx(points.positions[i].x()));
    CHECK(f[3] == doctest::Approx(points.positions[i].y()));
    CHECK(f[4] == doctest::Approx(points.positions[i].z()));
  }
}

TEST_CASE("assemble_features: behind-camera points are flagged with zero image slots") {
  const StereoCalibration calib = fixture_calibration();
  FeatureMap2D map;
  map.width = 10;
  map.height = 10;
  map.channels = 2;
  map.stride_from_input = 1;
  map.data.assign(200, 1.0);
  // A box behind the sensor plane: x < 0 in LiDAR is behind the camera.
  const Box3D behind{-10.0, 0.0, 0.0, 1, 1, 1, 0};
  VirtualPointSet points = generate_virtual_points(behind, {2, 2, 2});
  assemble_features(points, map, map, calib.left, calib.right);
  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    CHECK(points.view_flags[i] == 0);
    const auto f = points.feature(i);
    for (int c = 0; c < 4; ++c) CHECK(f[c] == 0.0);
    CHECK(f[4] == doctest::Approx(points.positions[i].x()));
  }
}

TEST_CASE("foreground_density_ratio: paper-scale ratio, empty proposal, linear in N_z") {
  // One proposal holding exactly 140 points -> 2816 / 140.
  const Box3D box{10, 0, 0, 1.7, 4.2, 1.6, 0.2};
  PointCloud cloud;
  Rng rng(5);
  for (int i = 0; i < 140; ++i) {
    const double c = std::cos(box.theta), s = std::sin(box.theta);
    const double lx = rng.uniform(-0.45, 0.45) * box.l;
    const double ly = rng.uniform(-0.45, 0.45) * box.w;
    const double lz = rng.uniform(-0.45, 0.45) * box.h;
    cloud.points.push_back({box.x + c * lx - s * ly, box.y + s * lx + c * ly, box.z + lz, 0.5});
  }
  const Box3D proposals[] = {box};
  const double ratio = foreground_density_ratio(cloud, proposals, {16, 8, 22});
  CHECK(ratio == doctest::Approx(2816.0 / 140.0).epsilon(1e-12));

  // Empty proposal: denominator is 1 per proposal.
  const Box3D empty_box{60, 30, 0, 1, 1, 1, 0};
  const Box3D empty_only[] = {empty_box};
  CHECK(foreground_density_ratio(cloud, empty_only, {16, 8, 22}) ==
        doctest::Approx(2816.0));

  const double doubled = foreground_density_ratio(cloud, proposals, {16, 8, 44});
  CHECK(doubled == doctest::Approx(2.0 * ratio).epsilon(1e-12));
}
