#include "vpf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <tuple>

#include "vpf/error.hpp"

namespace vpf {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegenerateArea = 1e-12;

struct Vec2 {
  double x, y;
};

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Counter-clockwise BEV footprint of a box.
std::array<Vec2, 4> bev_corners(const Box3D& b) {
  const double c = std::cos(b.theta), s = std::sin(b.theta);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  // Local (x, y) in CCW order.
  const Vec2 local[4] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.x + c * local[i].x - s * local[i].y, b.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(acc);
}

/// Sutherland-Hodgman clip of `subject` against the CCW convex `clipper`.
std::vector<Vec2> clip_polygon(const std::array<Vec2, 4>& subject, const std::array<Vec2, 4>& clipper) {
  std::vector<Vec2> poly(subject.begin(), subject.end());
  std::vector<Vec2> next;
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    const Vec2& a = clipper[e];
    const Vec2& b = clipper[(e + 1) % 4];
    next.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& p = poly[i];
      const Vec2& q = poly[(i + 1) % poly.size()];
      const double dp = cross(a, b, p);
      const double dq = cross(a, b, q);
      if (dp >= 0.0) {
        next.push_back(p);
        if (dq < 0.0) {
          const double t = dp / (dp - dq);
          next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
        }
      } else if (dq >= 0.0) {
        const double t = dp / (dp - dq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    poly = next;
  }
  return poly;
}

double interval_overlap(double a_lo, double a_hi, double b_lo, double b_hi) {
  return std::max(0.0, std::min(a_hi, b_hi) - std::max(a_lo, b_lo));
}

bool box_fields_equal(const Box3D& a, const Box3D& b) {
  return a.x == b.x && a.y == b.y && a.z == b.z && a.w == b.w && a.l == b.l && a.h == b.h &&
         a.theta == b.theta;
}

/// Lexicographic key so iou(a, b) and iou(b, a) run the identical computation.
bool box_key_less(const Box3D& a, const Box3D& b) {
  return std::tie(a.x, a.y, a.z, a.w, a.l, a.h, a.theta) <
         std::tie(b.x, b.y, b.z, b.w, b.l, b.h, b.theta);
}

double bev_overlap_area(const Box3D& a, const Box3D& b) {
  const Box3D& first = box_key_less(b, a) ? b : a;
  const Box3D& second = box_key_less(b, a) ? a : b;
  const double area = polygon_area(clip_polygon(bev_corners(first), bev_corners(second)));
  return area < kDegenerateArea ? 0.0 : area;
}

}  // namespace

double normalize_angle(double angle) {
  if (!std::isfinite(angle)) throw DomainError("normalize_angle: non-finite angle");
  double a = std::fmod(angle, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

void validate(const Box3D& box) {
  const double fields[7] = {box.x, box.y, box.z, box.w, box.l, box.h, box.theta};
  for (double f : fields) {
    if (!std::isfinite(f)) throw ValidationError("Box3D: non-finite field");
  }
  if (box.w <= 0.0 || box.l <= 0.0 || box.h <= 0.0) {
    throw ValidationError("Box3D: extents must be positive");
  }
}

void validate(const CalibrationSet& calib) {
  if (!(calib.scale > 0.0) || !std::isfinite(calib.scale)) {
    throw ValidationError("CalibrationSet: scale must be positive");
  }
  if (std::abs(calib.intrinsics(2, 2) - 1.0) > 1e-9) {
    throw ValidationError("CalibrationSet: K(2,2) must be 1");
  }
  const Mat3 gram = calib.rotation.transpose() * calib.rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw ValidationError("CalibrationSet: rotation is not orthonormal within 1e-6");
  }
}

std::string calibration_signature(const StereoCalibration& calib) {
  std::string text;
  char buf[32];
  auto append = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g;", v);
    text += buf;
  };
  for (const CalibrationSet* c : {&calib.left, &calib.right}) {
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) append(c->intrinsics(r, col));
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) append(c->rotation(r, col));
    for (int r = 0; r < 3; ++r) append(c->translation(r));
    append(c->scale);
  }
  // FNV-1a 64 over the canonical text.
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001B3ull;
  }
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

ProjectedPoint project_point(const Vec3& p, const CalibrationSet& calib) {
  auto result = try_project_point(p, calib);
  if (!result) throw BehindCamera("project_point: point behind camera");
  return *result;
}

std::optional<ProjectedPoint> try_project_point(const Vec3& p, const CalibrationSet& calib) {
  const Vec3 cam = calib.rotation * p + calib.translation;
  const Vec3 homo = calib.scale * (calib.intrinsics * cam);
  if (homo.z() <= 1e-6) return std::nullopt;
  return ProjectedPoint{homo.x() / homo.z(), homo.y() / homo.z(), homo.z()};
}

std::array<Vec3, 8> box_corners(const Box3D& box) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  std::array<Vec3, 8> corners;
  for (int i = 0; i < 8; ++i) {
    const double lx = ((i & 1) ? 0.5 : -0.5) * box.l;
    const double ly = ((i & 2) ? 0.5 : -0.5) * box.w;
    const double lz = ((i & 4) ? 0.5 : -0.5) * box.h;
    corners[i] = {box.x + c * lx - s * ly, box.y + s * lx + c * ly, box.z + lz};
  }
  return corners;
}

std::vector<Vec3> box_grid_points(const Box3D& box, const std::array<int, 3>& resolution) {
  const auto [nx, ny, nz] = resolution;
  if (nx < 1 || ny < 1 || nz < 1) throw DomainError("box_grid_points: resolution must be >= 1");
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  std::vector<Vec3> points;
  points.reserve(static_cast<std::size_t>(nx) * ny * nz);
  for (int ix = 0; ix < nx; ++ix) {
    const double lx = (-0.5 + (ix + 0.5) / nx) * box.l;
    for (int iy = 0; iy < ny; ++iy) {
      const double ly = (-0.5 + (iy + 0.5) / ny) * box.w;
      for (int iz = 0; iz < nz; ++iz) {
        const double lz = (-0.5 + (iz + 0.5) / nz) * box.h;
        points.emplace_back(box.x + c * lx - s * ly, box.y + s * lx + c * ly, box.z + lz);
      }
    }
  }
  return points;
}

bool point_in_box(const Vec3& p, const Box3D& box, double eps) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double dx = p.x() - box.x, dy = p.y() - box.y, dz = p.z() - box.z;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * box.l + eps && std::abs(ly) <= 0.5 * box.w + eps &&
         std::abs(dz) <= 0.5 * box.h + eps;
}

double iou_bev(const Box3D& a, const Box3D& b) {
  if (box_fields_equal(a, b)) return 1.0;
  const double inter = bev_overlap_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.w * a.l + b.w * b.l - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  if (box_fields_equal(a, b)) return 1.0;
  const double area = bev_overlap_area(a, b);
  if (area <= 0.0) return 0.0;
  const double dz = interval_overlap(a.z - 0.5 * a.h, a.z + 0.5 * a.h, b.z - 0.5 * b.h, b.z + 0.5 * b.h);
  const double inter = area * dz;
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_1d_vertical(const Rect2D& a, const Rect2D& b) {
  const double inter = interval_overlap(a.v_min, a.v_max, b.v_min, b.v_max);
  const double uni = (a.v_max - a.v_min) + (b.v_max - b.v_min) - inter;
  if (uni <= kDegenerateArea) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_rect(const Rect2D& a, const Rect2D& b) {
  const double inter = interval_overlap(a.u_min, a.u_max, b.u_min, b.u_max) *
                       interval_overlap(a.v_min, a.v_max, b.v_min, b.v_max);
  if (inter <= kDegenerateArea) return 0.0;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoxResidual encode_residual(const Box3D& gt, const Box3D& anchor) {
  const double d = std::sqrt(anchor.w * anchor.w + anchor.l * anchor.l);
  return {(gt.x - anchor.x) / d,
          (gt.y - anchor.y) / d,
          (gt.z - anchor.z) / d,
          std::log(gt.w / anchor.w),
          std::log(gt.l / anchor.l),
          std::log(gt.h / anchor.h),
          std::sin(gt.theta - anchor.theta)};
}

Box3D decode_residual(const BoxResidual& res, const Box3D& anchor) {
  if (std::abs(res[6]) > 1.0) throw DomainError("decode_residual: |sin residual| > 1");
  const double d = std::sqrt(anchor.w * anchor.w + anchor.l * anchor.l);
  Box3D out;
  out.x = anchor.x + res[0] * d;
  out.y = anchor.y + res[1] * d;
  out.z = anchor.z + res[2] * d;
  out.w = anchor.w * std::exp(res[3]);
  out.l = anchor.l * std::exp(res[4]);
  out.h = anchor.h * std::exp(res[5]);
  out.theta = normalize_angle(anchor.theta + std::asin(res[6]));
  return out;
}

Box3D camera_to_lidar(const Box3D& box_cam, const CalibrationSet& calib) {
  const Vec3 center = calib.rotation.transpose() * (box_cam.center() - calib.translation);
  Box3D out = box_cam;
  out.x = center.x();
  out.y = center.y();
  out.z = center.z();
  out.theta = normalize_angle(-box_cam.theta - 0.5 * kPi);
  return out;
}

Box3D lidar_to_camera(const Box3D& box_lidar, const CalibrationSet& calib) {
  const Vec3 center = calib.rotation * box_lidar.center() + calib.translation;
  Box3D out = box_lidar;
  out.x = center.x();
  out.y = center.y();
  out.z = center.z();
  // theta -> -theta - pi/2 is an involution, so encoding reuses the same map.
  out.theta = normalize_angle(-box_lidar.theta - 0.5 * kPi);
  return out;
}

std::optional<Rect2D> project_box_to_rect(const Box3D& box, const CalibrationSet& calib) {
  bool any = false;
  Rect2D r{1e300, 1e300, -1e300, -1e300};
  for (const Vec3& corner : box_corners(box)) {
    const auto p = try_project_point(corner, calib);
    if (!p) continue;
    any = true;
    r.u_min = std::min(r.u_min, p->u);
    r.v_min = std::min(r.v_min, p->v);
    r.u_max = std::max(r.u_max, p->u);
    r.v_max = std::max(r.v_max, p->v);
  }
  if (!any) return std::nullopt;
  return r;
}

}  // namespace vpf
