#pragma once

#include <array>
#include <optional>
#include <vector>

#include "vpf/calibration.hpp"

namespace vpf {

/// Axis-aligned pixel rectangle, corner form.
struct Rect2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
  double center_u() const { return 0.5 * (u_min + u_max); }
  double center_v() const { return 0.5 * (v_min + v_max); }
};

/// Axis-aligned pixel rectangle, center form (mask/detection convention).
struct CenterBox {
  double u = 0.0;  ///< horizontal center
  double v = 0.0;  ///< vertical center
  double w = 0.0;
  double h = 0.0;

  Rect2D to_rect() const { return {u - 0.5 * w, v - 0.5 * h, u + 0.5 * w, v + 0.5 * h}; }
  static CenterBox from_rect(const Rect2D& r) {
    return {r.center_u(), r.center_v(), r.width(), r.height()};
  }
};

/// 7-DoF oriented box in a right-handed frame with vertical z.
///
/// Local axes: x spans the length l (heading direction at theta = 0),
/// y spans the width w, z spans the height h. theta is the yaw about z,
/// normalized to (-pi, pi].
struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;  ///< center, meters
  double w = 1.0, l = 1.0, h = 1.0;  ///< positive extents, meters
  double theta = 0.0;                ///< yaw, radians

  Vec3 center() const { return {x, y, z}; }
  double volume() const { return w * l * h; }
};

/// Wraps an angle to (-pi, pi].
double normalize_angle(double angle);

/// Throws ValidationError unless extents are positive and finite.
void validate(const Box3D& box);

/// Image-plane projection of a 3D point.
struct ProjectedPoint {
  double u = 0.0;      ///< pixels
  double v = 0.0;      ///< pixels
  double depth = 0.0;  ///< z_c, meters (scaled by calib.scale)
};

/// Projects a LiDAR-frame point through the calibration. Throws BehindCamera
/// when the projective depth z_c is <= 1e-6.
ProjectedPoint project_point(const Vec3& p, const CalibrationSet& calib);

/// Non-throwing variant; nullopt when the point is behind the camera.
std::optional<ProjectedPoint> try_project_point(const Vec3& p, const CalibrationSet& calib);

/// The 8 corners of a box in canonical order: corner index i encodes the
/// local-frame signs bit-wise, bit 0 -> +x half, bit 1 -> +y half,
/// bit 2 -> +z half (so corner 0 is (-l/2, -w/2, -h/2), corner 7 is
/// (+l/2, +w/2, +h/2), both expressed in the world frame).
std::array<Vec3, 8> box_corners(const Box3D& box);

/// Cell-center grid inside a box: resolution (n_x, n_y, n_z) cells along the
/// local x/y/z axes. Ordering is x-major: index = (ix * n_y + iy) * n_z + iz.
std::vector<Vec3> box_grid_points(const Box3D& box, const std::array<int, 3>& resolution);

/// True when p lies inside the box, with `eps` slack on each local half-extent.
bool point_in_box(const Vec3& p, const Box3D& box, double eps = 0.0);

/// Bird's-eye-view IoU of the two yaw-rotated footprints (convex polygon
/// clipping). Overlap areas below 1e-12 count as zero.
double iou_bev(const Box3D& a, const Box3D& b);

/// Volumetric IoU: BEV overlap area times vertical interval overlap, over the
/// union volume.
double iou_3d(const Box3D& a, const Box3D& b);

/// Interval IoU of the vertical (v) extents of two pixel rectangles.
double iou_1d_vertical(const Rect2D& a, const Rect2D& b);

/// Axis-aligned IoU of two pixel rectangles.
double iou_rect(const Rect2D& a, const Rect2D& b);

/// Normalized regression residual between a ground-truth box and an anchor,
/// in component order (dx, dy, dz, dw, dl, dh, dtheta):
///
///   dx = (x_g - x_a) / d_a    (dy, dz likewise)      d_a = sqrt(w_a^2 + l_a^2)
///   dw = log(w_g / w_a)       (dl, dh likewise)
///   dtheta = sin(theta_g - theta_a)
using BoxResidual = std::array<double, 7>;

BoxResidual encode_residual(const Box3D& gt, const Box3D& anchor);

/// Inverts encode_residual on the arcsin principal branch: exact whenever
/// |theta_g - theta_a| < pi/2. Throws DomainError when |res[6]| > 1.
Box3D decode_residual(const BoxResidual& res, const Box3D& anchor);

/// Re-expresses a camera-frame box (center-based position, yaw about the
/// camera's vertical-image axis) in the LiDAR frame: position through the
/// rigid inverse of [R | T], extents unchanged, yaw by the fixed rectified
/// convention theta_lidar = -theta_cam - pi/2.
Box3D camera_to_lidar(const Box3D& box_cam, const CalibrationSet& calib);

/// Exact inverse of camera_to_lidar.
Box3D lidar_to_camera(const Box3D& box_lidar, const CalibrationSet& calib);

/// Axis-aligned pixel bounds of the projected box corners. nullopt when every
/// corner is behind the camera; corners behind the camera are skipped.
std::optional<Rect2D> project_box_to_rect(const Box3D& box, const CalibrationSet& calib);

}  // namespace vpf
