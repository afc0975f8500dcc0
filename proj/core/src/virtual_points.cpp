#include "vpf/virtual_points.hpp"

#include <algorithm>
#include <cmath>

#include "vpf/error.hpp"

namespace vpf {

Box3D expand_proposal(const Box3D& box, double margin) {
  if (margin < 0.0) throw DomainError("expand_proposal: margin must be >= 0");
  Box3D out = box;
  out.w += margin;
  out.l += margin;
  out.h += margin;
  return out;
}

Box3D random_resize(const Box3D& box, const ResizeConfig& cfg, Rng& rng) {
  if (cfg.u_theta < 0.0 || cfg.u_xyzwlh < 0.0) {
    throw DomainError("random_resize: noise half-widths must be >= 0");
  }
  // One draw per dimension, always consumed, so the stream layout does not
  // depend on the configured widths. uniform(-0, 0) is exactly 0.
  auto draw = [&](double half_width) { return rng.uniform(-half_width, half_width); };
  Box3D out = box;
  out.x += draw(cfg.u_xyzwlh);
  out.y += draw(cfg.u_xyzwlh);
  out.z += draw(cfg.u_xyzwlh);
  out.w = std::max(0.01, box.w + draw(cfg.u_xyzwlh));
  out.l = std::max(0.01, box.l + draw(cfg.u_xyzwlh));
  out.h = std::max(0.01, box.h + draw(cfg.u_xyzwlh));
  out.theta = normalize_angle(box.theta + draw(cfg.u_theta));
  return out;
}

VirtualPointSet generate_virtual_points(const Box3D& box, const std::array<int, 3>& resolution) {
  VirtualPointSet set;
  set.proposal = box;
  set.resolution = resolution;
  set.positions = box_grid_points(box, resolution);
  set.view_flags.assign(set.positions.size(), 0);
  return set;
}

void assemble_features(VirtualPointSet& points, const FeatureMap2D& left,
                       const FeatureMap2D& right, const CalibrationSet& calib_left,
                       const CalibrationSet& calib_right) {
  const int c_left = left.channels;
  const int c_right = right.channels;
  points.feature_dim = c_left + c_right + 3;
  points.features.assign(points.positions.size() * points.feature_dim, 0.0);
  points.view_flags.assign(points.positions.size(), 0);

  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    const Vec3& p = points.positions[i];
    double* feature = points.features.data() + i * points.feature_dim;
    std::uint8_t flags = 0;

    if (const auto proj = try_project_point(p, calib_left)) {
      if (bilinear_sample_into(left, proj->u, proj->v, {feature, static_cast<std::size_t>(c_left)})) {
        flags |= kLeftInView;
      }
    }
    if (const auto proj = try_project_point(p, calib_right)) {
      if (bilinear_sample_into(right, proj->u, proj->v,
                               {feature + c_left, static_cast<std::size_t>(c_right)})) {
        flags |= kRightInView;
      }
    }
    feature[c_left + c_right + 0] = p.x();
    feature[c_left + c_right + 1] = p.y();
    feature[c_left + c_right + 2] = p.z();
    points.view_flags[i] = flags;
  }
}

double foreground_density_ratio(const PointCloud& cloud, std::span<const Box3D> proposals,
                                const std::array<int, 3>& resolution) {
  if (proposals.empty()) throw DomainError("foreground_density_ratio: no proposals");
  const double virtual_count = static_cast<double>(resolution[0]) * resolution[1] * resolution[2];
  double total_actual = 0.0;
  for (const Box3D& proposal : proposals) {
    std::size_t inside = 0;
    for (const auto& p : cloud.points) {
      if (point_in_box({p.x, p.y, p.z}, proposal)) ++inside;
    }
    total_actual += inside == 0 ? 1.0 : static_cast<double>(inside);
  }
  return virtual_count / (total_actual / static_cast<double>(proposals.size()));
}

}  // namespace vpf
