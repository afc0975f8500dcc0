#pragma once

#include <string>

#include <Eigen/Core>

namespace vpf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole calibration for a single rectified camera, expressed against the
/// LiDAR frame: a point p (LiDAR, meters) maps to the image plane via
///
///   z_c * [u, v, 1]^T = h * K * [R | T] * [p, 1]^T
///
/// with K the 3x3 intrinsics (K(2,2) == 1), [R | T] the rigid LiDAR-to-camera
/// transform and h the image down-sample scale (1 for full resolution).
struct CalibrationSet {
  Mat3 intrinsics = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
};

/// Throws ValidationError unless R is orthonormal within 1e-6, h > 0 and
/// K(2,2) == 1 (within 1e-9).
void validate(const CalibrationSet& calib);

/// Left/right rectified pair sharing one LiDAR frame.
struct StereoCalibration {
  CalibrationSet left;
  CalibrationSet right;
};

/// Canonical text digest of the full stereo calibration. Two frames recorded
/// with identical calibration produce identical signatures; any numeric
/// difference changes it. Used to key the augmentation sample bank.
std::string calibration_signature(const StereoCalibration& calib);

}  // namespace vpf
