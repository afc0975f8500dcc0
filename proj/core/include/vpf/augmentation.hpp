#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vpf/heads_losses.hpp"
#include "vpf/rng.hpp"

namespace vpf {

/// One frame's worth of sensor data. Labels are LiDAR-frame. calib_signature
/// is the canonical digest of the stereo calibration; cut-n-paste only moves
/// objects between frames whose signatures match exactly.
struct Scene {
  PointCloud cloud;
  Image left, right;
  std::vector<MaskInstance> masks_left, masks_right;
  std::vector<LabeledObject> labels;
  StereoCalibration calib;
  std::string calib_signature;
};

/// Rotates points and label boxes about the vertical axis. Images untouched
/// (point-cloud-space augmentation).
Scene global_rotate(const Scene& scene, double angle);

/// Mirrors the scene across the x-z plane (y -> -y, yaw -> -yaw).
Scene global_flip(const Scene& scene);

/// Uniform scaling of points, box centers and extents. factor > 0.
Scene global_scale(const Scene& scene, double factor);

/// Scene ground plane estimate: the 5th percentile of point z values.
double ground_z(const PointCloud& cloud);

/// Stereo association cost alpha * |v_i - v_j| / h_i + beta * |s_i - s_j|
/// (vertical centers, pixel units; h_i is the left box height). Throws
/// DomainError when h_i <= 0.
double stereo_pair_cost(const MaskInstance& left, const MaskInstance& right, double alpha,
                        double beta);

/// Stereo-pair-to-ground-truth cost |v_k - v_v| / h_k + |u_k - u_v| / w_k,
/// where `pair_box` is the stereo pair's (left) predicted 2D box and gt_box
/// the annotation's 2D box. Throws DomainError on non-positive extents.
double gt_match_cost(const CenterBox& pair_box, const Rect2D& gt_box);

/// Minimum-total-cost one-to-one assignment on the zero-padded square matrix;
/// assignments whose cost exceeds max_cost are discarded afterwards. Returned
/// (row, col) pairs are sorted by row.
std::vector<std::pair<int, int>> hungarian_assign(const Eigen::MatrixXd& cost, double max_cost);

/// A transplantable object: its stereo masks with cropped image patches, its
/// label, and its LiDAR points, grounded so the box bottom sits at the source
/// scene's ground plane.
struct SampleTriplet {
  MaskInstance left_mask, right_mask;
  Image left_patch, right_patch;  ///< image crops over the mask bounds
  int left_patch_x0 = 0, left_patch_y0 = 0;
  int right_patch_x0 = 0, right_patch_y0 = 0;
  LabeledObject object;  ///< LiDAR-frame box, grounded
  PointCloud points;     ///< grounded object points (non-empty)
  double source_ground_z = 0.0;
};

struct SampleBank {
  std::map<std::string, std::vector<SampleTriplet>> by_signature;

  std::size_t total() const;
};

struct PasteConfig {
  double tau_2d = 0.7;  ///< 2D occlusion admission threshold
  double tau_3d = 0.0;  ///< 3D occlusion admission threshold
  int n_candidates = 100;
  int n_paste = 15;
  double alpha = 1.0;    ///< stereo cost weight on vertical offset
  double beta = 0.5;     ///< stereo cost weight on score difference
  double max_cost = 1.0; ///< association cut-off for both cost matrices
};

/// Throws ValidationError when thresholds leave [0, 1] or counts are < 0.
void validate(const PasteConfig& cfg);

/// Associates left/right masks (stereo cost) then pairs with labels (GT
/// cost), both via hungarian_assign; crops each matched object's points and
/// image patches and grounds them. Unmatched or point-free instances are
/// skipped. Triplets are keyed by the scene's calib_signature.
SampleBank build_sample_bank(std::span<const Scene> scenes, const PasteConfig& cfg);

/// Occlusion indicators of a candidate against the current scene objects:
/// (max BEV IoU of the LiDAR boxes, max axis-aligned IoU of the pixel boxes).
/// Empty scene yields (0, 0).
std::pair<double, double> occlusion_indicator(
    const Box3D& box, const Rect2D& bbox2d,
    std::span<const std::pair<Box3D, Rect2D>> scene_objects);

/// Draws up to n_candidates triplets for the scene's calib_signature, admits
/// up to n_paste whose occlusion indicators stay within (tau_3d, tau_2d)
/// against the scene including previously admitted pastes, then composites
/// points, mask pixels (both images, far-to-near so nearer objects overwrite)
/// and labels into a new scene. Scenes with no bank entries pass through
/// unchanged.
Scene cut_n_paste(const Scene& scene, const SampleBank& bank, const PasteConfig& cfg, Rng& rng);

/// Bank directory layout: index.txt lines `id signature ground_z`, plus per
/// triplet {id}_cloud.bin, {id}_label.txt, {id}_{side}_mask.pgm / .txt and
/// {id}_{side}_patch.ppm.
void save_bank(const SampleBank& bank, const std::filesystem::path& dir);
SampleBank load_bank(const std::filesystem::path& dir);

}  // namespace vpf
