#pragma once

// Synthetic KITTI-style data for tests: a fixed stereo rig, scenes with a
// ground plane and car-like boxes carrying dense point clusters, consistent
// images, instance masks and labels.

#include <filesystem>

#include "vpf/augmentation.hpp"
#include "vpf/pipeline.hpp"

namespace vpf::testing {

inline constexpr int kImageWidth = 600;
inline constexpr int kImageHeight = 160;
inline constexpr double kGroundZ = -1.6;

/// The canonical rig: fx = fy = 400, principal point (300, 80), 0.54 m
/// baseline, axis-permuting LiDAR-to-camera transform.
StereoCalibration fixture_calibration();

/// KITTI-convention calibration text assembling to fixture_calibration().
std::string fixture_calibration_text();

struct SceneOptions {
  int objects = 4;
  int points_per_object = 120;
  bool with_masks = true;
  double x_min = 8.0;   ///< nearest object center, meters
  double x_max = 22.0;  ///< farthest object center, meters
};

/// A fully in-memory scene; deterministic in rng.
Scene make_fixture_scene(Rng& rng, const SceneOptions& options = {});

struct DatasetOptions {
  int frames = 5;
  SceneOptions scene;
  std::uint64_t seed = 20240;
  bool foreign_calib_last_frame = false;  ///< last frame gets a different rig
};

/// Writes frames 000000..N-1 under dir (velodyne/, calib/, image_2/,
/// image_3/, label_2/, masks_2/, masks_3/).
void make_mini_dataset(const std::filesystem::path& dir, const DatasetOptions& options = {});

void write_scene(const std::filesystem::path& dir, const std::string& frame_id,
                 const Scene& scene, const std::string& calib_text);

/// Pipeline config pointed at a fixture dataset (raw image mode, default
/// paper constants).
PipelineConfig fixture_config(const std::filesystem::path& data_root);

/// Fresh unique temp directory under the system temp root.
std::filesystem::path make_temp_dir(const std::string& tag);

}  // namespace vpf::testing
