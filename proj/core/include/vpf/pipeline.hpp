#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vpf/augmentation.hpp"
#include "vpf/evaluation.hpp"
#include "vpf/sparse_voxel.hpp"

namespace vpf {

/// Final-detection selection knobs (inference defaults).
struct NmsConfig {
  double iou_threshold = 0.1;
  int max_keep = 20;
  double score_threshold = 0.1;
};

struct GlobalAugConfig {
  double rotation_range = 1.5707963267948966;  ///< yaw drawn from [-r, r]
  double flip_probability = 0.5;
  double scale_min = 0.95;
  double scale_max = 1.05;
};

/// Everything a subcommand needs, with deployment-style defaults. Loadable
/// from a JSON file (see README for the key set); CLI flags override fields
/// after loading.
struct PipelineConfig {
  std::filesystem::path data_root;
  std::filesystem::path weights_path;  ///< empty: use the built-in bundle
  std::filesystem::path bank_dir;      ///< empty: build the bank on demand
  std::string image_mode = "raw";      ///< "raw" | "backbone"
  std::uint64_t seed = 0;
  int jobs = 1;

  VoxelizationConfig lidar_voxels;
  VoxelizationConfig virtual_voxels;
  QueryConfig query;
  ResizeConfig resize;
  PasteConfig paste;
  LossWeights loss_weights;
  std::array<int, 3> virtual_resolution{16, 8, 22};
  std::array<int, 3> query_resolution{6, 6, 6};
  double expand_margin = 0.8;
  EvalConfig eval;
  MatchMetric eval_metric = MatchMetric::iou_3d;
  NmsConfig nms;
  GlobalAugConfig global_aug;
};

PipelineConfig default_pipeline_config();

/// Reads JSON; keys absent from the file keep their defaults, unknown keys
/// are rejected. Call validate_config before use.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Throws ValidationError on out-of-range fields or missing referenced files.
void validate_config(const PipelineConfig& cfg);

/// Deterministic stand-in bundle (fixed internal seed) covering the 2D
/// backbone, the six spconv layers, the pooling MLPs and both heads for the
/// configured image mode, so every subcommand runs without weight files.
WeightBundle make_default_bundle(const PipelineConfig& cfg);

/// Loads one frame (calib, cloud, stereo images; labels and masks when the
/// files exist). Labels come back LiDAR-frame.
Scene load_scene(const PipelineConfig& cfg, const std::string& frame_id);

/// Sorted frame ids found under <data_root>/velodyne.
std::vector<std::string> list_frames(const PipelineConfig& cfg);

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidationFailure = 1;
inline constexpr int kExitUsageError = 2;

/// Parses every artifact of the listed frames, printing one OK/FAIL line per
/// file; returns kExitOk iff all pass.
int run_ingest(const PipelineConfig& cfg, const std::vector<std::string>& frames,
               std::ostream& out);

/// Builds the cut-n-paste sample bank from the frames and saves it.
int run_bank(const PipelineConfig& cfg, const std::vector<std::string>& frames,
             const std::filesystem::path& out_dir, std::ostream& out);

/// Applies cut-n-paste plus the global augmentations (seeded per frame) and
/// writes the augmented frames as a dataset under out_dir.
int run_augment(const PipelineConfig& cfg, const std::vector<std::string>& frames,
                const std::filesystem::path& out_dir, std::ostream& out);

struct FuseOptions {
  std::filesystem::path proposals_path;  ///< lines `x y z w l h theta score`
  bool proposals_from_labels = false;
  bool apply_resize = false;  ///< training-style random proposal resizing
};

/// Runs the fusion chain for one frame (resize -> expand -> virtual points ->
/// feature assembly -> voxelize -> spconv -> pooling -> heads -> NMS) and
/// dumps detections plus intermediate tensors under out_dir.
int run_fuse(const PipelineConfig& cfg, const std::string& frame_id, const FuseOptions& options,
             const std::filesystem::path& out_dir, std::ostream& out);

/// Scores detection dumps against the dataset labels; emits
/// `category difficulty metric AP` lines plus height-study bins. The optional
/// CSV receives the PR samples and height bins.
int run_eval(const PipelineConfig& cfg, const std::filesystem::path& detections_dir,
             const std::filesystem::path& csv_path, std::ostream& out);

struct BenchSetting {
  std::array<int, 3> virtual_resolution;
  int spconv_layers;
};

struct BenchRow {
  BenchSetting setting;
  double wall_ms = 0.0;
  std::uint64_t checksum = 0;
};

/// Sweeps virtual-point density and spconv depth over one frame, reporting
/// best-of-N wall time (after a warm-up run) and a pooled-tensor checksum
/// per setting.
int run_bench(const PipelineConfig& cfg, const std::string& frame_id,
              const std::vector<BenchSetting>& settings, int repeats,
              const std::filesystem::path& csv_path, std::ostream& out,
              std::vector<BenchRow>* rows_out = nullptr);

std::vector<BenchSetting> default_bench_settings();

}  // namespace vpf
