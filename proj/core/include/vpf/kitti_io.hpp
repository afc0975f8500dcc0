#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vpf/geometry.hpp"

namespace vpf {

struct PointCloud {
  struct Point {
    double x = 0.0, y = 0.0, z = 0.0;  ///< meters
    double intensity = 0.0;            ///< [0, 1]
  };
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
};

enum class Category {
  Car,
  Van,
  Truck,
  Pedestrian,
  PersonSitting,
  Cyclist,
  Tram,
  Misc,
  DontCare,
  Other,  ///< unknown categories are preserved via category_name, never dropped
};

Category category_from_string(std::string_view name);
std::string_view category_to_string(Category c);

/// One annotated object. parse_labels yields the box in the camera frame
/// (center-based position) exactly as recorded; camera_to_lidar moves it to
/// the LiDAR frame at ingestion so downstream geometry uses a single frame.
struct LabeledObject {
  Category category = Category::Other;
  std::string category_name;  ///< raw label token, preserved for unknowns
  Box3D box;
  int occlusion_level = 0;  ///< 0..3 (unknown/-1 maps to 3)
  double truncation = 0.0;  ///< [0, 1]
  Rect2D bbox2d;
};

/// Row-major interleaved pixel container (HWC), values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Run-length-encoded binary raster, row-major. `runs` alternates counts of
/// zero and one pixels, starting with zeros; counts sum to width * height.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> runs;

  static RleMask encode(std::span<const std::uint8_t> raster, int width, int height);
  std::vector<std::uint8_t> decode() const;
  std::size_t count_ones() const;
};

struct MaskInstance {
  int instance_id = 0;  ///< positive, unique within a frame
  double score = 0.0;   ///< [0, 1]
  CenterBox bbox2d;     ///< pixels
  RleMask mask;
};

/// Named tensor (row-major values widened to double; files store float32).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const;
};

/// Throws ValidationError unless shape product equals the value count.
void validate(const Tensor& tensor);

struct WeightBundle {
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const;       ///< throws MissingWeight
  const Tensor* find(const std::string& name) const;     ///< nullptr when absent
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
};

// -- calibration ------------------------------------------------------------

/// Parses KITTI-convention calibration text (P2, P3, R0_rect, Tr_velo_to_cam
/// records, `NAME: v0 v1 ...` lines) into the stereo pair. The left camera is
/// assembled from P2, the right from P3; both projection matrices stay
/// exposed so callers pick the baseline explicitly.
StereoCalibration parse_calibration(std::string_view text);
std::string serialize_calibration(const StereoCalibration& calib);

// -- point clouds -----------------------------------------------------------

/// Little-endian float32 x/y/z/intensity records, 16 bytes per point.
PointCloud load_point_cloud(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_point_cloud(const PointCloud& cloud);

// -- labels -----------------------------------------------------------------

/// KITTI 15-field label lines. The returned boxes are camera-frame with a
/// center-based position (the file's bottom-face anchor is lifted by h/2
/// along the camera's up direction). Extra fields past 15 are ignored.
std::vector<LabeledObject> parse_labels(std::string_view text);
std::string serialize_labels(std::span<const LabeledObject> labels);

/// Frame unification step: camera-frame labels to LiDAR-frame labels.
std::vector<LabeledObject> labels_to_lidar(std::span<const LabeledObject> labels,
                                           const CalibrationSet& calib);
std::vector<LabeledObject> labels_to_camera(std::span<const LabeledObject> labels,
                                            const CalibrationSet& calib);

// -- images -----------------------------------------------------------------

/// Binary PPM (P6, three channels) or PGM (P5, one channel), maxval 255.
Image load_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_image(const Image& image);

// -- instance masks ----------------------------------------------------------

/// Raster: PGM where each pixel holds the owning instance id (0 background).
/// Sidecar: one line per instance, `id score u v w h` (u, v are the 2D box
/// center). Every id present in the raster must appear in the sidecar.
std::vector<MaskInstance> load_mask_set(std::span<const std::uint8_t> raster_bytes,
                                        std::string_view sidecar_text);

/// Inverse of load_mask_set; instances must have disjoint masks.
std::pair<std::vector<std::uint8_t>, std::string> serialize_mask_set(
    std::span<const MaskInstance> instances, int width, int height);

// -- weight bundles ----------------------------------------------------------

/// Bundle format: magic "VPFW1\n", then per tensor: u32 name length, name
/// bytes, u32 rank, u32 dims, float32 payload (all little-endian).
WeightBundle load_weights(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_weights(const WeightBundle& bundle);

// -- file helpers -------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file(const std::filesystem::path& path, std::string_view text);

}  // namespace vpf
