#include "fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>

#include "vpf/error.hpp"

namespace vpf::testing {

namespace fs = std::filesystem;

StereoCalibration fixture_calibration() {
  StereoCalibration calib;
  Mat3 k;
  k << 400.0, 0.0, 300.0, 0.0, 400.0, 80.0, 0.0, 0.0, 1.0;
  Mat3 r;
  r << 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0;
  calib.left.intrinsics = k;
  calib.left.rotation = r;
  calib.left.translation = {0.0, -0.08, -0.27};
  calib.right.intrinsics = k;
  calib.right.rotation = r;
  calib.right.translation = {-0.54, -0.08, -0.27};
  return calib;
}

std::string fixture_calibration_text() {
  return
      "P2: 400 0 300 0 0 400 80 0 0 0 1 0\n"
      "P3: 400 0 300 -216 0 400 80 0 0 0 1 0\n"
      "R0_rect: 1 0 0 0 1 0 0 0 1\n"
      "Tr_velo_to_cam: 0 -1 0 0 0 0 -1 -0.08 1 0 0 -0.27\n";
}

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Image make_background(int width, int height, double tint) {
  Image img;
  img.width = width;
  img.height = height;
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      img.at(x, y, 0) = quantize(0.15 + 0.5 * x / width);
      img.at(x, y, 1) = quantize(0.15 + 0.5 * y / height);
      img.at(x, y, 2) = quantize(tint);
    }
  }
  return img;
}

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive, clipped; empty when x1 < x0
  bool empty() const { return x1 < x0 || y1 < y0; }
};

PixelRect clip_to_image(const Rect2D& rect) {
  PixelRect p;
  p.x0 = std::max(0, static_cast<int>(std::ceil(rect.u_min)));
  p.y0 = std::max(0, static_cast<int>(std::ceil(rect.v_min)));
  p.x1 = std::min(kImageWidth - 1, static_cast<int>(std::floor(rect.u_max)));
  p.y1 = std::min(kImageHeight - 1, static_cast<int>(std::floor(rect.v_max)));
  return p;
}

}  // namespace

Scene make_fixture_scene(Rng& rng, const SceneOptions& options) {
  Scene scene;
  scene.calib = fixture_calibration();
  scene.calib_signature = calibration_signature(scene.calib);

  // Ground plane: a regular grid at kGroundZ, the dominant z population.
  for (double x = 4.0; x <= 60.0; x += 0.8) {
    for (double y = -20.0; y <= 20.0; y += 0.8) {
      scene.cloud.points.push_back({x, y, kGroundZ, 0.3});
    }
  }

  // Car-like boxes, BEV-disjoint, difficulty mixed through distance and
  // occlusion level.
  std::vector<Box3D> boxes;
  for (int i = 0; i < options.objects; ++i) {
    const int slot = i % 3;
    Box3D box;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      box.w = rng.uniform(1.6, 1.9);
      box.l = rng.uniform(3.9, 4.5);
      box.h = rng.uniform(1.45, 1.7);
      const double near_max = std::min(13.0, options.x_max);
      box.x = slot == 0 ? rng.uniform(options.x_min, near_max)
                        : rng.uniform(std::min(14.0, options.x_max - 1.0), options.x_max);
      const double y_limit = std::max(1.0, 0.55 * box.x - 4.0);
      box.y = rng.uniform(-y_limit, y_limit);
      // Bottom face floats just above the ground-grid z so no cloud point
      // sits exactly on a box boundary.
      box.z = kGroundZ + 0.03 + 0.5 * box.h;
      box.theta = rng.uniform(-3.14159265358979, 3.14159265358979);
      placed = true;
      for (const Box3D& other : boxes) {
        if (iou_bev(box, other) > 0.0 ||
            std::hypot(box.x - other.x, box.y - other.y) < 5.0) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;
    boxes.push_back(box);

    LabeledObject obj;
    obj.category = Category::Car;
    obj.category_name = "Car";
    obj.box = box;
    obj.occlusion_level = slot;  // 0 easy, 1 moderate, 2 hard
    obj.truncation = 0.0;
    const auto rect = project_box_to_rect(box, scene.calib.left);
    const PixelRect clipped = clip_to_image(*rect);
    obj.bbox2d = {static_cast<double>(clipped.x0), static_cast<double>(clipped.y0),
                  static_cast<double>(clipped.x1), static_cast<double>(clipped.y1)};
    scene.labels.push_back(std::move(obj));

    for (int p = 0; p < options.points_per_object; ++p) {
      const double lx = rng.uniform(-0.48, 0.48) * box.l;
      const double ly = rng.uniform(-0.48, 0.48) * box.w;
      const double lz = rng.uniform(-0.48, 0.48) * box.h;
      const double c = std::cos(box.theta), s = std::sin(box.theta);
      scene.cloud.points.push_back(
          {box.x + c * lx - s * ly, box.y + s * lx + c * ly, box.z + lz, 0.8});
    }
  }

  scene.left = make_background(kImageWidth, kImageHeight, 0.35);
  scene.right = make_background(kImageWidth, kImageHeight, 0.45);

  if (options.with_masks) {
    // Paint far-to-near so overlapping projections resolve like a real
    // instance raster; then lift per-id masks back out.
    std::vector<std::size_t> order(boxes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return boxes[a].x > boxes[b].x; });

    for (int side = 0; side < 2; ++side) {
      const CalibrationSet& calib = side == 0 ? scene.calib.left : scene.calib.right;
      Image& image = side == 0 ? scene.left : scene.right;
      std::vector<std::uint8_t> raster(static_cast<std::size_t>(kImageWidth) * kImageHeight, 0);
      std::vector<CenterBox> sidecar_boxes(boxes.size());
      for (std::size_t idx : order) {
        const auto rect = project_box_to_rect(boxes[idx], calib);
        if (!rect) continue;
        const PixelRect clipped = clip_to_image(*rect);
        if (clipped.empty()) continue;
        const int id = static_cast<int>(idx) + 1;
        const double color = quantize((40 + (53 * id) % 200) / 255.0);
        for (int y = clipped.y0; y <= clipped.y1; ++y) {
          for (int x = clipped.x0; x <= clipped.x1; ++x) {
            raster[static_cast<std::size_t>(y) * kImageWidth + x] =
                static_cast<std::uint8_t>(id);
            image.at(x, y, 0) = color;
            image.at(x, y, 1) = quantize(color * 0.5);
            image.at(x, y, 2) = quantize(1.0 - color);
          }
        }
        sidecar_boxes[idx] = CenterBox::from_rect({static_cast<double>(clipped.x0),
                                                   static_cast<double>(clipped.y0),
                                                   static_cast<double>(clipped.x1),
                                                   static_cast<double>(clipped.y1)});
      }
      std::vector<MaskInstance>& masks = side == 0 ? scene.masks_left : scene.masks_right;
      std::vector<std::uint8_t> bits(raster.size());
      for (std::size_t idx = 0; idx < boxes.size(); ++idx) {
        const int id = static_cast<int>(idx) + 1;
        std::size_t ones = 0;
        for (std::size_t p = 0; p < raster.size(); ++p) {
          bits[p] = raster[p] == id ? 1 : 0;
          ones += bits[p];
        }
        if (ones == 0) continue;
        MaskInstance inst;
        inst.instance_id = id;
        inst.score = 0.8 + 0.02 * (id % 10);
        inst.bbox2d = sidecar_boxes[idx];
        inst.mask = RleMask::encode(bits, kImageWidth, kImageHeight);
        masks.push_back(std::move(inst));
      }
    }
  }
  return scene;
}

void write_scene(const fs::path& dir, const std::string& frame_id, const Scene& scene,
                 const std::string& calib_text) {
  for (const char* sub :
       {"velodyne", "calib", "image_2", "image_3", "label_2", "masks_2", "masks_3"}) {
    fs::create_directories(dir / sub);
  }
  write_file(dir / "velodyne" / (frame_id + ".bin"), serialize_point_cloud(scene.cloud));
  write_file(dir / "calib" / (frame_id + ".txt"), calib_text);
  write_file(dir / "image_2" / (frame_id + ".ppm"), serialize_image(scene.left));
  write_file(dir / "image_3" / (frame_id + ".ppm"), serialize_image(scene.right));
  const auto camera_labels = labels_to_camera(scene.labels, scene.calib.left);
  write_file(dir / "label_2" / (frame_id + ".txt"), serialize_labels(camera_labels));
  const auto [left_raster, left_sidecar] =
      serialize_mask_set(scene.masks_left, scene.left.width, scene.left.height);
  write_file(dir / "masks_2" / (frame_id + ".pgm"), left_raster);
  write_file(dir / "masks_2" / (frame_id + ".txt"), left_sidecar);
  const auto [right_raster, right_sidecar] =
      serialize_mask_set(scene.masks_right, scene.right.width, scene.right.height);
  write_file(dir / "masks_3" / (frame_id + ".pgm"), right_raster);
  write_file(dir / "masks_3" / (frame_id + ".txt"), right_sidecar);
}

void make_mini_dataset(const fs::path& dir, const DatasetOptions& options) {
  Rng root(options.seed);
  for (int f = 0; f < options.frames; ++f) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06d", f);
    Rng rng = root.split(f);
    const bool foreign = options.foreign_calib_last_frame && f == options.frames - 1;
    Scene scene = make_fixture_scene(rng, options.scene);
    std::string calib_text = fixture_calibration_text();
    if (foreign) {
      // Same rig layout, different focal length: a distinct signature.
      calib_text =
          "P2: 410 0 300 0 0 410 80 0 0 0 1 0\n"
          "P3: 410 0 300 -221.4 0 410 80 0 0 0 1 0\n"
          "R0_rect: 1 0 0 0 1 0 0 0 1\n"
          "Tr_velo_to_cam: 0 -1 0 0 0 0 -1 -0.08 1 0 0 -0.27\n";
      scene.calib = parse_calibration(calib_text);
      scene.calib_signature = calibration_signature(scene.calib);
    }
    write_scene(dir, name, scene, calib_text);
  }
}

PipelineConfig fixture_config(const fs::path& data_root) {
  PipelineConfig cfg = default_pipeline_config();
  cfg.data_root = data_root;
  cfg.image_mode = "raw";
  cfg.seed = 7;
  return cfg;
}

fs::path make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const fs::path dir = fs::temp_directory_path() /
                       ("vpf_test_" + tag + "_" + std::to_string(counter.fetch_add(1)) + "_" +
                        std::to_string(static_cast<unsigned>(::getpid())));
  fs::create_directories(dir);
  return dir;
}

}  // namespace vpf::testing
