#include "vpf/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "vpf/error.hpp"

namespace vpf {

namespace {

Box3D rotate_box(const Box3D& box, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Box3D out = box;
  out.x = c * box.x - s * box.y;
  out.y = s * box.x + c * box.y;
  out.theta = normalize_angle(box.theta + angle);
  return out;
}

struct MaskBounds {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty when x1 < x0
  bool empty() const { return x1 < x0 || y1 < y0; }
};

MaskBounds mask_bounds(const RleMask& mask) {
  const auto bits = mask.decode();
  MaskBounds b{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!bits[static_cast<std::size_t>(y) * mask.width + x]) continue;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x);
      b.y1 = std::max(b.y1, y);
    }
  }
  return b;
}

Image crop_image(const Image& img, int x0, int y0, int x1, int y1) {
  Image out;
  out.width = x1 - x0 + 1;
  out.height = y1 - y0 + 1;
  out.channels = img.channels;
  out.data.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        out.at(x - x0, y - y0, c) = img.at(x, y, c);
      }
    }
  }
  return out;
}

/// Vertical integer shift of a binary raster, clipped to the frame.
RleMask shift_mask_rows(const RleMask& mask, int dv) {
  const auto bits = mask.decode();
  std::vector<std::uint8_t> shifted(bits.size(), 0);
  for (int y = 0; y < mask.height; ++y) {
    const int ty = y + dv;
    if (ty < 0 || ty >= mask.height) continue;
    std::copy_n(bits.begin() + static_cast<std::size_t>(y) * mask.width, mask.width,
                shifted.begin() + static_cast<std::size_t>(ty) * mask.width);
  }
  return RleMask::encode(shifted, mask.width, mask.height);
}

/// Pixel row shift of the projected box center caused by a vertical move of
/// dz meters (masks follow their object to stay consistent with the images).
int grounding_row_shift(const Box3D& before, double dz, const CalibrationSet& calib) {
  Box3D after = before;
  after.z += dz;
  const auto p0 = try_project_point(before.center(), calib);
  const auto p1 = try_project_point(after.center(), calib);
  if (!p0 || !p1) return 0;
  return static_cast<int>(std::lround(p1->v - p0->v));
}

bool usable_label(const LabeledObject& obj) {
  return obj.category != Category::DontCare && obj.box.w > 0.0 && obj.box.l > 0.0 &&
         obj.box.h > 0.0 && obj.bbox2d.width() > 0.0 && obj.bbox2d.height() > 0.0;
}

}  // namespace

Scene global_rotate(const Scene& scene, double angle) {
  if (!std::isfinite(angle)) throw DomainError("global_rotate: non-finite angle");
  Scene out = scene;
  const double c = std::cos(angle), s = std::sin(angle);
  for (auto& p : out.cloud.points) {
    const double x = p.x, y = p.y;
    p.x = c * x - s * y;
    p.y = s * x + c * y;
  }
  for (auto& obj : out.labels) obj.box = rotate_box(obj.box, angle);
  return out;
}

Scene global_flip(const Scene& scene) {
  Scene out = scene;
  for (auto& p : out.cloud.points) p.y = -p.y;
  for (auto& obj : out.labels) {
    obj.box.y = -obj.box.y;
    obj.box.theta = normalize_angle(-obj.box.theta);
  }
  return out;
}

Scene global_scale(const Scene& scene, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw DomainError("global_scale: factor must be positive");
  }
  Scene out = scene;
  for (auto& p : out.cloud.points) {
    p.x *= factor;
    p.y *= factor;
    p.z *= factor;
  }
  for (auto& obj : out.labels) {
    obj.box.x *= factor;
    obj.box.y *= factor;
    obj.box.z *= factor;
    obj.box.w *= factor;
    obj.box.l *= factor;
    obj.box.h *= factor;
  }
  return out;
}

double ground_z(const PointCloud& cloud) {
  if (cloud.points.empty()) return 0.0;
  std::vector<double> zs(cloud.points.size());
  for (std::size_t i = 0; i < zs.size(); ++i) zs[i] = cloud.points[i].z;
  const std::size_t idx = static_cast<std::size_t>(0.05 * (zs.size() - 1));
  std::nth_element(zs.begin(), zs.begin() + idx, zs.end());
  return zs[idx];
}

double stereo_pair_cost(const MaskInstance& left, const MaskInstance& right, double alpha,
                        double beta) {
  if (!(left.bbox2d.h > 0.0)) throw DomainError("stereo_pair_cost: left box height must be > 0");
  return alpha * std::abs(left.bbox2d.v - right.bbox2d.v) / left.bbox2d.h +
         beta * std::abs(left.score - right.score);
}

double gt_match_cost(const CenterBox& pair_box, const Rect2D& gt_box) {
  if (!(pair_box.h > 0.0 && pair_box.w > 0.0)) {
    throw DomainError("gt_match_cost: pair box extents must be > 0");
  }
  return std::abs(pair_box.v - gt_box.center_v()) / pair_box.h +
         std::abs(pair_box.u - gt_box.center_u()) / pair_box.w;
}

std::vector<std::pair<int, int>> hungarian_assign(const Eigen::MatrixXd& cost, double max_cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return {};
  if (!cost.allFinite()) throw DomainError("hungarian_assign: costs must be finite");
  const int n = std::max(rows, cols);

  // Zero-padded square matrix; equal pad entries leave the real rows'
  // optimum unchanged.
  auto at = [&](int r, int c) -> double {
    return (r < rows && c < cols) ? cost(r, c) : 0.0;
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<std::pair<int, int>> pairs;
  for (int j = 1; j <= n; ++j) {
    const int r = p[j] - 1;
    const int c = j - 1;
    if (r >= rows || c >= cols) continue;  // padding
    if (cost(r, c) > max_cost) continue;
    pairs.emplace_back(r, c);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::size_t SampleBank::total() const {
  std::size_t n = 0;
  for (const auto& [sig, triplets] : by_signature) n += triplets.size();
  return n;
}

void validate(const PasteConfig& cfg) {
  if (!(cfg.tau_2d >= 0.0 && cfg.tau_2d <= 1.0 && cfg.tau_3d >= 0.0 && cfg.tau_3d <= 1.0)) {
    throw ValidationError("PasteConfig: occlusion thresholds must lie in [0, 1]");
  }
  if (cfg.n_candidates < 0 || cfg.n_paste < 0) {
    throw ValidationError("PasteConfig: counts must be >= 0");
  }
}

SampleBank build_sample_bank(std::span<const Scene> scenes, const PasteConfig& cfg) {
  validate(cfg);
  SampleBank bank;
  for (const Scene& scene : scenes) {
    const auto& lefts = scene.masks_left;
    const auto& rights = scene.masks_right;
    if (lefts.empty() || rights.empty()) continue;

    Eigen::MatrixXd stereo_cost(lefts.size(), rights.size());
    for (std::size_t i = 0; i < lefts.size(); ++i) {
      for (std::size_t j = 0; j < rights.size(); ++j) {
        stereo_cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            stereo_pair_cost(lefts[i], rights[j], cfg.alpha, cfg.beta);
      }
    }
    const auto stereo_pairs = hungarian_assign(stereo_cost, cfg.max_cost);
    if (stereo_pairs.empty()) continue;

    std::vector<const LabeledObject*> gts;
    for (const auto& obj : scene.labels) {
      if (usable_label(obj)) gts.push_back(&obj);
    }
    if (gts.empty()) continue;

    Eigen::MatrixXd gt_cost(stereo_pairs.size(), gts.size());
    for (std::size_t k = 0; k < stereo_pairs.size(); ++k) {
      const MaskInstance& left = lefts[stereo_pairs[k].first];
      for (std::size_t g = 0; g < gts.size(); ++g) {
        gt_cost(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g)) =
            gt_match_cost(left.bbox2d, gts[g]->bbox2d);
      }
    }
    const double gz = ground_z(scene.cloud);

    for (const auto& [k, g] : hungarian_assign(gt_cost, cfg.max_cost)) {
      SampleTriplet triplet;
      triplet.left_mask = lefts[stereo_pairs[k].first];
      triplet.right_mask = rights[stereo_pairs[k].second];
      triplet.object = *gts[g];
      triplet.source_ground_z = gz;

      for (const auto& p : scene.cloud.points) {
        if (point_in_box({p.x, p.y, p.z}, triplet.object.box)) triplet.points.points.push_back(p);
      }
      if (triplet.points.points.empty()) continue;

      const MaskBounds lb = mask_bounds(triplet.left_mask.mask);
      const MaskBounds rb = mask_bounds(triplet.right_mask.mask);
      if (lb.empty() || rb.empty()) continue;
      triplet.left_patch = crop_image(scene.left, lb.x0, lb.y0, lb.x1, lb.y1);
      triplet.right_patch = crop_image(scene.right, rb.x0, rb.y0, rb.x1, rb.y1);

      // Ground the object: drop the box bottom onto the scene's ground plane
      // and move points and masks with it.
      const double dz = gz - (triplet.object.box.z - 0.5 * triplet.object.box.h);
      const int dv_left = grounding_row_shift(triplet.object.box, dz, scene.calib.left);
      const int dv_right = grounding_row_shift(triplet.object.box, dz, scene.calib.right);
      triplet.object.box.z += dz;
      triplet.object.bbox2d.v_min += dv_left;
      triplet.object.bbox2d.v_max += dv_left;
      for (auto& p : triplet.points.points) p.z += dz;
      triplet.left_mask.mask = shift_mask_rows(triplet.left_mask.mask, dv_left);
      triplet.left_mask.bbox2d.v += dv_left;
      triplet.right_mask.mask = shift_mask_rows(triplet.right_mask.mask, dv_right);
      triplet.right_mask.bbox2d.v += dv_right;
      triplet.left_patch_x0 = lb.x0;
      triplet.left_patch_y0 = lb.y0 + dv_left;
      triplet.right_patch_x0 = rb.x0;
      triplet.right_patch_y0 = rb.y0 + dv_right;
      if (triplet.left_mask.mask.count_ones() == 0 || triplet.right_mask.mask.count_ones() == 0) {
        continue;  // shifted fully out of frame
      }
      bank.by_signature[scene.calib_signature].push_back(std::move(triplet));
    }
  }
  return bank;
}

std::pair<double, double> occlusion_indicator(
    const Box3D& box, const Rect2D& bbox2d,
    std::span<const std::pair<Box3D, Rect2D>> scene_objects) {
  double i3d = 0.0, i2d = 0.0;
  for (const auto& [other_box, other_rect] : scene_objects) {
    i3d = std::max(i3d, iou_bev(box, other_box));
    i2d = std::max(i2d, iou_rect(bbox2d, other_rect));
  }
  return {i3d, i2d};
}

namespace {

struct PlacedCandidate {
  const SampleTriplet* triplet = nullptr;
  double dz = 0.0;
  int dv_left = 0;
  int dv_right = 0;
  Box3D box;
  Rect2D rect;
  double depth = 0.0;
};

void paste_pixels(Image& image, const RleMask& mask, int dv, const Image& patch, int patch_x0,
                  int patch_y0) {
  const auto bits = mask.decode();
  for (int y = 0; y < mask.height; ++y) {
    const int ty = y + dv;
    if (ty < 0 || ty >= image.height) continue;
    for (int x = 0; x < mask.width && x < image.width; ++x) {
      if (!bits[static_cast<std::size_t>(y) * mask.width + x]) continue;
      const int px = x - patch_x0;
      const int py = y - patch_y0;
      if (px < 0 || px >= patch.width || py < 0 || py >= patch.height) continue;
      for (int c = 0; c < image.channels; ++c) {
        image.at(x, ty, c) = patch.at(px, py, c);
      }
    }
  }
}

}  // namespace

Scene cut_n_paste(const Scene& scene, const SampleBank& bank, const PasteConfig& cfg, Rng& rng) {
  validate(cfg);
  const auto it = bank.by_signature.find(scene.calib_signature);
  if (it == bank.by_signature.end() || it->second.empty() || cfg.n_paste == 0) {
    return scene;  // no donors with this exact calibration
  }
  const auto& entries = it->second;

  // Partial Fisher-Yates: up to n_candidates distinct draws.
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t draw_count = std::min<std::size_t>(cfg.n_candidates, entries.size());
  for (std::size_t i = 0; i < draw_count; ++i) {
    const std::size_t j = i + rng.next_below(order.size() - i);
    std::swap(order[i], order[j]);
  }

  const double target_gz = ground_z(scene.cloud);
  std::vector<std::pair<Box3D, Rect2D>> current;
  for (const auto& obj : scene.labels) {
    if (usable_label(obj)) current.emplace_back(obj.box, obj.bbox2d);
  }

  std::vector<PlacedCandidate> admitted;
  for (std::size_t c = 0; c < draw_count && admitted.size() < static_cast<std::size_t>(cfg.n_paste);
       ++c) {
    const SampleTriplet& triplet = entries[order[c]];
    PlacedCandidate placed;
    placed.triplet = &triplet;
    placed.dz = target_gz - triplet.source_ground_z;
    placed.dv_left = grounding_row_shift(triplet.object.box, placed.dz, scene.calib.left);
    placed.dv_right = grounding_row_shift(triplet.object.box, placed.dz, scene.calib.right);
    placed.box = triplet.object.box;
    placed.box.z += placed.dz;
    CenterBox placed_2d = triplet.left_mask.bbox2d;
    placed_2d.v += placed.dv_left;
    placed.rect = placed_2d.to_rect();
    const auto projected = try_project_point(placed.box.center(), scene.calib.left);
    placed.depth = projected ? projected->depth : 0.0;

    const auto [i3d, i2d] = occlusion_indicator(placed.box, placed.rect, current);
    if (i3d > cfg.tau_3d || i2d > cfg.tau_2d) continue;
    current.emplace_back(placed.box, placed.rect);
    admitted.push_back(placed);
  }
  if (admitted.empty()) return scene;

  Scene out = scene;
  int next_id = 0;
  for (const auto& inst : out.masks_left) next_id = std::max(next_id, inst.instance_id);
  for (const auto& inst : out.masks_right) next_id = std::max(next_id, inst.instance_id);

  // Points and labels follow admission order; pixels composite far-to-near so
  // the nearest pasted object ends up owning any contested pixel.
  for (const PlacedCandidate& placed : admitted) {
    const SampleTriplet& t = *placed.triplet;
    for (auto p : t.points.points) {
      p.z += placed.dz;
      out.cloud.points.push_back(p);
    }
    LabeledObject label = t.object;
    label.box = placed.box;
    label.bbox2d = placed.rect;
    out.labels.push_back(std::move(label));
  }

  std::vector<const PlacedCandidate*> paint_order;
  for (const auto& placed : admitted) paint_order.push_back(&placed);
  std::stable_sort(paint_order.begin(), paint_order.end(),
                   [](const PlacedCandidate* a, const PlacedCandidate* b) {
                     return a->depth > b->depth;
                   });

  // Mask ownership mirrors pixel ownership: pasting claims pixels, so any
  // instance underneath (pre-existing or pasted earlier) loses them. Rebuild
  // every mask from an id raster painted in the same order as the pixels.
  for (int side = 0; side < 2; ++side) {
    Image& image = side == 0 ? out.left : out.right;
    std::vector<MaskInstance>& masks = side == 0 ? out.masks_left : out.masks_right;
    std::vector<int> raster(static_cast<std::size_t>(image.width) * image.height, 0);
    for (const MaskInstance& inst : masks) {
      const auto bits = inst.mask.decode();
      for (std::size_t p = 0; p < bits.size() && p < raster.size(); ++p) {
        if (bits[p]) raster[p] = inst.instance_id;
      }
    }
    int id = next_id;
    for (const PlacedCandidate* placed : paint_order) {
      const SampleTriplet& t = *placed->triplet;
      const MaskInstance& source = side == 0 ? t.left_mask : t.right_mask;
      const Image& patch = side == 0 ? t.left_patch : t.right_patch;
      const int dv = side == 0 ? placed->dv_left : placed->dv_right;
      paste_pixels(image, source.mask, dv,
                   patch, side == 0 ? t.left_patch_x0 : t.right_patch_x0,
                   side == 0 ? t.left_patch_y0 : t.right_patch_y0);

      MaskInstance pasted = source;
      pasted.instance_id = ++id;
      pasted.mask = shift_mask_rows(source.mask, dv);
      pasted.bbox2d.v += dv;
      const auto bits = pasted.mask.decode();
      for (std::size_t p = 0; p < bits.size() && p < raster.size(); ++p) {
        if (bits[p]) raster[p] = pasted.instance_id;
      }
      masks.push_back(std::move(pasted));
    }
    std::vector<std::uint8_t> bits(raster.size());
    for (MaskInstance& inst : masks) {
      for (std::size_t p = 0; p < raster.size(); ++p) bits[p] = raster[p] == inst.instance_id;
      inst.mask = RleMask::encode(bits, image.width, image.height);
    }
  }
  return out;
}

void save_bank(const SampleBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string index;
  int id = 0;
  char name[32];
  for (const auto& [signature, triplets] : bank.by_signature) {
    for (const SampleTriplet& t : triplets) {
      std::snprintf(name, sizeof(name), "%06d", id);
      const std::string base = name;
      char gz[32];
      std::snprintf(gz, sizeof(gz), "%.17g", t.source_ground_z);
      index += base + " " + signature + " " + gz + "\n";

      write_file(dir / (base + "_cloud.bin"), serialize_point_cloud(t.points));
      write_file(dir / (base + "_label.txt"),
                 serialize_labels(std::span(&t.object, 1)));
      for (const char* side : {"left", "right"}) {
        const bool is_left = side[0] == 'l';
        MaskInstance inst = is_left ? t.left_mask : t.right_mask;
        inst.instance_id = 1;
        const auto [raster, sidecar] =
            serialize_mask_set(std::span(&inst, 1), inst.mask.width, inst.mask.height);
        write_file(dir / (base + "_" + side + "_mask.pgm"), raster);
        write_file(dir / (base + "_" + side + "_mask.txt"), sidecar);
        write_file(dir / (base + "_" + side + "_patch.ppm"),
                   serialize_image(is_left ? t.left_patch : t.right_patch));
      }
      ++id;
    }
  }
  write_file(dir / "index.txt", index);
}

SampleBank load_bank(const std::filesystem::path& dir) {
  const auto index_bytes = read_file(dir / "index.txt");
  const std::string index(index_bytes.begin(), index_bytes.end());
  SampleBank bank;
  std::size_t pos = 0;
  while (pos < index.size()) {
    std::size_t eol = index.find('\n', pos);
    if (eol == std::string::npos) eol = index.size();
    const std::string line = index.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::size_t s1 = line.find(' ');
    std::size_t s2 = line.find(' ', s1 + 1);
    if (s1 == std::string::npos || s2 == std::string::npos) {
      throw ParseError("load_bank: malformed index line '" + line + "'");
    }
    const std::string base = line.substr(0, s1);
    const std::string signature = line.substr(s1 + 1, s2 - s1 - 1);
    SampleTriplet t;
    t.source_ground_z = std::stod(line.substr(s2 + 1));
    t.points = load_point_cloud(read_file(dir / (base + "_cloud.bin")));
    if (t.points.points.empty()) {
      throw ValidationError("load_bank: triplet " + base + " has no points");
    }
    const auto label_bytes = read_file(dir / (base + "_label.txt"));
    const auto labels = parse_labels(std::string(label_bytes.begin(), label_bytes.end()));
    if (labels.size() != 1) throw ValidationError("load_bank: expected one label per triplet");
    t.object = labels[0];

    for (const char* side : {"left", "right"}) {
      const bool is_left = side[0] == 'l';
      const auto raster = read_file(dir / (base + "_" + side + "_mask.pgm"));
      const auto sidecar_bytes = read_file(dir / (base + "_" + side + "_mask.txt"));
      const auto instances =
          load_mask_set(raster, std::string(sidecar_bytes.begin(), sidecar_bytes.end()));
      if (instances.size() != 1) {
        throw ValidationError("load_bank: expected one mask instance per side");
      }
      const Image patch = load_image(read_file(dir / (base + "_" + side + "_patch.ppm")));
      const MaskBounds bounds = mask_bounds(instances[0].mask);
      if (is_left) {
        t.left_mask = instances[0];
        t.left_patch = patch;
        t.left_patch_x0 = bounds.x0;
        t.left_patch_y0 = bounds.y0;
      } else {
        t.right_mask = instances[0];
        t.right_patch = patch;
        t.right_patch_x0 = bounds.x0;
        t.right_patch_y0 = bounds.y0;
      }
    }
    bank.by_signature[signature].push_back(std::move(t));
  }
  return bank;
}

}  // namespace vpf
