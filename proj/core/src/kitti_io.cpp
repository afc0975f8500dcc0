#include "vpf/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "vpf/error.hpp"

namespace vpf {

namespace {

constexpr double kPi = 3.14159265358979323846;

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  out.push_back(bits & 0xFF);
  out.push_back((bits >> 8) & 0xFF);
  out.push_back((bits >> 16) & 0xFF);
  out.push_back((bits >> 24) & 0xFF);
}

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
  out.push_back((v >> 16) & 0xFF);
  out.push_back((v >> 24) & 0xFF);
}

double parse_double_token(std::string_view token, const char* context) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError(std::string(context) + ": non-numeric token '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_ws(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) tokens.push_back(text.substr(start, i - start));
  }
  return tokens;
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// -- categories ----------------------------------------------------------------

Category category_from_string(std::string_view name) {
  if (name == "Car") return Category::Car;
  if (name == "Van") return Category::Van;
  if (name == "Truck") return Category::Truck;
  if (name == "Pedestrian") return Category::Pedestrian;
  if (name == "Person_sitting") return Category::PersonSitting;
  if (name == "Cyclist") return Category::Cyclist;
  if (name == "Tram") return Category::Tram;
  if (name == "Misc") return Category::Misc;
  if (name == "DontCare") return Category::DontCare;
  return Category::Other;
}

std::string_view category_to_string(Category c) {
  switch (c) {
    case Category::Car: return "Car";
    case Category::Van: return "Van";
    case Category::Truck: return "Truck";
    case Category::Pedestrian: return "Pedestrian";
    case Category::PersonSitting: return "Person_sitting";
    case Category::Cyclist: return "Cyclist";
    case Category::Tram: return "Tram";
    case Category::Misc: return "Misc";
    case Category::DontCare: return "DontCare";
    case Category::Other: return "Other";
  }
  return "Other";
}

// -- tensors ---------------------------------------------------------------------

std::size_t Tensor::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void validate(const Tensor& tensor) {
  if (tensor.shape.empty()) throw ValidationError("Tensor: empty shape");
  if (tensor.size() != tensor.values.size()) {
    throw ValidationError("Tensor: declared shape product " + std::to_string(tensor.size()) +
                          " != value count " + std::to_string(tensor.values.size()));
  }
}

const Tensor& WeightBundle::at(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw MissingWeight("WeightBundle: missing tensor '" + name + "'");
  return it->second;
}

const Tensor* WeightBundle::find(const std::string& name) const {
  const auto it = tensors.find(name);
  return it == tensors.end() ? nullptr : &it->second;
}

// -- calibration -------------------------------------------------------------------

StereoCalibration parse_calibration(std::string_view text) {
  std::map<std::string, std::vector<double>, std::less<>> records;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos) continue;  // blank / malformed separator lines skipped
    std::string name(line.substr(0, colon));
    while (!name.empty() && std::isspace(static_cast<unsigned char>(name.back()))) name.pop_back();
    std::vector<double> values;
    for (std::string_view token : split_ws(line.substr(colon + 1))) {
      values.push_back(parse_double_token(token, "parse_calibration"));
    }
    records[name] = std::move(values);
  }

  auto fetch = [&](std::string_view name, std::size_t count) -> const std::vector<double>& {
    const auto it = records.find(name);
    if (it == records.end()) {
      throw MissingField("parse_calibration: missing record '" + std::string(name) + "'");
    }
    if (it->second.size() != count) {
      throw ParseError("parse_calibration: record '" + std::string(name) + "' has " +
                       std::to_string(it->second.size()) + " values, expected " +
                       std::to_string(count));
    }
    return it->second;
  };

  const auto& r0 = fetch("R0_rect", 9);
  const auto& tr = fetch("Tr_velo_to_cam", 12);
  Mat3 rect, tr_rot;
  Vec3 tr_t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      rect(r, c) = r0[r * 3 + c];
      tr_rot(r, c) = tr[r * 4 + c];
    }
    tr_t(r) = tr[r * 4 + 3];
  }

  auto assemble = [&](std::string_view record) {
    const auto& p = fetch(record, 12);
    Mat3 k;
    Vec3 p4;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) k(r, c) = p[r * 4 + c];
      p4(r) = p[r * 4 + 3];
    }
    if (std::abs(k(2, 2)) < 1e-12) {
      throw ValidationError("parse_calibration: projection matrix has zero scale");
    }
    // Normalize the projective scale so K(2,2) == 1 exactly.
    const double s22 = k(2, 2);
    k /= s22;
    p4 /= s22;
    CalibrationSet calib;
    calib.intrinsics = k;
    calib.rotation = rect * tr_rot;
    calib.translation = rect * tr_t + k.inverse() * p4;
    calib.scale = 1.0;
    validate(calib);
    return calib;
  };

  return StereoCalibration{assemble("P2"), assemble("P3")};
}

std::string serialize_calibration(const StereoCalibration& calib) {
  if ((calib.left.rotation - calib.right.rotation).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValidationError("serialize_calibration: stereo pair must share one rotation");
  }
  // Canonical form: rectification folded away (R0_rect = I), the shared rigid
  // transform in Tr_velo_to_cam, baselines in the projection matrices.
  const Mat3& k_l = calib.left.intrinsics;
  const Mat3& k_r = calib.right.intrinsics;
  const Vec3 p4_r = k_r * (calib.right.translation - calib.left.translation);

  std::string out;
  auto emit_3x4 = [&](std::string_view name, const Mat3& m, const Vec3& t) {
    out += name;
    out += ':';
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out += " " + format_g17(m(r, c));
      out += " " + format_g17(t(r));
    }
    out += '\n';
  };
  emit_3x4("P2", k_l, Vec3::Zero());
  emit_3x4("P3", k_r, p4_r);
  out += "R0_rect:";
  const Mat3 identity = Mat3::Identity();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out += " " + format_g17(identity(r, c));
  out += '\n';
  emit_3x4("Tr_velo_to_cam", calib.left.rotation, calib.left.translation);
  return out;
}

// -- point clouds --------------------------------------------------------------------

PointCloud load_point_cloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) {
    throw TruncatedInput("load_point_cloud: " + std::to_string(bytes.size()) +
                         " bytes is not a whole number of 16-byte records");
  }
  PointCloud cloud;
  cloud.points.reserve(bytes.size() / 16);
  for (std::size_t off = 0; off < bytes.size(); off += 16) {
    PointCloud::Point p;
    p.x = read_f32_le(bytes.data() + off);
    p.y = read_f32_le(bytes.data() + off + 4);
    p.z = read_f32_le(bytes.data() + off + 8);
    p.intensity = read_f32_le(bytes.data() + off + 12);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity)) {
      throw ValidationError("load_point_cloud: non-finite value in record " +
                            std::to_string(off / 16));
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

std::vector<std::uint8_t> serialize_point_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(cloud.points.size() * 16);
  for (const auto& p : cloud.points) {
    append_f32_le(out, static_cast<float>(p.x));
    append_f32_le(out, static_cast<float>(p.y));
    append_f32_le(out, static_cast<float>(p.z));
    append_f32_le(out, static_cast<float>(p.intensity));
  }
  return out;
}

// -- labels ---------------------------------------------------------------------------

std::vector<LabeledObject> parse_labels(std::string_view text) {
  std::vector<LabeledObject> labels;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() < 15) {
      throw ParseError("parse_labels: line " + std::to_string(line_no) + " has " +
                       std::to_string(tokens.size()) + " fields, expected >= 15");
    }
    LabeledObject obj;
    obj.category_name = std::string(tokens[0]);
    obj.category = category_from_string(tokens[0]);
    auto num = [&](int i) { return parse_double_token(tokens[i], "parse_labels"); };
    obj.truncation = num(1);
    const double occ = num(2);
    obj.occlusion_level = occ < 0 ? 3 : static_cast<int>(occ);
    if (obj.occlusion_level > 3) {
      throw ValidationError("parse_labels: occlusion level out of range on line " +
                            std::to_string(line_no));
    }
    // tokens[3] is the observation angle alpha; derived, not stored.
    obj.bbox2d = {num(4), num(5), num(6), num(7)};
    if (obj.bbox2d.u_min > obj.bbox2d.u_max || obj.bbox2d.v_min > obj.bbox2d.v_max) {
      throw ValidationError("parse_labels: inverted 2D box on line " + std::to_string(line_no));
    }
    const double h = num(8), w = num(9), l = num(10);
    const double x = num(11), y = num(12), z = num(13);
    obj.box.w = w;
    obj.box.l = l;
    obj.box.h = h;
    // KITTI stores the bottom-face anchor; lift to the 3D center (camera y
    // points down). Raw values are kept even for DontCare placeholders so the
    // codec round-trips; consumers filter unusable boxes.
    obj.box.x = x;
    obj.box.y = y - 0.5 * h;
    obj.box.z = z;
    obj.box.theta = num(14);
    labels.push_back(std::move(obj));
  }
  return labels;
}

std::string serialize_labels(std::span<const LabeledObject> labels) {
  std::string out;
  for (const auto& obj : labels) {
    const double alpha =
        obj.box.theta - std::atan2(obj.box.x, obj.box.z);  // derived observation angle
    out += obj.category_name.empty() ? std::string(category_to_string(obj.category))
                                     : obj.category_name;
    const double fields[] = {obj.truncation,
                             static_cast<double>(obj.occlusion_level),
                             alpha,
                             obj.bbox2d.u_min,
                             obj.bbox2d.v_min,
                             obj.bbox2d.u_max,
                             obj.bbox2d.v_max,
                             obj.box.h,
                             obj.box.w,
                             obj.box.l,
                             obj.box.x,
                             obj.box.y + 0.5 * obj.box.h,
                             obj.box.z,
                             obj.box.theta};
    for (double f : fields) out += " " + format_g17(f);
    out += '\n';
  }
  return out;
}

std::vector<LabeledObject> labels_to_lidar(std::span<const LabeledObject> labels,
                                           const CalibrationSet& calib) {
  std::vector<LabeledObject> out(labels.begin(), labels.end());
  for (auto& obj : out) obj.box = camera_to_lidar(obj.box, calib);
  return out;
}

std::vector<LabeledObject> labels_to_camera(std::span<const LabeledObject> labels,
                                            const CalibrationSet& calib) {
  std::vector<LabeledObject> out(labels.begin(), labels.end());
  for (auto& obj : out) obj.box = lidar_to_camera(obj.box, calib);
  return out;
}

// -- images ----------------------------------------------------------------------------

namespace {

struct PnmHeader {
  int channels = 0;
  int width = 0;
  int height = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(std::span<const std::uint8_t> bytes, const char* context) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(std::string(context) + ": expected P5 or P6 magic");
  }
  PnmHeader header;
  header.channels = bytes[1] == '6' ? 3 : 1;
  std::size_t i = 2;
  int fields[3];
  for (int f = 0; f < 3; ++f) {
    // Skip whitespace and '#' comment lines between header fields.
    while (i < bytes.size()) {
      if (std::isspace(bytes[i])) {
        ++i;
      } else if (bytes[i] == '#') {
        while (i < bytes.size() && bytes[i] != '\n') ++i;
      } else {
        break;
      }
    }
    std::size_t start = i;
    while (i < bytes.size() && std::isdigit(bytes[i])) ++i;
    if (i == start) throw FormatError(std::string(context) + ": malformed header");
    int value = 0;
    std::from_chars(reinterpret_cast<const char*>(bytes.data() + start),
                    reinterpret_cast<const char*>(bytes.data() + i), value);
    fields[f] = value;
  }
  if (i >= bytes.size() || !std::isspace(bytes[i])) {
    throw FormatError(std::string(context) + ": malformed header");
  }
  ++i;  // single whitespace byte separates header from payload
  header.width = fields[0];
  header.height = fields[1];
  if (fields[2] != 255) {
    throw FormatError(std::string(context) + ": only maxval 255 is supported");
  }
  if (header.width <= 0 || header.height <= 0) {
    throw ValidationError(std::string(context) + ": non-positive dimensions");
  }
  header.data_offset = i;
  const std::size_t need =
      static_cast<std::size_t>(header.width) * header.height * header.channels;
  if (bytes.size() - i < need) {
    throw TruncatedInput(std::string(context) + ": payload shorter than declared size");
  }
  return header;
}

}  // namespace

Image load_image(std::span<const std::uint8_t> bytes) {
  const PnmHeader header = parse_pnm_header(bytes, "load_image");
  Image img;
  img.width = header.width;
  img.height = header.height;
  img.channels = header.channels;
  const std::size_t count =
      static_cast<std::size_t>(header.width) * header.height * header.channels;
  img.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    img.data[i] = bytes[header.data_offset + i] / 255.0;
  }
  return img;
}

std::vector<std::uint8_t> serialize_image(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValidationError("serialize_image: only 1- or 3-channel images");
  }
  if (image.data.size() !=
      static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ValidationError("serialize_image: data length mismatch");
  }
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "%s\n%d %d\n255\n",
                              image.channels == 3 ? "P6" : "P5", image.width, image.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.reserve(out.size() + image.data.size());
  for (double v : image.data) {
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return out;
}

// -- masks ------------------------------------------------------------------------------

RleMask RleMask::encode(std::span<const std::uint8_t> raster, int width, int height) {
  if (raster.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("RleMask: raster size mismatch");
  }
  RleMask mask;
  mask.width = width;
  mask.height = height;
  std::uint8_t current = 0;  // runs start with zeros
  std::uint32_t run = 0;
  for (std::uint8_t v : raster) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit == current) {
      ++run;
    } else {
      mask.runs.push_back(run);
      current = bit;
      run = 1;
    }
  }
  mask.runs.push_back(run);
  return mask;
}

std::vector<std::uint8_t> RleMask::decode() const {
  std::vector<std::uint8_t> raster;
  raster.reserve(static_cast<std::size_t>(width) * height);
  std::uint8_t current = 0;
  for (std::uint32_t run : runs) {
    raster.insert(raster.end(), run, current);
    current ^= 1;
  }
  if (raster.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("RleMask: runs do not cover the raster");
  }
  return raster;
}

std::size_t RleMask::count_ones() const {
  std::size_t total = 0;
  for (std::size_t i = 1; i < runs.size(); i += 2) total += runs[i];
  return total;
}

std::vector<MaskInstance> load_mask_set(std::span<const std::uint8_t> raster_bytes,
                                        std::string_view sidecar_text) {
  const PnmHeader header = parse_pnm_header(raster_bytes, "load_mask_set");
  if (header.channels != 1) throw FormatError("load_mask_set: raster must be PGM");
  const std::uint8_t* pixels = raster_bytes.data() + header.data_offset;
  const std::size_t count = static_cast<std::size_t>(header.width) * header.height;

  std::vector<MaskInstance> instances;
  std::set<int> seen_ids;
  std::size_t pos = 0;
  while (pos < sidecar_text.size()) {
    std::size_t eol = sidecar_text.find('\n', pos);
    if (eol == std::string_view::npos) eol = sidecar_text.size();
    const auto tokens = split_ws(sidecar_text.substr(pos, eol - pos));
    pos = eol + 1;
    if (tokens.empty()) continue;
    if (tokens.size() != 6) {
      throw ParseError("load_mask_set: sidecar line needs 6 fields `id score u v w h`");
    }
    MaskInstance inst;
    inst.instance_id = static_cast<int>(parse_double_token(tokens[0], "load_mask_set"));
    inst.score = parse_double_token(tokens[1], "load_mask_set");
    inst.bbox2d = {parse_double_token(tokens[2], "load_mask_set"),
                   parse_double_token(tokens[3], "load_mask_set"),
                   parse_double_token(tokens[4], "load_mask_set"),
                   parse_double_token(tokens[5], "load_mask_set")};
    if (inst.instance_id <= 0) throw ValidationError("load_mask_set: instance id must be positive");
    if (!(inst.score >= 0.0 && inst.score <= 1.0)) {
      throw ValidationError("load_mask_set: score outside [0, 1]");
    }
    if (!seen_ids.insert(inst.instance_id).second) {
      throw ValidationError("load_mask_set: duplicate instance id " +
                            std::to_string(inst.instance_id));
    }
    instances.push_back(std::move(inst));
  }

  std::vector<std::uint8_t> scratch(count);
  for (auto& inst : instances) {
    for (std::size_t i = 0; i < count; ++i) {
      scratch[i] = pixels[i] == inst.instance_id ? 1 : 0;
    }
    inst.mask = RleMask::encode(scratch, header.width, header.height);
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (pixels[i] != 0 && !seen_ids.count(pixels[i])) {
      throw ValidationError("load_mask_set: raster id " + std::to_string(pixels[i]) +
                            " absent from sidecar");
    }
  }
  return instances;
}

std::pair<std::vector<std::uint8_t>, std::string> serialize_mask_set(
    std::span<const MaskInstance> instances, int width, int height) {
  std::vector<std::uint8_t> raster(static_cast<std::size_t>(width) * height, 0);
  std::string sidecar;
  for (const auto& inst : instances) {
    if (inst.instance_id <= 0 || inst.instance_id > 255) {
      throw ValidationError("serialize_mask_set: raster ids must be in 1..255");
    }
    if (inst.mask.width != width || inst.mask.height != height) {
      throw ValidationError("serialize_mask_set: mask raster size mismatch");
    }
    const auto bits = inst.mask.decode();
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (!bits[i]) continue;
      if (raster[i] != 0) throw ValidationError("serialize_mask_set: overlapping instance masks");
      raster[i] = static_cast<std::uint8_t>(inst.instance_id);
    }
    sidecar += std::to_string(inst.instance_id) + " " + format_g17(inst.score) + " " +
               format_g17(inst.bbox2d.u) + " " + format_g17(inst.bbox2d.v) + " " +
               format_g17(inst.bbox2d.w) + " " + format_g17(inst.bbox2d.h) + "\n";
  }
  Image id_image;
  id_image.width = width;
  id_image.height = height;
  id_image.channels = 1;
  id_image.data.resize(raster.size());
  for (std::size_t i = 0; i < raster.size(); ++i) id_image.data[i] = raster[i] / 255.0;
  return {serialize_image(id_image), std::move(sidecar)};
}

// -- weight bundles ----------------------------------------------------------------------

namespace {
constexpr char kWeightMagic[] = {'V', 'P', 'F', 'W', '1', '\n'};
}  // namespace

WeightBundle load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kWeightMagic) ||
      std::memcmp(bytes.data(), kWeightMagic, sizeof(kWeightMagic)) != 0) {
    throw FormatError("load_weights: bad magic, expected VPFW1");
  }
  WeightBundle bundle;
  std::size_t off = sizeof(kWeightMagic);
  auto need = [&](std::size_t n) {
    if (bytes.size() - off < n) throw TruncatedInput("load_weights: unexpected end of stream");
  };
  while (off < bytes.size()) {
    need(4);
    const std::uint32_t name_len = read_u32_le(bytes.data() + off);
    off += 4;
    need(name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + off), name_len);
    off += name_len;
    need(4);
    const std::uint32_t rank = read_u32_le(bytes.data() + off);
    off += 4;
    if (rank == 0 || rank > 8) throw ValidationError("load_weights: unreasonable tensor rank");
    Tensor tensor;
    need(4 * static_cast<std::size_t>(rank));
    for (std::uint32_t d = 0; d < rank; ++d) {
      tensor.shape.push_back(read_u32_le(bytes.data() + off));
      off += 4;
    }
    const std::size_t count = tensor.size();
    need(4 * count);
    tensor.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      tensor.values[i] = read_f32_le(bytes.data() + off);
      off += 4;
    }
    validate(tensor);
    if (!bundle.tensors.emplace(std::move(name), std::move(tensor)).second) {
      throw ValidationError("load_weights: duplicate tensor name");
    }
  }
  return bundle;
}

std::vector<std::uint8_t> serialize_weights(const WeightBundle& bundle) {
  std::vector<std::uint8_t> out(kWeightMagic, kWeightMagic + sizeof(kWeightMagic));
  for (const auto& [name, tensor] : bundle.tensors) {
    validate(tensor);
    append_u32_le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append_u32_le(out, static_cast<std::uint32_t>(tensor.shape.size()));
    for (std::size_t d : tensor.shape) append_u32_le(out, static_cast<std::uint32_t>(d));
    for (double v : tensor.values) append_f32_le(out, static_cast<float>(v));
  }
  return out;
}

// -- file helpers ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("error writing file: " + path.string());
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace vpf
