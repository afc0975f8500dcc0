#pragma once

#include <span>
#include <vector>

#include "vpf/kitti_io.hpp"

namespace vpf {

enum class Activation { relu, none };

/// 2D feature map in channel-planar (CHW) layout:
/// data[(c * height + v) * width + u]. `stride_from_input` records the
/// accumulated down-sampling, so samplers can address the map with
/// input-image pixel coordinates.
struct FeatureMap2D {
  int width = 0;
  int height = 0;
  int channels = 0;
  int stride_from_input = 1;
  std::vector<double> data;

  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// `raw` image mode: the pixels themselves become a stride-1 feature map, so
/// the pipeline runs without any convolution weights.
FeatureMap2D image_to_feature_map(const Image& image);

/// 3x3 cross-correlation with zero padding 1. Kernel shape (C_out, C_in, 3, 3);
/// optional bias shape (C_out). Output spatial size is ceil(input / stride)
/// and stride_from_input multiplies by `stride`.
FeatureMap2D conv2d_forward(const FeatureMap2D& input, const Tensor& kernel, int stride,
                            Activation activation, const Tensor* bias = nullptr);

/// Stacked 2D backbone: conv1..conv4 from the bundle (names convN.weight,
/// optional convN.bias), stride 2 on the second layer, ReLU after every layer
/// except the last. Output is 2x down-sampled. Calling with the same bundle
/// for the left and right image is what shares the weights.
FeatureMap2D backbone_forward(const Image& image, const WeightBundle& weights);

struct SampleResult {
  std::vector<double> values;
  bool in_view = false;
};

/// 4-neighbor bilinear blend at input-pixel coordinates (u, v); coordinates
/// are divided by stride_from_input internally. Outside [0, W-1] x [0, H-1]
/// map cells the sample is the zero vector with in_view = false — out-of-view
/// is a flagged value, not an error.
SampleResult bilinear_sample(const FeatureMap2D& map, double u, double v);

/// Allocation-free variant; `out` must have map.channels entries. Returns the
/// in-view flag.
bool bilinear_sample_into(const FeatureMap2D& map, double u, double v, std::span<double> out);

}  // namespace vpf
