#include "vpf/image_features.hpp"

#include <algorithm>
#include <cmath>

#include "vpf/error.hpp"

namespace vpf {

FeatureMap2D image_to_feature_map(const Image& image) {
  FeatureMap2D map;
  map.width = image.width;
  map.height = image.height;
  map.channels = image.channels;
  map.stride_from_input = 1;
  map.data.resize(image.data.size());
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        map.at(c, y, x) = image.at(x, y, c);
      }
    }
  }
  return map;
}

FeatureMap2D conv2d_forward(const FeatureMap2D& input, const Tensor& kernel, int stride,
                            Activation activation, const Tensor* bias) {
  if (kernel.shape.size() != 4 || kernel.shape[2] != 3 || kernel.shape[3] != 3) {
    throw ShapeError("conv2d_forward: kernel must have shape (C_out, C_in, 3, 3)");
  }
  const int c_out = static_cast<int>(kernel.shape[0]);
  const int c_in = static_cast<int>(kernel.shape[1]);
  if (c_in != input.channels) {
    throw ShapeError("conv2d_forward: kernel C_in " + std::to_string(c_in) +
                     " != input channels " + std::to_string(input.channels));
  }
  if (stride < 1) throw DomainError("conv2d_forward: stride must be >= 1");
  if (bias && (bias->shape.size() != 1 || static_cast<int>(bias->shape[0]) != c_out)) {
    throw ShapeError("conv2d_forward: bias must have shape (C_out)");
  }

  FeatureMap2D out;
  out.width = (input.width - 1) / stride + 1;
  out.height = (input.height - 1) / stride + 1;
  out.channels = c_out;
  out.stride_from_input = input.stride_from_input * stride;
  out.data.assign(static_cast<std::size_t>(out.width) * out.height * c_out, 0.0);

  const double* w = kernel.values.data();
  for (int co = 0; co < c_out; ++co) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        double acc = bias ? bias->values[co] : 0.0;
        for (int ci = 0; ci < c_in; ++ci) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride + ky - 1;
            if (iy < 0 || iy >= input.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * stride + kx - 1;
              if (ix < 0 || ix >= input.width) continue;
              acc += w[((static_cast<std::size_t>(co) * c_in + ci) * 3 + ky) * 3 + kx] *
                     input.at(ci, iy, ix);
            }
          }
        }
        out.at(co, oy, ox) = activation == Activation::relu ? std::max(0.0, acc) : acc;
      }
    }
  }
  return out;
}

FeatureMap2D backbone_forward(const Image& image, const WeightBundle& weights) {
  FeatureMap2D map = image_to_feature_map(image);
  for (int layer = 1; layer <= 4; ++layer) {
    const std::string base = "conv" + std::to_string(layer);
    const Tensor& kernel = weights.at(base + ".weight");
    const Tensor* bias = weights.find(base + ".bias");
    const int stride = layer == 2 ? 2 : 1;
    const Activation act = layer < 4 ? Activation::relu : Activation::none;
    map = conv2d_forward(map, kernel, stride, act, bias);
  }
  return map;
}

bool bilinear_sample_into(const FeatureMap2D& map, double u, double v, std::span<double> out) {
  const double cu = u / map.stride_from_input;
  const double cv = v / map.stride_from_input;
  if (!(cu >= 0.0 && cu <= map.width - 1 && cv >= 0.0 && cv <= map.height - 1)) {
    std::fill(out.begin(), out.end(), 0.0);
    return false;
  }
  int x0 = static_cast<int>(std::floor(cu));
  int y0 = static_cast<int>(std::floor(cv));
  x0 = std::min(x0, map.width - 2 >= 0 ? map.width - 2 : 0);
  y0 = std::min(y0, map.height - 2 >= 0 ? map.height - 2 : 0);
  const int x1 = std::min(x0 + 1, map.width - 1);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const double fx = cu - x0;
  const double fy = cv - y0;
  for (int c = 0; c < map.channels; ++c) {
    const double top = (1.0 - fx) * map.at(c, y0, x0) + fx * map.at(c, y0, x1);
    const double bot = (1.0 - fx) * map.at(c, y1, x0) + fx * map.at(c, y1, x1);
    out[c] = (1.0 - fy) * top + fy * bot;
  }
  return true;
}

SampleResult bilinear_sample(const FeatureMap2D& map, double u, double v) {
  SampleResult result;
  result.values.resize(map.channels);
  result.in_view = bilinear_sample_into(map, u, v, result.values);
  return result;
}

}  // namespace vpf
