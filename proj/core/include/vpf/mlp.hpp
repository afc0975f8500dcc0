#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vpf/kitti_io.hpp"

namespace vpf {

/// Small dense MLP: linear layers with ReLU between them. The final layer is
/// linear unless relu_after_last is set (feature trunks keep the activation,
/// prediction heads drop it).
struct Mlp {
  struct Layer {
    Eigen::MatrixXd weight;  ///< (out, in)
    Eigen::VectorXd bias;    ///< (out), zero when the bundle has no bias
  };
  std::vector<Layer> layers;
  bool relu_after_last = false;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
};

/// Converts a rank-2 tensor (out, in) to an Eigen matrix.
Eigen::MatrixXd tensor_to_matrix(const Tensor& tensor);

/// Collects layers `prefix.0.weight`, `prefix.0.bias`, `prefix.1.weight`, ...
/// until the next index is absent. Throws MissingWeight when layer 0 is
/// missing, ShapeError when consecutive dimensions do not chain.
Mlp mlp_from_bundle(const WeightBundle& bundle, const std::string& prefix,
                    bool relu_after_last = false);

}  // namespace vpf
