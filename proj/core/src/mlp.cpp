#include "vpf/mlp.hpp"

#include "vpf/error.hpp"

namespace vpf {

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (layers.empty()) throw ShapeError("Mlp::forward: no layers");
  if (x.size() != layers.front().weight.cols()) {
    throw ShapeError("Mlp::forward: input dim " + std::to_string(x.size()) + " != expected " +
                     std::to_string(layers.front().weight.cols()));
  }
  Eigen::VectorXd value = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    value = layers[i].weight * value + layers[i].bias;
    if (i + 1 < layers.size() || relu_after_last) {
      value = value.cwiseMax(0.0);
    }
  }
  return value;
}

Eigen::MatrixXd tensor_to_matrix(const Tensor& tensor) {
  if (tensor.shape.size() != 2) throw ShapeError("tensor_to_matrix: expected rank-2 tensor");
  const auto rows = static_cast<Eigen::Index>(tensor.shape[0]);
  const auto cols = static_cast<Eigen::Index>(tensor.shape[1]);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = tensor.values[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return m;
}

Mlp mlp_from_bundle(const WeightBundle& bundle, const std::string& prefix, bool relu_after_last) {
  Mlp mlp;
  mlp.relu_after_last = relu_after_last;
  for (int i = 0;; ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    const Tensor* weight = bundle.find(base + ".weight");
    if (!weight) break;
    Mlp::Layer layer;
    layer.weight = tensor_to_matrix(*weight);
    if (const Tensor* bias = bundle.find(base + ".bias")) {
      if (bias->shape.size() != 1 ||
          static_cast<Eigen::Index>(bias->shape[0]) != layer.weight.rows()) {
        throw ShapeError("mlp_from_bundle: bias shape mismatch at " + base);
      }
      layer.bias = Eigen::Map<const Eigen::VectorXd>(bias->values.data(),
                                                     static_cast<Eigen::Index>(bias->values.size()));
    } else {
      layer.bias = Eigen::VectorXd::Zero(layer.weight.rows());
    }
    if (!mlp.layers.empty() && mlp.layers.back().weight.rows() != layer.weight.cols()) {
      throw ShapeError("mlp_from_bundle: layer dimensions do not chain at " + base);
    }
    mlp.layers.push_back(std::move(layer));
  }
  if (mlp.layers.empty()) {
    throw MissingWeight("mlp_from_bundle: no layers under prefix '" + prefix + "'");
  }
  return mlp;
}

}  // namespace vpf
