#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aspnn/common.hpp"

namespace aspnn {

enum class Activation { Tanh, Identity, Softmax };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  if (s == "softmax") return Activation::Softmax;
  fail_data("unknown activation tag '" + s + "'");
}

// Numerically stable row-wise softmax (max subtraction).
inline void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

inline Vector softmax(const Vector& logits) {
  Matrix m = logits.transpose();
  softmax_rows(m);
  return m.transpose();
}

struct DenseLayer {
  Matrix w;  // out x in
  Vector b;  // out
  Activation act = Activation::Tanh;

  Eigen::Index in_dim() const { return w.cols(); }
  Eigen::Index out_dim() const { return w.rows(); }
};

// Plain fully connected stack. Rows of a batch are independent samples.
struct DenseNet {
  std::vector<DenseLayer> layers;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  void validate() const {
    if (layers.empty()) fail_config("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.b.size() != l.w.rows())
        fail_config("layer " + std::to_string(i) + ": bias/weight shape mismatch");
      if (i > 0 && layers[i - 1].out_dim() != l.in_dim())
        fail_config("layer " + std::to_string(i) + ": dimension chain broken (" +
                    std::to_string(layers[i - 1].out_dim()) + " -> " +
                    std::to_string(l.in_dim()) + ")");
      if (l.act == Activation::Softmax && i + 1 != layers.size())
        fail_config("softmax allowed only on the final layer");
      if (!l.w.allFinite() || !l.b.allFinite())
        fail_config("layer " + std::to_string(i) + ": non-finite parameters");
    }
  }

  // Batch forward, rows = samples.
  Matrix forward(const Matrix& x) const {
    if (x.cols() != in_dim())
      fail_data("net_forward: input width " + std::to_string(x.cols()) +
                " does not match layer 0 in-dim " + std::to_string(in_dim()));
    Matrix h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (h.cols() != l.in_dim())
        fail_data("net_forward: width " + std::to_string(h.cols()) +
                  " does not match layer " + std::to_string(i) + " in-dim " +
                  std::to_string(l.in_dim()));
      Matrix y = h * l.w.transpose();
      y.rowwise() += l.b.transpose();
      switch (l.act) {
        case Activation::Tanh: y = y.array().tanh(); break;
        case Activation::Identity: break;
        case Activation::Softmax: softmax_rows(y); break;
      }
      h = std::move(y);
    }
    return h;
  }

  Vector forward(const Vector& x) const {
    Matrix out = forward(Matrix(x.transpose()));
    return out.transpose();
  }
};

// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)), seedable.
inline DenseLayer make_dense_layer(Eigen::Index in, Eigen::Index out,
                                   Activation act, Rng& rng) {
  DenseLayer l;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  l.w = Matrix::NullaryExpr(out, in, [&]() { return u(rng); });
  l.b = Vector::Zero(out);
  l.act = act;
  return l;
}

// dims = {in, hidden..., out}; hidden activation applied to all but the last.
inline DenseNet make_dense_net(const std::vector<int>& dims, Activation hidden,
                               Activation output, std::uint64_t seed) {
  if (dims.size() < 2) fail_config("network needs at least one layer");
  Rng rng(seed);
  DenseNet net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = (i + 2 == dims.size());
    net.layers.push_back(
        make_dense_layer(dims[i], dims[i + 1], last ? output : hidden, rng));
  }
  net.validate();
  return net;
}

// Fixed architectures used throughout.
inline std::vector<int> spnn_dims() { return {4, 16, 64, 128, 64, 16, 32}; }
inline std::vector<int> conn_dims() { return {23, 181, 297, 149, 295, 2}; }
inline std::vector<int> mitosis_dims() { return {27, 48, 96, 64, 32, 2}; }

}  // namespace aspnn
