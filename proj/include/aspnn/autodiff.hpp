#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aspnn/common.hpp"
#include "aspnn/net.hpp"

namespace aspnn {

using ParamId = std::uint32_t;

// Non-owning registry of trainable tensors. Weights and biases are viewed
// through Maps so a VectorXd bias and a MatrixXd weight share one slot type.
class ParamTable {
 public:
  ParamId add(double* data, Eigen::Index rows, Eigen::Index cols,
              std::string name) {
    slots_.push_back(Slot{data, rows, cols, std::move(name)});
    return static_cast<ParamId>(slots_.size() - 1);
  }
  ParamId add(Matrix& m, std::string name) {
    return add(m.data(), m.rows(), m.cols(), std::move(name));
  }
  ParamId add(Vector& v, std::string name) {
    return add(v.data(), v.size(), 1, std::move(name));
  }

  Eigen::Map<Matrix> value(ParamId id) const {
    const Slot& s = slots_.at(id);
    return Eigen::Map<Matrix>(s.data, s.rows, s.cols);
  }
  const std::string& name(ParamId id) const { return slots_.at(id).name; }
  std::size_t size() const { return slots_.size(); }

 private:
  struct Slot {
    double* data;
    Eigen::Index rows, cols;
    std::string name;
  };
  std::vector<Slot> slots_;
};

// Parameter ids of a registered DenseNet, one (weight, bias) pair per layer.
struct NetParamIds {
  std::vector<std::pair<ParamId, ParamId>> layers;
};

inline NetParamIds register_net(ParamTable& table, DenseNet& net,
                                const std::string& prefix) {
  NetParamIds ids;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& l = net.layers[i];
    ParamId w = table.add(l.w, prefix + ".w" + std::to_string(i));
    ParamId b = table.add(l.b, prefix + ".b" + std::to_string(i));
    ids.layers.emplace_back(w, b);
  }
  return ids;
}

// Gradient per ParamId; entries stay 0x0 until first touched.
class Gradients {
 public:
  explicit Gradients(std::size_t n) : g_(n) {}
  Matrix& at(ParamId id) { return g_.at(id); }
  const Matrix& at(ParamId id) const { return g_.at(id); }
  bool touched(ParamId id) const { return g_.at(id).size() > 0; }
  std::size_t size() const { return g_.size(); }

  template <typename Expr>
  void add(ParamId id, const Expr& e) {
    Matrix& g = g_.at(id);
    if (g.size() == 0)
      g = e;
    else
      g += e;
  }

 private:
  std::vector<Matrix> g_;
};

// Reverse-mode tape over matrix-valued nodes (rows = batch samples).
// Each recorded operation carries a closure that pulls the adjoint of its
// output into its inputs and into tape.grads. A tape is single-use.
class GradientTape {
 public:
  using NodeId = std::size_t;

  explicit GradientTape(const ParamTable& params)
      : params_(&params), grads(params.size()) {}

  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  NodeId constant(Matrix v) { return push(std::move(v), false); }

  const Matrix& value(NodeId n) const { return nodes_[n].value; }
  Matrix& adjoint(NodeId n) { return nodes_[n].adj; }

  // --- ops ---------------------------------------------------------------

  NodeId dense_layer(const DenseLayer& layer, ParamId wid, ParamId bid,
                     NodeId x) {
    const Matrix& xv = value(x);
    if (xv.cols() != layer.in_dim())
      fail_data("dense layer '" + params_->name(wid) + "': input width " +
                std::to_string(xv.cols()) + " != " +
                std::to_string(layer.in_dim()));
    Matrix y = xv * layer.w.transpose();
    y.rowwise() += layer.b.transpose();
    switch (layer.act) {
      case Activation::Tanh: y = y.array().tanh(); break;
      case Activation::Identity: break;
      case Activation::Softmax: softmax_rows(y); break;
    }
    NodeId out = push(std::move(y), true);
    const DenseLayer* lp = &layer;
    record([this, lp, wid, bid, x, out]() {
      const Matrix& yv = nodes_[out].value;
      const Matrix& dy = nodes_[out].adj;
      Matrix dpre;
      switch (lp->act) {
        case Activation::Tanh:
          dpre = dy.array() * (1.0 - yv.array().square());
          break;
        case Activation::Identity:
          dpre = dy;
          break;
        case Activation::Softmax: {
          dpre.resizeLike(dy);
          for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            const double dot = yv.row(r).dot(dy.row(r));
            dpre.row(r) = yv.row(r).array() * (dy.row(r).array() - dot);
          }
          break;
        }
      }
      grads.add(wid, dpre.transpose() * nodes_[x].value);
      grads.add(bid, dpre.colwise().sum().transpose());
      if (nodes_[x].requires_grad) nodes_[x].adj.noalias() += dpre * lp->w;
    });
    return out;
  }

  NodeId dense(const DenseNet& net, const NetParamIds& ids, NodeId x) {
    NodeId h = x;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
      h = dense_layer(net.layers[i], ids.layers[i].first, ids.layers[i].second,
                      h);
    return h;
  }

  // y(r,c) = x(r,c)*scale(c) + offset(c)
  NodeId affine_cols(NodeId x, Vector scale, Vector offset) {
    const Matrix& xv = value(x);
    Matrix y = xv.array().rowwise() * scale.transpose().array();
    y.rowwise() += offset.transpose();
    NodeId out = push(std::move(y), nodes_[x].requires_grad);
    record([this, x, out, s = std::move(scale)]() {
      if (nodes_[x].requires_grad)
        nodes_[x].adj.noalias() +=
            (nodes_[out].adj.array().rowwise() * s.transpose().array())
                .matrix();
    });
    return out;
  }

  NodeId add(NodeId a, NodeId b) {
    NodeId out = push(value(a) + value(b),
                      nodes_[a].requires_grad || nodes_[b].requires_grad);
    record([this, a, b, out]() {
      if (nodes_[a].requires_grad) nodes_[a].adj += nodes_[out].adj;
      if (nodes_[b].requires_grad) nodes_[b].adj += nodes_[out].adj;
    });
    return out;
  }

  // y = alpha*a + beta*b, shapes equal (used for loss assembly)
  NodeId axpby(double alpha, NodeId a, double beta, NodeId b) {
    NodeId out = push(alpha * value(a) + beta * value(b),
                      nodes_[a].requires_grad || nodes_[b].requires_grad);
    record([this, a, b, out, alpha, beta]() {
      if (nodes_[a].requires_grad) nodes_[a].adj += alpha * nodes_[out].adj;
      if (nodes_[b].requires_grad) nodes_[b].adj += beta * nodes_[out].adj;
    });
    return out;
  }

  NodeId slice_cols(NodeId x, Eigen::Index begin, Eigen::Index count) {
    NodeId out =
        push(value(x).middleCols(begin, count), nodes_[x].requires_grad);
    record([this, x, out, begin, count]() {
      if (nodes_[x].requires_grad)
        nodes_[x].adj.middleCols(begin, count) += nodes_[out].adj;
    });
    return out;
  }

  NodeId hcat(NodeId a, NodeId b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    Matrix y(av.rows(), av.cols() + bv.cols());
    y << av, bv;
    NodeId out =
        push(std::move(y), nodes_[a].requires_grad || nodes_[b].requires_grad);
    record([this, a, b, out]() {
      const Eigen::Index ac = nodes_[a].value.cols();
      const Eigen::Index bc = nodes_[b].value.cols();
      if (nodes_[a].requires_grad)
        nodes_[a].adj += nodes_[out].adj.leftCols(ac);
      if (nodes_[b].requires_grad)
        nodes_[b].adj += nodes_[out].adj.rightCols(bc);
    });
    return out;
  }

  // Scalar node: mean of (pred - target)^2 over all coefficients.
  NodeId mse(NodeId pred, Matrix target) {
    const Matrix& pv = value(pred);
    if (pv.rows() != target.rows() || pv.cols() != target.cols())
      fail_data("mse: shape mismatch");
    Matrix diff = pv - target;
    Matrix loss(1, 1);
    loss(0, 0) = diff.array().square().mean();
    NodeId out = push(std::move(loss), nodes_[pred].requires_grad);
    record([this, pred, out, d = std::move(diff)]() {
      if (!nodes_[pred].requires_grad) return;
      const double s = nodes_[out].adj(0, 0) * 2.0 / static_cast<double>(d.size());
      nodes_[pred].adj += s * d;
    });
    return out;
  }

  // Scalar node: mean over rows of -[y log p + (1-y) log(1-p)], where p is
  // column `col` of `probs`, eps-clipped. Gradient is zero where the clip binds.
  NodeId bce(NodeId probs, Eigen::Index col, Vector labels,
             double eps = 1e-12) {
    const Matrix& pv = value(probs);
    if (pv.rows() != labels.size()) fail_data("bce: label count mismatch");
    const Eigen::Index n = pv.rows();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double p = std::min(1.0 - eps, std::max(eps, pv(i, col)));
      acc += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    Matrix loss(1, 1);
    loss(0, 0) = acc / static_cast<double>(n);
    NodeId out = push(std::move(loss), nodes_[probs].requires_grad);
    record([this, probs, col, out, eps, y = std::move(labels)]() {
      if (!nodes_[probs].requires_grad) return;
      const Matrix& pv = nodes_[probs].value;
      const double s = nodes_[out].adj(0, 0) / static_cast<double>(pv.rows());
      for (Eigen::Index i = 0; i < pv.rows(); ++i) {
        const double p = pv(i, col);
        if (p <= eps || p >= 1.0 - eps) continue;
        nodes_[probs].adj(i, col) += s * (-y[i] / p + (1.0 - y[i]) / (1.0 - p));
      }
    });
    return out;
  }

  // --- backward ------------------------------------------------------------

  void backward(NodeId root) {
    if (value(root).size() != 1)
      fail_data("backward: root node is not scalar");
    Matrix seed(1, 1);
    seed(0, 0) = 1.0;
    backward_with_seed(root, seed);
  }

  // Seeds an arbitrary node with an output gradient and replays the tape.
  void backward_with_seed(NodeId node, const Matrix& seed) {
    if (consumed_) fail_data("backward: tape already consumed");
    consumed_ = true;
    for (auto& n : nodes_) n.adj = Matrix::Zero(n.value.rows(), n.value.cols());
    if (seed.rows() != nodes_[node].value.rows() ||
        seed.cols() != nodes_[node].value.cols())
      fail_data("backward: seed shape mismatch");
    nodes_[node].adj = seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  bool consumed() const { return consumed_; }

  Gradients grads;

  // Exposed so domain headers (generic step, etc.) can add their own ops.
  NodeId push(Matrix v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), Matrix(), requires_grad});
    return nodes_.size() - 1;
  }
  void record(std::function<void()> op) { ops_.push_back(std::move(op)); }
  bool requires_grad(NodeId n) const { return nodes_[n].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix adj;
    bool requires_grad;
  };

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> ops_;
  const ParamTable* params_;
  bool consumed_ = false;
};

// Forward pass with recording; mirrors DenseNet::forward.
inline GradientTape::NodeId net_forward(GradientTape& tape,
                                        const DenseNet& net,
                                        const NetParamIds& ids,
                                        GradientTape::NodeId input) {
  return tape.dense(net, ids, input);
}

}  // namespace aspnn
