#pragma once

#include <string>
#include <utility>

#include "aspnn/autodiff.hpp"
#include "aspnn/common.hpp"
#include "aspnn/net.hpp"

namespace aspnn {

// Final fusion layer: affine map of (v_spnn_x, v_spnn_y, v_conn_x, v_conn_y)
// to the output velocity. No activation; velocities must stay unbounded.
struct CombinerLayer {
  Matrix w;  // 2 x 4
  Vector b;  // 2
};

enum class Dominance { Spnn, Conn, Balanced };

inline const char* dominance_name(Dominance d) {
  switch (d) {
    case Dominance::Spnn: return "spnn";
    case Dominance::Conn: return "conn";
    case Dominance::Balanced: return "balanced";
  }
  return "?";
}

inline Dominance dominance_from_name(const std::string& s) {
  if (s == "spnn") return Dominance::Spnn;
  if (s == "conn") return Dominance::Conn;
  if (s == "balanced") return Dominance::Balanced;
  fail_config("unknown dominance '" + s + "' (expected spnn|conn|balanced)");
}

// Manual initialization weighting one submodel as the dominant input.
inline CombinerLayer init_combiner(Dominance dominance) {
  double ws = 0.5, wc = 0.5;
  if (dominance == Dominance::Spnn) { ws = 0.9; wc = 0.1; }
  if (dominance == Dominance::Conn) { ws = 0.1; wc = 0.9; }
  CombinerLayer layer;
  layer.w = Matrix::Zero(2, 4);
  layer.w(0, 0) = ws;
  layer.w(1, 1) = ws;
  layer.w(0, 2) = wc;
  layer.w(1, 3) = wc;
  layer.b = Vector::Zero(2);
  return layer;
}

inline Vec2 combine(const Vec2& v_spnn, const Vec2& v_conn,
                    const CombinerLayer& layer) {
  Vector in(4);
  in << v_spnn, v_conn;
  return layer.w * in + layer.b;
}

struct ContributionSplit {
  Vec2 spnn;
  Vec2 conn;
  Vec2 bias;
};

// Product of each input pair with its weights; shares plus bias reconstruct
// the combined output exactly.
inline ContributionSplit contribution_split(const CombinerLayer& layer,
                                            const Vec2& v_spnn,
                                            const Vec2& v_conn) {
  ContributionSplit s;
  s.spnn = layer.w.leftCols(2) * v_spnn;
  s.conn = layer.w.rightCols(2) * v_conn;
  s.bias = layer.b;
  return s;
}

struct CombinerParamIds {
  ParamId w;
  ParamId b;
};

inline CombinerParamIds register_combiner(ParamTable& table,
                                          CombinerLayer& layer) {
  return {table.add(layer.w, "comb.w"), table.add(layer.b, "comb.b")};
}

// Batched taped combine: rows of v_spnn / v_conn are per-frame velocities.
inline GradientTape::NodeId combine_op(GradientTape& tape,
                                       const CombinerLayer& layer,
                                       const CombinerParamIds& ids,
                                       GradientTape::NodeId v_spnn,
                                       GradientTape::NodeId v_conn) {
  const Matrix& vs = tape.value(v_spnn);
  const Matrix& vc = tape.value(v_conn);
  if (vs.cols() != 2 || vc.cols() != 2 || vs.rows() != vc.rows())
    fail_data("combine_op: bad shapes");
  Matrix in(vs.rows(), 4);
  in << vs, vc;
  Matrix out = in * layer.w.transpose();
  out.rowwise() += layer.b.transpose();
  GradientTape::NodeId node = tape.push(std::move(out), true);
  const CombinerLayer* lp = &layer;
  tape.record([&tape, lp, ids, v_spnn, v_conn, node]() {
    const Matrix& dy = tape.adjoint(node);
    Matrix in(tape.value(v_spnn).rows(), 4);
    in << tape.value(v_spnn), tape.value(v_conn);
    tape.grads.add(ids.w, dy.transpose() * in);
    tape.grads.add(ids.b, dy.colwise().sum().transpose());
    if (tape.requires_grad(v_spnn))
      tape.adjoint(v_spnn).noalias() += dy * lp->w.leftCols(2);
    if (tape.requires_grad(v_conn))
      tape.adjoint(v_conn).noalias() += dy * lp->w.rightCols(2);
  });
  return node;
}

}  // namespace aspnn
