#pragma once

#include <utility>
#include <vector>

#include "aspnn/autodiff.hpp"
#include "aspnn/common.hpp"

namespace aspnn {

// State layout: z = (x, y, vx, vy).
struct GradientMatrices {
  Mat4 a;
  Mat4 b;
};

// Row-major unpack of a 32-vector: first 16 entries -> A, last 16 -> B.
inline GradientMatrices unpack_gradient_matrices(
    const Eigen::Ref<const Vector>& v) {
  if (v.size() != 32) fail_data("gradient matrices need 32 values");
  GradientMatrices g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      g.a(i, j) = v[4 * i + j];
      g.b(i, j) = v[16 + 4 * i + j];
    }
  return g;
}

// Fixed reversible/irreversible operator pair. L couples positions to
// velocities (skew-symmetric); M adds symmetric positive-definite dissipation
// with cross terms between the paired coordinates.
class GenericOperators {
 public:
  GenericOperators() : GenericOperators(default_l(), default_m()) {}

  GenericOperators(Mat4 l, Mat4 m) : l_(std::move(l)), m_(std::move(m)) {
    if ((l_ + l_.transpose()).cwiseAbs().maxCoeff() != 0.0)
      fail_config("L operator must be exactly skew-symmetric");
    if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() != 0.0)
      fail_config("M operator must be exactly symmetric");
    Eigen::SelfAdjointEigenSolver<Mat4> es(m_);
    if (es.eigenvalues().minCoeff() < -1e-12)
      fail_config("M operator must be positive semi-definite");
  }

  static Mat4 default_l() {
    Mat4 l;
    l << 0, 0, 1, 0,
         0, 0, 0, 1,
        -1, 0, 0, 0,
         0, -1, 0, 0;
    return l;
  }

  static Mat4 default_m() {
    Mat4 m;
    m << 1, -0.5, 0, 0,
        -0.5, 1, 0, 0,
         0, 0, 1, -0.5,
         0, 0, -0.5, 1;
    return m;
  }

  const Mat4& l() const { return l_; }
  const Mat4& m() const { return m_; }

 private:
  Mat4 l_;
  Mat4 m_;
};

// SPNN head: the state net maps a normalized state to the packed A|B pair.
inline GradientMatrices predict_gradient_matrices(const DenseNet& net,
                                                  const Vector& z_norm) {
  if (net.in_dim() != 4 || net.out_dim() != 32)
    fail_config("gradient-matrix net must map 4 -> 32");
  return unpack_gradient_matrices(net.forward(z_norm));
}

// Explicit step: z' = z + dt * (L A z + M B z).
inline Vec4 generic_step(const Vec4& z, const GenericOperators& ops,
                         const GradientMatrices& g, double dt = 1.0) {
  if (dt <= 0.0) fail_config("generic_step: dt must be positive");
  Vec4 out = z + dt * (ops.l() * (g.a * z) + ops.m() * (g.b * z));
  if (!out.allFinite()) fail_numeric("generic_step diverged");
  return out;
}

// Degeneracy residuals r_L = |L B z|^2, r_M = |M A z|^2.
inline std::pair<double, double> degeneracy_residual(
    const GenericOperators& ops, const GradientMatrices& g, const Vec4& z) {
  const double rl = (ops.l() * (g.b * z)).squaredNorm();
  const double rm = (ops.m() * (g.a * z)).squaredNorm();
  return {rl, rm};
}

// Discrete-gradient chain rule increments for one transition.
inline std::pair<double, double> thermo_increments(const Vec4& z,
                                                   const Vec4& z_next,
                                                   const GradientMatrices& g) {
  const Vec4 dz = z_next - z;
  return {(g.a * z).dot(dz), (g.b * z).dot(dz)};
}

struct ThermoTrace {
  std::vector<double> de, ds;      // per-frame increments
  std::vector<double> e_cum, s_cum;  // prefix sums from 0

  void append(double de_i, double ds_i) {
    de.push_back(de_i);
    ds.push_back(ds_i);
    e_cum.push_back((e_cum.empty() ? 0.0 : e_cum.back()) + de_i);
    s_cum.push_back((s_cum.empty() ? 0.0 : s_cum.back()) + ds_i);
  }
  std::size_t size() const { return de.size(); }
};

// --- taped ops -------------------------------------------------------------

// Batched GENERIC step. z: N x 4, ab: N x 32 (row-major A|B per row).
inline GradientTape::NodeId generic_step_op(GradientTape& tape,
                                            const GenericOperators& ops,
                                            GradientTape::NodeId z,
                                            GradientTape::NodeId ab,
                                            double dt = 1.0) {
  const Matrix& zv = tape.value(z);
  const Matrix& abv = tape.value(ab);
  if (zv.cols() != 4 || abv.cols() != 32 || zv.rows() != abv.rows())
    fail_data("generic_step_op: bad shapes");
  Matrix out(zv.rows(), 4);
  for (Eigen::Index r = 0; r < zv.rows(); ++r) {
    GradientMatrices g = unpack_gradient_matrices(abv.row(r).transpose());
    const Vec4 zi = zv.row(r).transpose();
    out.row(r) =
        (zi + dt * (ops.l() * (g.a * zi) + ops.m() * (g.b * zi))).transpose();
  }
  if (!out.allFinite()) fail_numeric("generic_step diverged");
  GradientTape::NodeId node =
      tape.push(std::move(out), tape.requires_grad(z) || tape.requires_grad(ab));
  tape.record([&tape, lm = ops.l(), mm = ops.m(), z, ab, node, dt]() {
    const Matrix& zv = tape.value(z);
    const Matrix& abv = tape.value(ab);
    const Matrix& dy = tape.adjoint(node);
    const bool need_z = tape.requires_grad(z);
    const bool need_ab = tape.requires_grad(ab);
    for (Eigen::Index r = 0; r < zv.rows(); ++r) {
      GradientMatrices g = unpack_gradient_matrices(abv.row(r).transpose());
      const Vec4 zi = zv.row(r).transpose();
      const Vec4 dyi = dy.row(r).transpose();
      if (need_z) {
        Vec4 dz = dyi + dt * (g.a.transpose() * (lm.transpose() * dyi) +
                              g.b.transpose() * (mm.transpose() * dyi));
        tape.adjoint(z).row(r) += dz.transpose();
      }
      if (need_ab) {
        const Vec4 la = dt * (lm.transpose() * dyi);
        const Vec4 mb = dt * (mm.transpose() * dyi);
        auto dab = tape.adjoint(ab).row(r);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) {
            dab[4 * i + j] += la[i] * zi[j];
            dab[16 + 4 * i + j] += mb[i] * zi[j];
          }
      }
    }
  });
  return node;
}

// Scalar node: mean over rows of r_L + r_M.
inline GradientTape::NodeId degeneracy_op(GradientTape& tape,
                                          const GenericOperators& ops,
                                          GradientTape::NodeId z,
                                          GradientTape::NodeId ab) {
  const Matrix& zv = tape.value(z);
  const Matrix& abv = tape.value(ab);
  if (zv.cols() != 4 || abv.cols() != 32 || zv.rows() != abv.rows())
    fail_data("degeneracy_op: bad shapes");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < zv.rows(); ++r) {
    GradientMatrices g = unpack_gradient_matrices(abv.row(r).transpose());
    auto [rl, rm] = degeneracy_residual(ops, g, zv.row(r).transpose());
    acc += rl + rm;
  }
  Matrix loss(1, 1);
  loss(0, 0) = acc / static_cast<double>(zv.rows());
  GradientTape::NodeId node =
      tape.push(std::move(loss), tape.requires_grad(z) || tape.requires_grad(ab));
  tape.record([&tape, lm = ops.l(), mm = ops.m(), z, ab, node]() {
    const Matrix& zv = tape.value(z);
    const Matrix& abv = tape.value(ab);
    const double s = tape.adjoint(node)(0, 0) / static_cast<double>(zv.rows());
    const bool need_z = tape.requires_grad(z);
    const bool need_ab = tape.requires_grad(ab);
    for (Eigen::Index r = 0; r < zv.rows(); ++r) {
      GradientMatrices g = unpack_gradient_matrices(abv.row(r).transpose());
      const Vec4 zi = zv.row(r).transpose();
      const Vec4 lbz = lm * (g.b * zi);
      const Vec4 maz = mm * (g.a * zi);
      if (need_ab) {
        const Vec4 db = 2.0 * s * (lm.transpose() * lbz);
        const Vec4 da = 2.0 * s * (mm.transpose() * maz);
        auto dab = tape.adjoint(ab).row(r);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) {
            dab[4 * i + j] += da[i] * zi[j];
            dab[16 + 4 * i + j] += db[i] * zi[j];
          }
      }
      if (need_z) {
        Vec4 dz = 2.0 * s *
                  (g.b.transpose() * (lm.transpose() * lbz) +
                   g.a.transpose() * (mm.transpose() * maz));
        tape.adjoint(z).row(r) += dz.transpose();
      }
    }
  });
  return node;
}

}  // namespace aspnn
