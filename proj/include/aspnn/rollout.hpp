#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "aspnn/combiner.hpp"
#include "aspnn/common.hpp"
#include "aspnn/data.hpp"
#include "aspnn/features.hpp"
#include "aspnn/generic.hpp"
#include "aspnn/model.hpp"

namespace aspnn {

struct ContributionRow {
  Vec2 spnn, conn, bias, out;  // normalized velocity units
};

struct RolloutResult {
  // states[0] is the initial state; states[n] the prediction after n steps.
  std::vector<CellState> states;
  Matrix velocities;  // n_frames x 2, physical, velocity applied at each step
  ThermoTrace thermo;
  std::vector<ContributionRow> contributions;
};

// Roll-out from a single observed state. Ground truth enters only through
// `env_features` (per-frame physical 23-vectors whose position slots are
// overwritten with the running prediction unless use_predicted_position is
// off).
inline RolloutResult rollout(const ModelBundle& bundle,
                             const CellState& initial,
                             const std::vector<Vector>& env_features,
                             int n_frames,
                             bool use_predicted_position = true) {
  if (n_frames < 0 || n_frames > static_cast<int>(env_features.size()))
    fail_data("rollout: need " + std::to_string(n_frames) +
              " feature frames, have " +
              std::to_string(env_features.size()));
  const GenericOperators ops;
  const NormStats featpos = bundle.feature_stats.slice(0, 2);
  const NormStats vel_stats = bundle.state_stats.slice(2, 2);

  RolloutResult res;
  res.states.push_back(initial);
  res.velocities.resize(n_frames, 2);

  Vec4 z_phys = initial.to_vec();
  for (int n = 0; n < n_frames; ++n) {
    const Vector z_norm = bundle.state_stats.normalize(Vector(z_phys));
    const Vector ab = bundle.spnn.forward(z_norm);
    const GradientMatrices g = unpack_gradient_matrices(ab);
    const Vec4 z_spnn_next = generic_step(z_norm, ops, g, bundle.dt);
    const Vec2 v_spnn = z_spnn_next.tail<2>();

    Vector phi = env_features[n];
    if (phi.size() != feat::kCount)
      fail_data("rollout: feature frame " + std::to_string(n) +
                " has wrong size");
    if (use_predicted_position) {
      phi[feat::kX] = z_phys[0];
      phi[feat::kY] = z_phys[1];
    }
    Vector phi_norm = bundle.feature_stats.normalize(phi);
    const Vec2 v_conn = bundle.conn.forward(phi_norm);
    const Vec2 v_out = combine(v_spnn, v_conn, bundle.combiner);

    const Vec2 v_phys = vel_stats.denormalize(Vector(v_out));
    Vec4 z_next;
    z_next.head<2>() = z_phys.head<2>() + bundle.dt * v_phys;
    z_next.tail<2>() = v_phys;
    if (!z_next.allFinite())
      fail_numeric("rollout diverged at frame " + std::to_string(n + 1));

    // Thermodynamic accounting follows the GENERIC submodel's own step.
    auto [de, ds] = thermo_increments(z_norm, z_spnn_next, g);
    res.thermo.append(de, ds);
    const ContributionSplit split =
        contribution_split(bundle.combiner, v_spnn, v_conn);
    res.contributions.push_back({split.spnn, split.conn, split.bias, v_out});

    res.velocities.row(n) = v_phys.transpose();
    z_phys = z_next;
    res.states.push_back(CellState::from_vec(z_phys));
  }
  return res;
}

struct VelocityAccuracy {
  double acc_x = 0, acc_y = 0;  // percent
  long used_x = 0, used_y = 0;
};

// Per-frame relative-error accuracy Acc = 100*(1 - |(v_pred - v_gt)/v_gt|),
// clamped below at zero; frames with |v_gt| < eps are excluded per axis.
inline VelocityAccuracy velocity_accuracy(const Matrix& pred, const Matrix& gt,
                                          double eps = 1e-6) {
  if (pred.rows() != gt.rows() || pred.cols() != 2 || gt.cols() != 2)
    fail_data("velocity_accuracy: shape mismatch");
  VelocityAccuracy out;
  double sx = 0, sy = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (std::abs(gt(i, 0)) >= eps) {
      sx += std::max(0.0, 100.0 * (1.0 - std::abs((pred(i, 0) - gt(i, 0)) /
                                                  gt(i, 0))));
      ++out.used_x;
    }
    if (std::abs(gt(i, 1)) >= eps) {
      sy += std::max(0.0, 100.0 * (1.0 - std::abs((pred(i, 1) - gt(i, 1)) /
                                                  gt(i, 1))));
      ++out.used_y;
    }
  }
  if (out.used_x == 0 && out.used_y == 0)
    fail_data("velocity_accuracy: every frame excluded (|v_gt| < eps)");
  out.acc_x = out.used_x ? sx / static_cast<double>(out.used_x) : 0.0;
  out.acc_y = out.used_y ? sy / static_cast<double>(out.used_y) : 0.0;
  return out;
}

// --- plot-ready exports ------------------------------------------------------

inline void export_trajectory_csv(const RolloutResult& r, const Matrix& gt_pos,
                                  int first_frame, const std::string& path) {
  if (gt_pos.rows() != static_cast<Eigen::Index>(r.states.size()) ||
      gt_pos.cols() != 2)
    fail_data("export: ground-truth position shape mismatch");
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << "frame,x_pred,y_pred,x_gt,y_gt\n";
  // predictions only; the frame-0 state is an input
  for (std::size_t n = 1; n < r.states.size(); ++n) {
    out << (first_frame + static_cast<int>(n)) << ','
        << fmt_double(r.states[n].x) << ',' << fmt_double(r.states[n].y) << ','
        << fmt_double(gt_pos(static_cast<Eigen::Index>(n), 0)) << ','
        << fmt_double(gt_pos(static_cast<Eigen::Index>(n), 1)) << '\n';
  }
  if (!out) fail_data("write failed for '" + path + "'");
}

inline void export_thermo_csv(const ThermoTrace& t, int first_frame,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << "frame,dE,dS,E_cum,S_cum\n";
  for (std::size_t n = 0; n < t.size(); ++n) {
    out << (first_frame + 1 + static_cast<int>(n)) << ',' << fmt_double(t.de[n])
        << ',' << fmt_double(t.ds[n]) << ',' << fmt_double(t.e_cum[n]) << ','
        << fmt_double(t.s_cum[n]) << '\n';
  }
  if (!out) fail_data("write failed for '" + path + "'");
}

inline void export_contribution_csv(const std::vector<ContributionRow>& rows,
                                    int first_frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << "frame,spnn_vx,spnn_vy,conn_vx,conn_vy,bias_x,bias_y,out_vx,out_vy\n";
  for (std::size_t n = 0; n < rows.size(); ++n) {
    const auto& c = rows[n];
    out << (first_frame + 1 + static_cast<int>(n)) << ','
        << fmt_double(c.spnn[0]) << ',' << fmt_double(c.spnn[1]) << ','
        << fmt_double(c.conn[0]) << ',' << fmt_double(c.conn[1]) << ','
        << fmt_double(c.bias[0]) << ',' << fmt_double(c.bias[1]) << ','
        << fmt_double(c.out[0]) << ',' << fmt_double(c.out[1]) << '\n';
  }
  if (!out) fail_data("write failed for '" + path + "'");
}

struct ExportPaths {
  std::string trajectory;
  std::string thermo;
  std::string contribution;
};

inline void export_traces(const RolloutResult& r, const Matrix& gt_pos,
                          int first_frame, const ExportPaths& paths) {
  export_trajectory_csv(r, gt_pos, first_frame, paths.trajectory);
  export_thermo_csv(r.thermo, first_frame, paths.thermo);
  export_contribution_csv(r.contributions, first_frame, paths.contribution);
}

// Convenience wrapper: roll a trained bundle along one observed trajectory.
inline RolloutResult rollout_cell(const ModelBundle& bundle, const Dataset& ds,
                                  const FeatureExtractor& fx, int cell,
                                  int n_frames,
                                  bool use_predicted_position = true) {
  const int available = ds.n_frames(cell) - 1;
  if (n_frames <= 0 || n_frames > available)
    fail_data("rollout: cell " + std::to_string(cell) + " supports at most " +
              std::to_string(available) + " steps");
  std::vector<Vector> env;
  env.reserve(n_frames);
  const int first_frame = ds.record(cell, 0).frame;
  for (int n = 0; n < n_frames; ++n)
    env.push_back(fx.features(first_frame + n, cell));
  return rollout(bundle, ds.state(cell, 0), env, n_frames,
                 use_predicted_position);
}

}  // namespace aspnn
