#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aspnn/autodiff.hpp"
#include "aspnn/combiner.hpp"
#include "aspnn/common.hpp"
#include "aspnn/data.hpp"
#include "aspnn/features.hpp"
#include "aspnn/generic.hpp"
#include "aspnn/model.hpp"
#include "aspnn/net.hpp"
#include "aspnn/optim.hpp"

namespace aspnn {

struct ComponentSchedule {
  double lr = 1e-3;
  int step_epochs = 0;
  double gamma = 1.0;
};

struct TrainConfig {
  ComponentSchedule spnn{1e-2, 500, 0.1};
  ComponentSchedule conn{1e-3, 500, 0.2};
  ComponentSchedule combiner{1e-2, 500, 0.1};
  int epochs = 5000;
  double lambda_d = 100.0;
  Dominance dominance = Dominance::Spnn;
  std::uint64_t seed = 0;
  bool teacher_forcing = true;
  double dt = 1.0;
  int min_frames = 0;  // 0 = train on every trajectory in full

  void validate() const {
    auto check = [](const ComponentSchedule& s, const char* who) {
      if (s.lr <= 0) fail_config(std::string(who) + ": learning rate must be > 0");
      if (s.gamma <= 0 || s.gamma > 1)
        fail_config(std::string(who) + ": gamma must lie in (0,1]");
      if (s.step_epochs < 0)
        fail_config(std::string(who) + ": scheduler epochs must be >= 0");
    };
    check(spnn, "spnn");
    check(conn, "conn");
    check(combiner, "combiner");
    if (epochs < 1) fail_config("epochs must be >= 1");
    if (lambda_d < 0) fail_config("lambda_d must be >= 0");
    if (dt <= 0) fail_config("dt must be > 0");
  }
};

// Per-case schedules.
inline TrainConfig insilico_schedule() {
  TrainConfig c;
  c.spnn = {1e-2, 500, 0.1};
  c.conn = {1e-3, 500, 0.2};
  c.combiner = {1e-2, 500, 0.1};
  c.dominance = Dominance::Spnn;
  c.min_frames = 0;
  return c;
}

inline TrainConfig insilico_noise_schedule() {
  TrainConfig c;
  c.spnn = {1e-2, 500, 0.1};
  c.conn = {1e-2, 500, 0.1};
  c.combiner = {1e-2, 500, 0.1};
  c.dominance = Dominance::Spnn;
  c.min_frames = 0;
  return c;
}

inline TrainConfig real_schedule() {
  TrainConfig c;
  c.spnn = {5e-5, 100, 0.9};
  c.conn = {5e-4, 100, 0.9};
  c.combiner = {5e-4, 100, 0.9};
  c.dominance = Dominance::Conn;
  c.min_frames = 105;
  return c;
}

// Mean squared error over state components, averaged over frames.
inline double data_loss(const Matrix& z_pred, const Matrix& z_gt) {
  if (z_pred.rows() != z_gt.rows() || z_pred.cols() != z_gt.cols())
    fail_data("data_loss: shape mismatch");
  return (z_pred - z_gt).array().square().mean();
}

inline double total_loss(double l_data, double l_deg, double lambda_d) {
  return lambda_d * l_data + l_deg;
}

struct EpochStats {
  int epoch = 0;
  double l_data = 0;
  double l_deg = 0;
  double lr_spnn = 0, lr_conn = 0, lr_comb = 0;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<EpochStats> history;
};

inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << "epoch,l_data,l_deg,lr_spnn,lr_conn,lr_comb\n";
  for (const auto& e : history)
    out << e.epoch << ',' << fmt_double(e.l_data) << ',' << fmt_double(e.l_deg)
        << ',' << fmt_double(e.lr_spnn) << ',' << fmt_double(e.lr_conn) << ','
        << fmt_double(e.lr_comb) << '\n';
  if (!out) fail_data("write failed for '" + path + "'");
}

namespace detail {

struct CellBatch {
  int cell = 0;
  Matrix z_in;      // (F-1) x 4 normalized states at frames 0..F-2
  Matrix z_target;  // (F-1) x 4 normalized states at frames 1..F-1
  Matrix phi;       // (F-1) x 23 normalized features at frames 0..F-2
  Matrix pos_phys;  // (F-1) x 2 physical positions at frames 0..F-2
};

}  // namespace detail

using EpochCallback = std::function<void(const EpochStats&)>;

// Joint epoch loop over the SPNN net, CoNN net and combiner, one optimizer
// per component, one accumulated step per trajectory. The loss per frame
// pairs the pipeline prediction for frame n+1 against ground truth (teacher
// forcing); with teacher_forcing off the predicted state is fed back and the
// whole roll-out is differentiated.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const FeatureExtractor fx(ds);
  const FilteredCells filtered = filter_correct_trajectories(ds, cfg.min_frames);
  if (filtered.correct.empty()) fail_data("no trainable trajectories");

  // Physical per-cell matrices, then normalization stats over all used rows.
  std::vector<CellMatrices> raw;
  Eigen::Index total_rows = 0;
  for (auto [cell, frames] : filtered.correct) {
    if (frames < 2) continue;
    raw.push_back(build_cell_matrices(ds, fx, cell, frames));
    total_rows += raw.back().states.rows();
  }
  if (raw.empty()) fail_data("no trajectory has at least two frames");

  Matrix all_states(total_rows, 4), all_features(total_rows, feat::kCount);
  Eigen::Index at = 0;
  for (const auto& m : raw) {
    all_states.middleRows(at, m.states.rows()) = m.states;
    all_features.middleRows(at, m.states.rows()) = m.features;
    at += m.states.rows();
  }

  ModelBundle bundle = make_bundle(cfg.seed, cfg.dominance);
  bundle.state_stats = NormStats::fit(all_states);
  bundle.feature_stats = NormStats::fit(all_features);
  bundle.teacher_forcing = cfg.teacher_forcing;
  bundle.dt = cfg.dt;
  bundle.lambda_d = cfg.lambda_d;

  std::vector<detail::CellBatch> batches;
  for (const auto& m : raw) {
    const Eigen::Index f = m.states.rows();
    detail::CellBatch b;
    b.cell = m.cell;
    Matrix zn = bundle.state_stats.normalize_rows(m.states);
    Matrix pn = bundle.feature_stats.normalize_rows(m.features);
    b.z_in = zn.topRows(f - 1);
    b.z_target = zn.bottomRows(f - 1);
    b.phi = pn.topRows(f - 1);
    b.pos_phys = m.states.topRows(f - 1).leftCols(2);
    batches.push_back(std::move(b));
  }

  ParamTable table;
  NetParamIds spnn_ids = register_net(table, bundle.spnn, "spnn");
  NetParamIds conn_ids = register_net(table, bundle.conn, "conn");
  CombinerParamIds comb_ids = register_combiner(table, bundle.combiner);

  auto opt_cfg = [](const ComponentSchedule& s) {
    OptimizerConfig oc;
    oc.lr = s.lr;
    oc.scheduler = {s.step_epochs, s.gamma};
    return oc;
  };
  Adam opt_spnn(table, param_ids(spnn_ids), opt_cfg(cfg.spnn));
  Adam opt_conn(table, param_ids(conn_ids), opt_cfg(cfg.conn));
  Adam opt_comb(table, {comb_ids.w, comb_ids.b}, opt_cfg(cfg.combiner));

  const GenericOperators ops;
  const Vector vel_denorm_s = bundle.state_stats.slice(2, 2).denorm_scale();
  const Vector vel_denorm_o = bundle.state_stats.slice(2, 2).denorm_offset();
  const Vector pos_norm_s = bundle.state_stats.slice(0, 2).norm_scale();
  const Vector pos_norm_o = bundle.state_stats.slice(0, 2).norm_offset();
  const Vector featpos_norm_s = bundle.feature_stats.slice(0, 2).norm_scale();
  const Vector featpos_norm_o = bundle.feature_stats.slice(0, 2).norm_offset();
  const Vector dt2 = Vector::Constant(2, cfg.dt);
  const Vector zero2 = Vector::Zero(2);

  TrainResult result;
  result.history.reserve(cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt_spnn.on_epoch(epoch);
    opt_conn.on_epoch(epoch);
    opt_comb.on_epoch(epoch);

    double sum_data = 0, sum_deg = 0;
    for (const auto& b : batches) {
      GradientTape tape(table);
      GradientTape::NodeId l_data_node, l_deg_node;

      if (cfg.teacher_forcing) {
        auto zn = tape.constant(b.z_in);
        auto ab = tape.dense(bundle.spnn, spnn_ids, zn);
        auto z_spnn = generic_step_op(tape, ops, zn, ab, cfg.dt);
        auto v_spnn = tape.slice_cols(z_spnn, 2, 2);
        auto phi = tape.constant(b.phi);
        auto v_conn = tape.dense(bundle.conn, conn_ids, phi);
        auto v_out = combine_op(tape, bundle.combiner, comb_ids, v_spnn, v_conn);
        auto v_phys = tape.affine_cols(v_out, vel_denorm_s, vel_denorm_o);
        auto step = tape.affine_cols(v_phys, dt2, zero2);
        auto pos_next = tape.add(tape.constant(b.pos_phys), step);
        auto pos_next_norm = tape.affine_cols(pos_next, pos_norm_s, pos_norm_o);
        auto z_pred = tape.hcat(pos_next_norm, v_out);
        l_data_node = tape.mse(z_pred, b.z_target);
        l_deg_node = degeneracy_op(tape, ops, zn, ab);
      } else {
        const Eigen::Index f = b.z_in.rows();
        auto z_cur = tape.constant(b.z_in.topRows(1));
        auto pos_cur = tape.constant(b.pos_phys.topRows(1));
        GradientTape::NodeId data_acc{}, deg_acc{};
        for (Eigen::Index n = 0; n < f; ++n) {
          auto ab = tape.dense(bundle.spnn, spnn_ids, z_cur);
          auto z_spnn = generic_step_op(tape, ops, z_cur, ab, cfg.dt);
          auto v_spnn = tape.slice_cols(z_spnn, 2, 2);
          auto pos_feat = tape.affine_cols(pos_cur, featpos_norm_s,
                                           featpos_norm_o);
          auto phi_env =
              tape.constant(b.phi.row(n).tail(feat::kCount - 2));
          auto phi = tape.hcat(pos_feat, phi_env);
          auto v_conn = tape.dense(bundle.conn, conn_ids, phi);
          auto v_out =
              combine_op(tape, bundle.combiner, comb_ids, v_spnn, v_conn);
          auto v_phys = tape.affine_cols(v_out, vel_denorm_s, vel_denorm_o);
          auto step = tape.affine_cols(v_phys, dt2, zero2);
          auto pos_next = tape.add(pos_cur, step);
          auto pos_next_norm =
              tape.affine_cols(pos_next, pos_norm_s, pos_norm_o);
          auto z_pred = tape.hcat(pos_next_norm, v_out);
          auto l_data_n = tape.mse(z_pred, b.z_target.row(n));
          auto l_deg_n = degeneracy_op(tape, ops, z_cur, ab);
          data_acc = n == 0 ? l_data_n : tape.add(data_acc, l_data_n);
          deg_acc = n == 0 ? l_deg_n : tape.add(deg_acc, l_deg_n);
          z_cur = z_pred;
          pos_cur = pos_next;
        }
        const Vector inv_f = Vector::Constant(1, 1.0 / static_cast<double>(f));
        const Vector zero1 = Vector::Zero(1);
        l_data_node = tape.affine_cols(data_acc, inv_f, zero1);
        l_deg_node = tape.affine_cols(deg_acc, inv_f, zero1);
      }

      const double l_data = tape.value(l_data_node)(0, 0);
      const double l_deg = tape.value(l_deg_node)(0, 0);
      if (!std::isfinite(l_data) || !std::isfinite(l_deg))
        fail_numeric("training diverged at epoch " + std::to_string(epoch) +
                     ", cell " + std::to_string(b.cell));
      auto total = tape.axpby(cfg.lambda_d, l_data_node, 1.0, l_deg_node);
      tape.backward(total);
      opt_spnn.step(tape.grads);
      opt_conn.step(tape.grads);
      opt_comb.step(tape.grads);
      sum_data += l_data;
      sum_deg += l_deg;
    }

    EpochStats es;
    es.epoch = epoch;
    es.l_data = sum_data / static_cast<double>(batches.size());
    es.l_deg = sum_deg / static_cast<double>(batches.size());
    es.lr_spnn = opt_spnn.lr();
    es.lr_conn = opt_conn.lr();
    es.lr_comb = opt_comb.lr();
    result.history.push_back(es);
    if (on_epoch) on_epoch(es);
  }

  result.bundle = std::move(bundle);
  return result;
}

}  // namespace aspnn
