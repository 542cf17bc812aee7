#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "aspnn/autodiff.hpp"
#include "aspnn/common.hpp"
#include "aspnn/data.hpp"
#include "aspnn/features.hpp"
#include "aspnn/model.hpp"
#include "aspnn/net.hpp"
#include "aspnn/optim.hpp"
#include "aspnn/training.hpp"

namespace aspnn {

struct MitosisSample {
  int cell = 0;
  int frame = 0;
  Vector features;  // 27, physical units
  int label = 0;    // {0,1}
};

// Collects one sample per labeled frame of every labeled trajectory.
inline std::vector<MitosisSample> build_mitosis_samples(
    const Dataset& ds, const FeatureExtractor& fx) {
  std::vector<MitosisSample> out;
  for (int cell : ds.cells()) {
    for (int k = 0; k < ds.n_frames(cell); ++k) {
      const auto& r = ds.record(cell, k);
      if (r.mitosis < 0) continue;
      MitosisSample s;
      s.cell = cell;
      s.frame = r.frame;
      s.features = fx.mitosis_features(r.frame, cell);
      s.label = r.mitosis > 0 ? 1 : 0;
      out.push_back(std::move(s));
    }
  }
  return out;
}

inline double bce_loss(double p_pos, int label, double eps = 1e-12) {
  const double p = std::min(1.0 - eps, std::max(eps, p_pos));
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

struct MitosisTrainConfig {
  ComponentSchedule sched{2e-4, 40000, 0.5};
  int epochs = 20000;
  std::uint64_t seed = 0;

  void validate() const {
    if (sched.lr <= 0) fail_config("mitosis: learning rate must be > 0");
    if (sched.gamma <= 0 || sched.gamma > 1)
      fail_config("mitosis: gamma must lie in (0,1]");
    if (epochs < 1) fail_config("mitosis: epochs must be >= 1");
  }
};

struct MitosisTrainResult {
  DenseNet net;
  NormStats stats;
  std::vector<double> bce_history;
};

// Full-batch BCE minimization over every frame of every labeled trajectory.
inline MitosisTrainResult train_mitosis(const MitosisTrainConfig& cfg,
                                        const std::vector<MitosisSample>& samples,
                                        const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (samples.empty()) fail_data("mitosis training: no labeled samples");

  Matrix x(static_cast<Eigen::Index>(samples.size()), feat::kMitosisCount);
  Vector labels(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != feat::kMitosisCount)
      fail_data("mitosis sample has wrong feature count");
    x.row(static_cast<Eigen::Index>(i)) = samples[i].features.transpose();
    labels[static_cast<Eigen::Index>(i)] = samples[i].label;
  }

  MitosisTrainResult res;
  res.stats = NormStats::fit(x);
  res.net = make_dense_net(mitosis_dims(), Activation::Tanh,
                           Activation::Softmax, cfg.seed);
  const Matrix xn = res.stats.normalize_rows(x);

  ParamTable table;
  NetParamIds ids = register_net(table, res.net, "mitosis");
  OptimizerConfig oc;
  oc.lr = cfg.sched.lr;
  oc.scheduler = {cfg.sched.step_epochs, cfg.sched.gamma};
  Adam opt(table, param_ids(ids), oc);

  res.bce_history.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.on_epoch(epoch);
    GradientTape tape(table);
    auto in = tape.constant(xn);
    auto probs = tape.dense(res.net, ids, in);
    auto loss = tape.bce(probs, 1, labels);
    const double l = tape.value(loss)(0, 0);
    if (!std::isfinite(l))
      fail_numeric("mitosis training diverged at epoch " +
                   std::to_string(epoch));
    tape.backward(loss);
    opt.step(tape.grads);
    res.bce_history.push_back(l);
    if (on_epoch) {
      EpochStats es;
      es.epoch = epoch;
      es.l_data = l;
      es.lr_spnn = opt.lr();
      on_epoch(es);
    }
  }
  return res;
}

// (p_neg, p_pos) for one sample in physical units.
inline Vec2 mitosis_forward(const DenseNet& net, const NormStats& stats,
                            const Vector& features) {
  return net.forward(stats.normalize(features));
}

// --- windowed event evaluation ----------------------------------------------

struct MitosisSequence {
  int cell = 0;
  int first_frame = 0;
  std::vector<double> p_pos;
  std::vector<int> labels;
};

struct MitosisEventReport {
  int cell = 0;
  int frame = 0;  // labeled event frame
  bool detected = false;
  double peak_p = 0;
  std::vector<int> hit_offsets;  // offsets within the window where p > thr
};

struct MitosisEval {
  int total_events = 0;
  int detected_events = 0;
  bool precision_defined = false;
  double precision = 0;
  long fp_frames = 0;
  long negative_frames = 0;
  double fp_rate = 0;
  std::vector<MitosisEventReport> events;
};

// An event at frame f counts as detected when max p_pos over [f-w, f+w]
// exceeds the threshold; false positives are above-threshold frames outside
// every event window, normalized over all label-0 frames.
inline MitosisEval evaluate_mitosis(const std::vector<MitosisSequence>& seqs,
                                    int window = 3, double threshold = 0.6) {
  if (window < 0) fail_config("evaluate_mitosis: window must be >= 0");
  MitosisEval ev;
  for (const auto& s : seqs) {
    if (s.p_pos.size() != s.labels.size())
      fail_data("evaluate_mitosis: sequence length mismatch for cell " +
                std::to_string(s.cell));
    const int n = static_cast<int>(s.p_pos.size());
    std::vector<bool> in_window(n, false);
    for (int i = 0; i < n; ++i) {
      if (s.labels[i] != 1) continue;
      for (int k = std::max(0, i - window); k <= std::min(n - 1, i + window);
           ++k)
        in_window[k] = true;
    }
    for (int i = 0; i < n; ++i) {
      if (s.labels[i] == 1) {
        MitosisEventReport rep;
        rep.cell = s.cell;
        rep.frame = s.first_frame + i;
        for (int k = std::max(0, i - window);
             k <= std::min(n - 1, i + window); ++k) {
          rep.peak_p = std::max(rep.peak_p, s.p_pos[k]);
          if (s.p_pos[k] > threshold) rep.hit_offsets.push_back(k - i);
        }
        rep.detected = !rep.hit_offsets.empty();
        ev.total_events += 1;
        ev.detected_events += rep.detected ? 1 : 0;
        ev.events.push_back(std::move(rep));
      } else {
        ev.negative_frames += 1;
      }
      if (!in_window[i] && s.p_pos[i] > threshold) ev.fp_frames += 1;
    }
  }
  if (ev.total_events > 0) {
    ev.precision_defined = true;
    ev.precision = static_cast<double>(ev.detected_events) /
                   static_cast<double>(ev.total_events);
  }
  ev.fp_rate = ev.negative_frames > 0
                   ? static_cast<double>(ev.fp_frames) /
                         static_cast<double>(ev.negative_frames)
                   : 0.0;
  return ev;
}

inline void write_mitosis_predictions_csv(
    const std::vector<MitosisSequence>& seqs, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << "frame,cell_id,p_pos,label\n";
  for (const auto& s : seqs)
    for (std::size_t i = 0; i < s.p_pos.size(); ++i)
      out << (s.first_frame + static_cast<int>(i)) << ',' << s.cell << ','
          << fmt_double(s.p_pos[i]) << ',' << s.labels[i] << '\n';
  if (!out) fail_data("write failed for '" + path + "'");
}

inline void write_event_report(const MitosisEval& ev, std::ostream& out) {
  if (!ev.precision_defined)
    out << "no labeled events; precision undefined\n";
  else
    out << "events: " << ev.total_events << " detected: " << ev.detected_events
        << " precision: " << fmt_double(ev.precision) << "\n";
  out << "false positives: " << ev.fp_frames << " of " << ev.negative_frames
      << " negative frames (rate " << fmt_double(ev.fp_rate) << ")\n";
  for (const auto& e : ev.events) {
    out << "event cell=" << e.cell << " frame=" << e.frame << " "
        << (e.detected ? "DETECTED" : "missed") << " peak_p="
        << fmt_double(e.peak_p);
    if (!e.hit_offsets.empty()) {
      out << " offsets=";
      for (std::size_t i = 0; i < e.hit_offsets.size(); ++i)
        out << (i ? "," : "") << e.hit_offsets[i];
    }
    out << "\n";
  }
}

// Standalone classifier checkpoint; also readable from a full model bundle
// that carries a mitosis net.
inline void save_mitosis_checkpoint(const DenseNet& net, const NormStats& stats,
                                    const std::string& path) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = "mitosis";
  j["mitosis"] = detail::net_to_json(net);
  j["mitosis_stats"] = detail::stats_to_json(stats);
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) fail_data("write failed for '" + path + "'");
}

inline std::pair<DenseNet, NormStats> load_mitosis_checkpoint(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_data("checkpoint '" + path + "': " + e.what());
  }
  if (j.contains("spnn")) {
    ModelBundle b = load_checkpoint(path);
    if (!b.mitosis)
      fail_data("checkpoint '" + path + "' carries no mitosis net");
    return {std::move(*b.mitosis), std::move(*b.mitosis_stats)};
  }
  try {
    if (j.at("version").get<int>() != kCheckpointVersion)
      fail_data("checkpoint '" + path + "': unsupported version");
    return {detail::net_from_json(j.at("mitosis")),
            detail::stats_from_json(j.at("mitosis_stats"))};
  } catch (const nlohmann::json::exception& e) {
    fail_data("checkpoint '" + path + "': " + e.what());
  }
}

// Per-cell probability sequences from a trained classifier.
inline std::vector<MitosisSequence> predict_mitosis_sequences(
    const DenseNet& net, const NormStats& stats, const Dataset& ds,
    const FeatureExtractor& fx) {
  std::vector<MitosisSequence> out;
  for (int cell : ds.cells()) {
    const int f = ds.n_frames(cell);
    MitosisSequence seq;
    seq.cell = cell;
    seq.first_frame = ds.record(cell, 0).frame;
    seq.p_pos.reserve(f);
    seq.labels.reserve(f);
    bool labeled = false;
    Matrix x(f, feat::kMitosisCount);
    for (int k = 0; k < f; ++k) {
      const auto& r = ds.record(cell, k);
      x.row(k) = fx.mitosis_features(r.frame, cell).transpose();
      seq.labels.push_back(r.mitosis > 0 ? 1 : 0);
      labeled |= r.mitosis >= 0;
    }
    const Matrix probs = net.forward(stats.normalize_rows(x));
    for (int k = 0; k < f; ++k) seq.p_pos.push_back(probs(k, 1));
    (void)labeled;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace aspnn
