// Command-line front end: simulation, training, roll-out prediction,
// accuracy evaluation, and mitosis classification, driven by flags or a
// TOML-style config file (flags win).

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "aspnn/aspnn.hpp"

namespace fs = std::filesystem;
using namespace aspnn;

namespace {

struct SimulateArgs {
  SimConfig cfg;
  std::string out;
  std::string format = "csv";
};

struct FeaturesArgs {
  std::string data;
  std::string out;
};

struct TrainArgs {
  std::string train_case = "insilico";
  std::string data;
  std::string out_dir;
  int epochs = 5000;
  double lambda_d = 100.0;
  std::uint64_t seed = 0;
  std::string teacher_forcing = "on";
  std::string dominance;
  int min_frames = -1;  // -1 = case default
  bool with_mitosis = false;
  int mitosis_epochs = 20000;
  bool quiet = false;
};

struct RolloutArgs {
  std::string ckpt;
  std::string data;
  int cell = 0;
  std::string out_dir = ".";
  int frames = 0;  // 0 = min(available, 105)
  bool gt_positions = false;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string pred;
  std::string gt;
  int frames = 0;
  double eps = 1e-6;
};

struct MitosisTrainArgs {
  std::string data;
  std::string out_dir;
  int epochs = 20000;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  bool quiet = false;
};

struct MitosisEvalArgs {
  std::string ckpt;
  std::string data;
  double threshold = 0.6;
  int window = 3;
  std::string out_dir;
};

Dataset load_or_die(const std::string& path) {
  LoadResult res = load_trajectories(path);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(res.dataset);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail_data("cannot create output directory '" + dir + "'");
}

int run_simulate(const SimulateArgs& args) {
  SimResult res = simulate(args.cfg);
  write_trajectories(res.records, args.cfg.channel_width,
                     args.cfg.channel_height, args.out,
                     args.format == "jsonl" ? TrajectoryFormat::Jsonl
                                            : TrajectoryFormat::Csv);
  std::cout << "wrote " << res.records.size() << " records to " << args.out
            << "\n";
  return 0;
}

int run_features(const FeaturesArgs& args) {
  Dataset ds = load_or_die(args.data);
  FeatureExtractor fx(ds);
  write_feature_matrix_csv(ds, fx, args.out);
  std::cout << "wrote " << args.out << "\n";
  return 0;
}

TrainConfig schedule_for(const std::string& name) {
  if (name == "insilico") return insilico_schedule();
  if (name == "insilico-noise") return insilico_noise_schedule();
  if (name == "real") return real_schedule();
  fail_config("unknown case '" + name + "'");
}

int run_train(const TrainArgs& args) {
  TrainConfig cfg = schedule_for(args.train_case);
  cfg.epochs = args.epochs;
  cfg.lambda_d = args.lambda_d;
  cfg.seed = args.seed;
  cfg.teacher_forcing = args.teacher_forcing != "off";
  if (!args.dominance.empty())
    cfg.dominance = dominance_from_name(args.dominance);
  if (args.min_frames >= 0) cfg.min_frames = args.min_frames;

  Dataset ds = load_or_die(args.data);
  ensure_dir(args.out_dir);

  EpochCallback progress;
  if (!args.quiet)
    progress = [](const EpochStats& e) {
      if (e.epoch % 100 == 0)
        std::cerr << "epoch " << e.epoch << " l_data=" << fmt_double(e.l_data)
                  << " l_deg=" << fmt_double(e.l_deg) << "\n";
    };
  TrainResult res = train(cfg, ds, progress);

  if (args.with_mitosis) {
    FeatureExtractor fx(ds);
    auto samples = build_mitosis_samples(ds, fx);
    MitosisTrainConfig mcfg;
    mcfg.epochs = args.mitosis_epochs;
    mcfg.seed = args.seed;
    MitosisTrainResult mres = train_mitosis(mcfg, samples);
    res.bundle.mitosis = std::move(mres.net);
    res.bundle.mitosis_stats = mres.stats;
    std::ofstream mh((fs::path(args.out_dir) / "mitosis_history.csv").string());
    mh << "epoch,bce\n";
    for (std::size_t i = 0; i < mres.bce_history.size(); ++i)
      mh << i << ',' << fmt_double(mres.bce_history[i]) << '\n';
  }

  const std::string ckpt = (fs::path(args.out_dir) / "checkpoint.json").string();
  save_checkpoint(res.bundle, ckpt);
  write_history_csv(res.history,
                    (fs::path(args.out_dir) / "history.csv").string());
  std::cout << "checkpoint " << ckpt << " final l_data="
            << fmt_double(res.history.back().l_data)
            << " l_deg=" << fmt_double(res.history.back().l_deg) << "\n";
  return 0;
}

int choose_frames(int requested, int available) {
  if (requested > 0) {
    if (requested > available)
      fail_data("requested " + std::to_string(requested) +
                " frames but only " + std::to_string(available) +
                " are available");
    return requested;
  }
  return std::min(available, 105);
}

int run_rollout(const RolloutArgs& args) {
  ModelBundle bundle = load_checkpoint(args.ckpt);
  Dataset ds = load_or_die(args.data);
  if (!ds.has_cell(args.cell))
    fail_data("cell " + std::to_string(args.cell) + " not in dataset");
  FeatureExtractor fx(ds);
  const int n = choose_frames(args.frames, ds.n_frames(args.cell) - 1);
  RolloutResult r =
      rollout_cell(bundle, ds, fx, args.cell, n, !args.gt_positions);

  Matrix gt(n + 1, 2);
  for (int k = 0; k <= n; ++k) {
    const auto& rec = ds.record(args.cell, k);
    gt.row(k) << rec.x, rec.y;
  }
  ensure_dir(args.out_dir);
  const std::string stem = "rollout_cell" + std::to_string(args.cell);
  ExportPaths paths{
      (fs::path(args.out_dir) / (stem + "_trajectory.csv")).string(),
      (fs::path(args.out_dir) / (stem + "_thermo.csv")).string(),
      (fs::path(args.out_dir) / (stem + "_contribution.csv")).string()};
  export_traces(r, gt, ds.record(args.cell, 0).frame, paths);
  std::cout << "wrote " << paths.trajectory << " " << paths.thermo << " "
            << paths.contribution << "\n";
  return 0;
}

// Pools rolled-out velocities against observed ones over the filtered cells.
VelocityAccuracy dataset_accuracy(const ModelBundle& bundle, const Dataset& ds,
                                  int frames_cap, double eps) {
  FeatureExtractor fx(ds);
  FilteredCells filtered = filter_correct_trajectories(
      ds, bundle.teacher_forcing ? 0 : 0);  // evaluate every cell
  std::vector<Matrix> preds, gts;
  Eigen::Index total = 0;
  for (auto [cell, used] : filtered.correct) {
    const int available = ds.n_frames(cell) - 1;
    if (available < 1) continue;
    int n = std::min(available, frames_cap > 0 ? frames_cap : 105);
    RolloutResult r = rollout_cell(bundle, ds, fx, cell, n);
    Matrix gt(n, 2);
    for (int k = 1; k <= n; ++k) gt.row(k - 1) = ds.velocity(cell, k).transpose();
    preds.push_back(r.velocities);
    gts.push_back(gt);
    total += n;
  }
  if (total == 0) fail_data("no cells to evaluate");
  Matrix pred(total, 2), gt(total, 2);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pred.middleRows(at, preds[i].rows()) = preds[i];
    gt.middleRows(at, preds[i].rows()) = gts[i];
    at += preds[i].rows();
  }
  return velocity_accuracy(pred, gt, eps);
}

int run_eval(const EvalArgs& args) {
  VelocityAccuracy acc;
  if (!args.pred.empty()) {
    if (args.gt.empty()) fail_config("--pred requires --gt");
    Dataset pred = load_or_die(args.pred);
    Dataset gt = load_or_die(args.gt);
    std::vector<Vec2> pv, gv;
    for (int cell : gt.cells()) {
      if (!pred.has_cell(cell)) continue;
      const int n = std::min(gt.n_frames(cell), pred.n_frames(cell));
      for (int k = 1; k < n; ++k) {
        pv.push_back(pred.velocity(cell, k));
        gv.push_back(gt.velocity(cell, k));
      }
    }
    if (pv.empty()) fail_data("no overlapping trajectories to evaluate");
    Matrix pm(static_cast<Eigen::Index>(pv.size()), 2);
    Matrix gm(static_cast<Eigen::Index>(gv.size()), 2);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      pm.row(static_cast<Eigen::Index>(i)) = pv[i].transpose();
      gm.row(static_cast<Eigen::Index>(i)) = gv[i].transpose();
    }
    acc = velocity_accuracy(pm, gm, args.eps);
  } else {
    if (args.ckpt.empty() || args.data.empty())
      fail_config("eval needs --ckpt and --data (or --pred and --gt)");
    ModelBundle bundle = load_checkpoint(args.ckpt);
    Dataset ds = load_or_die(args.data);
    acc = dataset_accuracy(bundle, ds, args.frames, args.eps);
  }
  std::cout << "acc_x=" << fmt_double(acc.acc_x)
            << "% acc_y=" << fmt_double(acc.acc_y) << "%\n";
  return 0;
}

int run_mitosis_train(const MitosisTrainArgs& args) {
  Dataset ds = load_or_die(args.data);
  FeatureExtractor fx(ds);
  auto samples = build_mitosis_samples(ds, fx);
  MitosisTrainConfig cfg;
  cfg.epochs = args.epochs;
  cfg.sched.lr = args.lr;
  cfg.seed = args.seed;
  EpochCallback progress;
  if (!args.quiet)
    progress = [](const EpochStats& e) {
      if (e.epoch % 1000 == 0)
        std::cerr << "epoch " << e.epoch << " bce=" << fmt_double(e.l_data)
                  << "\n";
    };
  MitosisTrainResult res = train_mitosis(cfg, samples, progress);
  ensure_dir(args.out_dir);
  const std::string path =
      (fs::path(args.out_dir) / "mitosis_checkpoint.json").string();
  save_mitosis_checkpoint(res.net, res.stats, path);
  std::ofstream hist((fs::path(args.out_dir) / "mitosis_history.csv").string());
  hist << "epoch,bce\n";
  for (std::size_t i = 0; i < res.bce_history.size(); ++i)
    hist << i << ',' << fmt_double(res.bce_history[i]) << '\n';
  std::cout << "checkpoint " << path
            << " final bce=" << fmt_double(res.bce_history.back()) << "\n";
  return 0;
}

int run_mitosis_eval(const MitosisEvalArgs& args) {
  auto [net, stats] = load_mitosis_checkpoint(args.ckpt);
  Dataset ds = load_or_die(args.data);
  FeatureExtractor fx(ds);
  auto seqs = predict_mitosis_sequences(net, stats, ds, fx);
  MitosisEval ev = evaluate_mitosis(seqs, args.window, args.threshold);
  if (!args.out_dir.empty()) {
    ensure_dir(args.out_dir);
    write_mitosis_predictions_csv(
        seqs, (fs::path(args.out_dir) / "mitosis_predictions.csv").string());
    std::ofstream rep((fs::path(args.out_dir) / "mitosis_events.txt").string());
    write_event_report(ev, rep);
  }
  write_event_report(ev, std::cout);
  if (ev.precision_defined)
    std::cout << "precision=" << fmt_double(100.0 * ev.precision)
              << "% fp_rate=" << fmt_double(100.0 * ev.fp_rate) << "%\n";
  else
    std::cout << "precision=undefined fp_rate="
              << fmt_double(100.0 * ev.fp_rate) << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-preserving cell trajectory prediction toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style config file; flags override it");
  app.failure_message(CLI::FailureMessage::help);

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Generate an in-silico dataset");
  sim->add_option("--out", sim_args.out, "Output trajectory file")->required();
  sim->add_option("--cells", sim_args.cfg.n_cells, "Number of cells");
  sim->add_option("--frames", sim_args.cfg.frames, "Frames to simulate");
  sim->add_option("--radius", sim_args.cfg.radius, "Cell radius (px)");
  sim->add_option("--width", sim_args.cfg.channel_width, "Channel width (px)");
  sim->add_option("--height", sim_args.cfg.channel_height,
                  "Channel height (px)");
  sim->add_option("--dvx", sim_args.cfg.dvx, "Horizontal velocity increment");
  sim->add_option("--dvy", sim_args.cfg.dvy, "Vertical velocity increment");
  sim->add_option("--noise", sim_args.cfg.noise_fraction,
                  "Gaussian position noise bound as a fraction of |v|");
  sim->add_option("--seed", sim_args.cfg.seed, "RNG seed");
  sim->add_option("--init-speed", sim_args.cfg.init_speed,
                  "Random-direction initial speed (px/frame)");
  sim->add_option("--init-x-max", sim_args.cfg.init_x_max,
                  "Right edge of the placement box");
  sim->add_option("--init-y-max", sim_args.cfg.init_y_max,
                  "Top edge of the placement box");
  sim->add_option("--format", sim_args.format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));

  FeaturesArgs feat_args;
  auto* ft = app.add_subcommand("features",
                                "Export the environmental feature matrix");
  ft->add_option("--data", feat_args.data, "Trajectory file")->required();
  ft->add_option("--out", feat_args.out, "Output CSV")->required();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train the trajectory model");
  tr->add_option("--case", train_args.train_case,
                 "Training schedule: insilico, insilico-noise, real")
      ->check(CLI::IsMember({"insilico", "insilico-noise", "real"}));
  tr->add_option("--data", train_args.data, "Trajectory file")->required();
  tr->add_option("--out", train_args.out_dir, "Output directory")->required();
  tr->add_option("--epochs", train_args.epochs, "Training epochs");
  tr->add_option("--lambda-d", train_args.lambda_d, "Data-loss weight");
  tr->add_option("--seed", train_args.seed, "RNG seed");
  tr->add_option("--teacher-forcing", train_args.teacher_forcing,
                 "on: ground-truth inputs per frame; off: roll-out training")
      ->check(CLI::IsMember({"on", "off"}));
  tr->add_option("--dominance", train_args.dominance,
                 "Combiner initialization: spnn, conn, balanced")
      ->check(CLI::IsMember({"spnn", "conn", "balanced"}));
  tr->add_option("--min-frames", train_args.min_frames,
                 "Correct-trajectory threshold (overrides case default)");
  tr->add_flag("--with-mitosis", train_args.with_mitosis,
               "Also train the mitosis classifier on the same data");
  tr->add_option("--mitosis-epochs", train_args.mitosis_epochs,
                 "Epochs for the joint mitosis training");
  tr->add_flag("--quiet", train_args.quiet, "Suppress progress output");

  RolloutArgs roll_args;
  auto* roll = app.add_subcommand("rollout",
                                  "Roll out one cell and export the traces");
  roll->add_option("--ckpt", roll_args.ckpt, "Checkpoint file")->required();
  roll->add_option("--data", roll_args.data, "Trajectory file")->required();
  roll->add_option("--cell", roll_args.cell, "Cell id")->required();
  roll->add_option("--out", roll_args.out_dir, "Output directory");
  roll->add_option("--frames", roll_args.frames,
                   "Steps to roll (default: min(available, 105))");
  roll->add_flag("--gt-positions", roll_args.gt_positions,
                 "Keep observed positions in the environmental features");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Velocity accuracy of a model");
  ev->add_option("--ckpt", eval_args.ckpt, "Checkpoint file");
  ev->add_option("--data", eval_args.data, "Trajectory file");
  ev->add_option("--pred", eval_args.pred,
                 "Predicted trajectory file (with --gt)");
  ev->add_option("--gt", eval_args.gt, "Ground-truth trajectory file");
  ev->add_option("--frames", eval_args.frames, "Roll-out cap per cell");
  ev->add_option("--eps", eval_args.eps,
                 "Exclude frames with |v_gt| below this");

  MitosisTrainArgs mt_args;
  auto* mt = app.add_subcommand("mitosis-train", "Train the event classifier");
  mt->add_option("--data", mt_args.data, "Labeled trajectory file")->required();
  mt->add_option("--out", mt_args.out_dir, "Output directory")->required();
  mt->add_option("--epochs", mt_args.epochs, "Training epochs");
  mt->add_option("--lr", mt_args.lr, "Learning rate");
  mt->add_option("--seed", mt_args.seed, "RNG seed");
  mt->add_flag("--quiet", mt_args.quiet, "Suppress progress output");

  MitosisEvalArgs me_args;
  auto* me = app.add_subcommand("mitosis-eval",
                                "Windowed event precision and FP rate");
  me->add_option("--ckpt", me_args.ckpt, "Mitosis checkpoint")->required();
  me->add_option("--data", me_args.data, "Labeled trajectory file")->required();
  me->add_option("--threshold", me_args.threshold, "Detection threshold");
  me->add_option("--window", me_args.window, "Half-window in frames");
  me->add_option("--out", me_args.out_dir, "Optional export directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return run_simulate(sim_args);
    if (ft->parsed()) return run_features(feat_args);
    if (tr->parsed()) return run_train(train_args);
    if (roll->parsed()) return run_rollout(roll_args);
    if (ev->parsed()) return run_eval(eval_args);
    if (mt->parsed()) return run_mitosis_train(mt_args);
    if (me->parsed()) return run_mitosis_eval(me_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
