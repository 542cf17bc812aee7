#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "aspnn/rollout.hpp"
#include "aspnn/sim.hpp"
#include "aspnn/training.hpp"

using namespace aspnn;

namespace {

ModelBundle stats_only_bundle(std::uint64_t seed) {
  ModelBundle b = make_bundle(seed, Dominance::Spnn);
  Matrix srows(2, 4);
  srows << 0, 0, -2, -2, 300, 100, 2, 2;  // symmetric velocity ranges
  b.state_stats = NormStats::fit(srows);
  Matrix frows(2, feat::kCount);
  frows.row(0) = Vector::Constant(feat::kCount, -5.0).transpose();
  frows.row(1) = Vector::Constant(feat::kCount, 305.0).transpose();
  b.feature_stats = NormStats::fit(frows);
  return b;
}

void zero_net(DenseNet& net) {
  for (auto& l : net.layers) {
    l.w.setZero();
    l.b.setZero();
  }
}

std::vector<Vector> flat_features(int n) {
  std::vector<Vector> env;
  for (int i = 0; i < n; ++i) env.push_back(Vector::Constant(feat::kCount, 1.0));
  return env;
}

}  // namespace

TEST_CASE("zero-weight bundle holds still", "[rollout]") {
  ModelBundle b = stats_only_bundle(1);
  zero_net(b.spnn);
  zero_net(b.conn);
  b.combiner.w.setZero();
  b.combiner.b.setZero();
  CellState init{150, 50, 0.5, -0.25};
  RolloutResult r = rollout(b, init, flat_features(20), 20);
  REQUIRE(r.states.size() == 21);
  for (const auto& s : r.states) {
    CHECK(s.x == 150.0);
    CHECK(s.y == 50.0);
  }
  // zero gradient matrices also mean a flat thermodynamic trace
  CHECK(r.thermo.s_cum.back() == 0.0);
  CHECK(r.thermo.e_cum.back() == 0.0);
}

TEST_CASE("one step equals the hand-evaluated pipeline", "[rollout]") {
  ModelBundle b = stats_only_bundle(77);
  CellState init{120, 40, 0.8, -0.3};
  std::vector<Vector> env = flat_features(1);
  RolloutResult r = rollout(b, init, env, 1);

  const GenericOperators ops;
  Vector zn = b.state_stats.normalize(Vector(init.to_vec()));
  GradientMatrices g = predict_gradient_matrices(b.spnn, zn);
  Vec4 z_spnn = generic_step(zn, ops, g, 1.0);
  Vector phi = env[0];
  phi[feat::kX] = init.x;
  phi[feat::kY] = init.y;
  Vec2 v_conn = b.conn.forward(b.feature_stats.normalize(phi));
  Vec2 v_out = combine(z_spnn.tail<2>(), v_conn, b.combiner);
  Vec2 v_phys = b.state_stats.slice(2, 2).denormalize(Vector(v_out));

  CHECK(r.states[1].x == init.x + v_phys[0]);
  CHECK(r.states[1].y == init.y + v_phys[1]);
  CHECK(r.states[1].vx == v_phys[0]);
  CHECK(r.velocities(0, 0) == v_phys[0]);
}

TEST_CASE("position updates reconstruct from the velocities", "[rollout]") {
  ModelBundle b = stats_only_bundle(9);
  CellState init{100, 60, 0.1, 0.1};
  RolloutResult r = rollout(b, init, flat_features(30), 30);
  for (int n = 0; n < 30; ++n) {
    CHECK(r.states[n + 1].x == r.states[n].x + r.velocities(n, 0));
    CHECK(r.states[n + 1].y == r.states[n].y + r.velocities(n, 1));
  }
}

TEST_CASE("velocity accuracy formula and clamping", "[rollout]") {
  Matrix gt(3, 2), pred(3, 2);
  gt << 1, 1, 2, 2, 4, 4;
  pred = gt;
  VelocityAccuracy perfect = velocity_accuracy(pred, gt);
  CHECK(perfect.acc_x == 100.0);
  CHECK(perfect.acc_y == 100.0);

  Matrix one_gt(1, 2), one_pred(1, 2);
  one_gt << 1.0, 1.0;
  one_pred << 1.1, 0.5;
  VelocityAccuracy a = velocity_accuracy(one_pred, one_gt);
  CHECK(a.acc_x == Catch::Approx(90.0).margin(1e-9));
  CHECK(a.acc_y == Catch::Approx(50.0).margin(1e-9));

  // far-off predictions clamp at zero rather than going negative
  one_pred << 100.0, -100.0;
  VelocityAccuracy c = velocity_accuracy(one_pred, one_gt);
  CHECK(c.acc_x == 0.0);
  CHECK(c.acc_y == 0.0);

  // near-zero ground truth frames are excluded
  Matrix gt2(2, 2), pred2(2, 2);
  gt2 << 1e-9, 1e-9, 1.0, 1.0;
  pred2 << 5, 5, 1.0, 1.0;
  VelocityAccuracy e = velocity_accuracy(pred2, gt2);
  CHECK(e.used_x == 1);
  CHECK(e.acc_x == 100.0);

  Matrix zeros = Matrix::Zero(3, 2);
  CHECK_THROWS_AS(velocity_accuracy(zeros, zeros), Error);
}

TEST_CASE("exports round-trip and keep prefix sums", "[rollout]") {
  ModelBundle b = stats_only_bundle(5);
  CellState init{100, 50, 0.2, 0.2};
  const int n = 12;
  RolloutResult r = rollout(b, init, flat_features(n), n);
  Matrix gt = Matrix::Zero(n + 1, 2);
  for (int i = 0; i <= n; ++i) gt.row(i) << 100 + i, 50 + 0.5 * i;

  ExportPaths paths{"/tmp/aspnn_traj.csv", "/tmp/aspnn_thermo.csv",
                    "/tmp/aspnn_contrib.csv"};
  export_traces(r, gt, 0, paths);

  std::ifstream traj(paths.trajectory);
  std::string line;
  std::getline(traj, line);
  CHECK(line == "frame,x_pred,y_pred,x_gt,y_gt");
  int rows = 0;
  double last_xpred = 0;
  while (std::getline(traj, line)) {
    ++rows;
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');  // frame
    std::getline(ss, tok, ',');
    last_xpred = std::stod(tok);
  }
  CHECK(rows == n);
  CHECK(std::abs(last_xpred - r.states.back().x) < 1e-9);

  std::ifstream thermo(paths.thermo);
  std::getline(thermo, line);
  CHECK(line == "frame,dE,dS,E_cum,S_cum");
  double cum_de = 0;
  while (std::getline(thermo, line)) {
    std::istringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    std::getline(ss, tok, ',');
    cum_de += std::stod(tok);
    std::getline(ss, tok, ',');
    std::getline(ss, tok, ',');
    CHECK(std::abs(std::stod(tok) - cum_de) < 1e-9);
  }

  std::ifstream contrib(paths.contribution);
  std::getline(contrib, line);
  CHECK(line ==
        "frame,spnn_vx,spnn_vy,conn_vx,conn_vy,bias_x,bias_y,out_vx,out_vy");

  for (const auto& p : {paths.trajectory, paths.thermo, paths.contribution})
    std::remove(p.c_str());
}

TEST_CASE("empty roll-out writes headers only", "[rollout]") {
  ModelBundle b = stats_only_bundle(5);
  RolloutResult r = rollout(b, CellState{10, 10, 0, 0}, {}, 0);
  Matrix gt = Matrix::Zero(1, 2);
  ExportPaths paths{"/tmp/aspnn_traj0.csv", "/tmp/aspnn_thermo0.csv",
                    "/tmp/aspnn_contrib0.csv"};
  export_traces(r, gt, 0, paths);
  for (const auto& p : {paths.trajectory, paths.thermo, paths.contribution}) {
    std::ifstream in(p);
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++lines;
    CHECK(lines == 1);  // header only
    std::remove(p.c_str());
  }
}

TEST_CASE("rollout_cell caps at the observed trajectory", "[rollout]") {
  SimConfig cfg;
  cfg.n_cells = 2;
  cfg.frames = 10;
  cfg.seed = 12;
  Dataset ds = Dataset::from_records(simulate(cfg).records, cfg.channel_width,
                                     cfg.channel_height);
  FeatureExtractor fx(ds);
  ModelBundle b = stats_only_bundle(2);
  CHECK_THROWS_AS(rollout_cell(b, ds, fx, 0, 10), Error);
  RolloutResult r = rollout_cell(b, ds, fx, 0, 9);
  CHECK(r.states.size() == 10);
}
