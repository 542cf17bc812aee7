#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aspnn/sim.hpp"
#include "aspnn/training.hpp"

using namespace aspnn;

namespace {

Dataset small_sim(std::uint64_t seed = 3) {
  SimConfig cfg;
  cfg.n_cells = 5;
  cfg.frames = 25;
  cfg.seed = seed;
  SimResult res = simulate(cfg);
  return Dataset::from_records(res.records, cfg.channel_width,
                               cfg.channel_height);
}

TrainConfig quick_config(int epochs) {
  TrainConfig cfg = insilico_schedule();
  cfg.epochs = epochs;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("data loss is a component mean and symmetric", "[training]") {
  Matrix a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 0;
  CHECK(data_loss(a, a) == 0.0);
  CHECK(data_loss(a, b) == Catch::Approx(0.5).margin(1e-15));
  CHECK(data_loss(a, b) == data_loss(b, a));
}

TEST_CASE("total loss combines the two terms", "[training]") {
  CHECK(total_loss(123.0, 0.75, 0.0) == 0.75);
  CHECK(total_loss(0.01, 0.0, 100.0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(total_loss(0.02, 0.1, 10.0) > total_loss(0.01, 0.1, 10.0));
  CHECK(total_loss(0.02, 0.2, 10.0) > total_loss(0.02, 0.1, 10.0));
}

TEST_CASE("training reduces the data loss on a deterministic case",
          "[training]") {
  Dataset ds = small_sim();
  TrainConfig cfg = quick_config(150);
  TrainResult res = train(cfg, ds);
  REQUIRE(res.history.size() == 150);
  for (const auto& e : res.history) {
    CHECK(std::isfinite(e.l_data));
    CHECK(std::isfinite(e.l_deg));
    CHECK(e.l_deg >= 0.0);
  }
  CHECK(res.history.back().l_data < res.history.front().l_data / 10.0);
}

TEST_CASE("degeneracy-only training still moves parameters", "[training]") {
  Dataset ds = small_sim();
  TrainConfig cfg = quick_config(60);
  cfg.lambda_d = 0.0;
  ModelBundle before = make_bundle(cfg.seed, cfg.dominance);
  TrainResult res = train(cfg, ds);
  double diff = 0.0;
  for (std::size_t i = 0; i < before.spnn.layers.size(); ++i)
    diff = std::max(diff, (res.bundle.spnn.layers[i].w - before.spnn.layers[i].w)
                              .cwiseAbs()
                              .maxCoeff());
  CHECK(diff > 0.0);
  CHECK(res.history.back().l_deg < res.history.front().l_deg);
}

TEST_CASE("identical seeds give identical histories", "[training]") {
  Dataset ds = small_sim();
  TrainConfig cfg = quick_config(40);
  TrainResult a = train(cfg, ds);
  TrainResult b = train(cfg, ds);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].l_data == b.history[i].l_data);
    CHECK(a.history[i].l_deg == b.history[i].l_deg);
  }
}

TEST_CASE("scheduler application points land on the table", "[training]") {
  Dataset ds = small_sim();
  TrainConfig cfg = quick_config(25);
  cfg.spnn = {1e-2, 10, 0.1};
  cfg.conn = {1e-3, 10, 0.2};
  cfg.combiner = {1e-2, 10, 0.1};
  TrainResult res = train(cfg, ds);
  CHECK(res.history[0].lr_spnn == 1e-2);
  CHECK(res.history[9].lr_spnn == 1e-2);
  CHECK(res.history[10].lr_spnn == Catch::Approx(1e-3).margin(1e-18));
  CHECK(res.history[20].lr_spnn == Catch::Approx(1e-4).margin(1e-18));
  CHECK(res.history[10].lr_conn == Catch::Approx(2e-4).margin(1e-18));
}

TEST_CASE("roll-out training mode runs and learns", "[training]") {
  SimConfig scfg;
  scfg.n_cells = 3;
  scfg.frames = 15;
  scfg.seed = 4;
  Dataset ds = Dataset::from_records(simulate(scfg).records,
                                     scfg.channel_width, scfg.channel_height);
  TrainConfig cfg = quick_config(50);
  cfg.teacher_forcing = false;
  TrainResult res = train(cfg, ds);
  CHECK(res.bundle.teacher_forcing == false);
  CHECK(std::isfinite(res.history.back().l_data));
  CHECK(res.history.back().l_data < res.history.front().l_data);
}

TEST_CASE("history csv has the documented header", "[training]") {
  Dataset ds = small_sim();
  TrainConfig cfg = quick_config(3);
  TrainResult res = train(cfg, ds);
  const std::string path = "/tmp/aspnn_hist.csv";
  write_history_csv(res.history, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,l_data,l_deg,lr_spnn,lr_conn,lr_comb");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::remove(path.c_str());
}

TEST_CASE("case schedules carry the published parameters", "[training]") {
  TrainConfig t4 = insilico_schedule();
  CHECK(t4.spnn.lr == 1e-2);
  CHECK(t4.conn.lr == 1e-3);
  CHECK(t4.combiner.lr == 1e-2);
  CHECK(t4.spnn.step_epochs == 500);
  CHECK(t4.conn.gamma == 0.2);

  TrainConfig t5 = insilico_noise_schedule();
  CHECK(t5.conn.lr == 1e-2);
  CHECK(t5.conn.gamma == 0.1);

  TrainConfig t6 = real_schedule();
  CHECK(t6.spnn.lr == 5e-5);
  CHECK(t6.conn.lr == 5e-4);
  CHECK(t6.combiner.lr == 5e-4);
  CHECK(t6.spnn.step_epochs == 100);
  CHECK(t6.spnn.gamma == 0.9);
  CHECK(t6.min_frames == 105);
}
