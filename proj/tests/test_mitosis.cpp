#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "aspnn/mitosis.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace aspnn;

TEST_CASE("bce loss basics", "[mitosis]") {
  CHECK(bce_loss(0.5, 0) == Catch::Approx(std::log(2.0)).margin(1e-12));
  CHECK(bce_loss(0.5, 1) == Catch::Approx(std::log(2.0)).margin(1e-12));
  CHECK(bce_loss(1.0 - 1e-13, 1) < 1e-10);
  CHECK(bce_loss(0.9, 0) == Catch::Approx(-std::log(0.1)).epsilon(1e-9));
  CHECK(std::isfinite(bce_loss(0.0, 1)));  // eps clipping keeps it total
  CHECK(std::isfinite(bce_loss(1.0, 0)));
}

TEST_CASE("classifier outputs live on the simplex", "[mitosis]") {
  DenseNet zero;
  zero.layers.push_back(
      {Matrix::Zero(2, feat::kMitosisCount), Vector::Zero(2),
       Activation::Softmax});
  Vector p = zero.forward(Vector(Vector::Zero(feat::kMitosisCount)));
  CHECK(p[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(p[1] == Catch::Approx(0.5).margin(1e-15));

  DenseNet net = make_dense_net(mitosis_dims(), Activation::Tanh,
                                Activation::Softmax, 8080);
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 50; ++t) {
    Vector x = Vector::NullaryExpr(feat::kMitosisCount, [&]() { return u(rng); });
    Vector q = net.forward(x);
    CHECK(q.minCoeff() > 0.0);
    CHECK(std::abs(q.sum() - 1.0) < 1e-12);
  }

  // fixed seed matches the scalar oracle
  Vector x = Vector::NullaryExpr(feat::kMitosisCount, [&]() { return u(rng); });
  std::vector<double> xin(x.data(), x.data() + x.size());
  std::vector<double> want = oracle::naive_forward(net, xin);
  Vector got = net.forward(x);
  CHECK(std::abs(got[0] - want[0]) < 1e-12);
  CHECK(std::abs(got[1] - want[1]) < 1e-12);
}

TEST_CASE("planted-signal training separates quickly", "[mitosis]") {
  synthetic::MitosisSetup setup;
  setup.n_cells = 6;
  setup.frames = 40;
  setup.seed = 5;
  Dataset ds = synthetic::mitosis_dataset(setup);
  FeatureExtractor fx(ds);
  auto samples = build_mitosis_samples(ds, fx);
  REQUIRE(samples.size() == 240);

  MitosisTrainConfig cfg;
  cfg.epochs = 2000;
  cfg.seed = 31;
  MitosisTrainResult res = train_mitosis(cfg, samples);
  CHECK(res.bce_history.back() < 0.1);
  CHECK(res.bce_history.back() < res.bce_history.front());
}

TEST_CASE("all-negative labels push probabilities to zero", "[mitosis]") {
  synthetic::MitosisSetup setup;
  setup.n_cells = 4;
  setup.frames = 30;
  setup.event_fraction = 0.0;
  Dataset ds = synthetic::mitosis_dataset(setup);
  FeatureExtractor fx(ds);
  auto samples = build_mitosis_samples(ds, fx);
  MitosisTrainConfig cfg;
  cfg.epochs = 500;
  cfg.seed = 1;
  MitosisTrainResult res = train_mitosis(cfg, samples);
  double mean_p = 0;
  for (const auto& s : samples)
    mean_p += mitosis_forward(res.net, res.stats, s.features)[1];
  mean_p /= static_cast<double>(samples.size());
  CHECK(mean_p < 0.2);
}

TEST_CASE("same seed, same training history", "[mitosis]") {
  synthetic::MitosisSetup setup;
  setup.n_cells = 3;
  setup.frames = 25;
  setup.seed = 6;
  Dataset ds = synthetic::mitosis_dataset(setup);
  FeatureExtractor fx(ds);
  auto samples = build_mitosis_samples(ds, fx);
  MitosisTrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 9;
  MitosisTrainResult a = train_mitosis(cfg, samples);
  MitosisTrainResult b = train_mitosis(cfg, samples);
  for (std::size_t i = 0; i < a.bce_history.size(); ++i)
    CHECK(a.bce_history[i] == b.bce_history[i]);
}

TEST_CASE("windowed evaluation counts detections and false positives",
          "[mitosis]") {
  MitosisSequence s;
  s.cell = 0;
  s.first_frame = 0;
  s.p_pos.assign(30, 0.0);
  s.labels.assign(30, 0);
  s.labels[10] = 1;

  // all-zero probabilities: nothing detected, nothing fires
  MitosisEval quiet = evaluate_mitosis({s}, 3, 0.6);
  CHECK(quiet.precision_defined);
  CHECK(quiet.precision == 0.0);
  CHECK(quiet.fp_frames == 0);

  // p=0.9 at frame 12 only: inside [7,13], detected, no false positive
  s.p_pos[12] = 0.9;
  MitosisEval hit = evaluate_mitosis({s}, 3, 0.6);
  CHECK(hit.precision == 1.0);
  CHECK(hit.fp_frames == 0);
  REQUIRE(hit.events.size() == 1);
  CHECK(hit.events[0].detected);
  CHECK(hit.events[0].hit_offsets == std::vector<int>{2});

  // a spike far outside the window is a false positive
  s.p_pos[25] = 0.95;
  MitosisEval fp = evaluate_mitosis({s}, 3, 0.6);
  CHECK(fp.precision == 1.0);
  CHECK(fp.fp_frames == 1);
  CHECK(fp.negative_frames == 29);

  // no labeled events: precision undefined, reported as such
  MitosisSequence none;
  none.p_pos.assign(10, 0.0);
  none.labels.assign(10, 0);
  MitosisEval undef = evaluate_mitosis({none}, 3, 0.6);
  CHECK(!undef.precision_defined);
}

TEST_CASE("raising the threshold never raises the counts", "[mitosis]") {
  Rng rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    MitosisSequence s;
    s.p_pos.resize(60);
    s.labels.assign(60, 0);
    for (auto& p : s.p_pos) p = u(rng);
    s.labels[15] = 1;
    s.labels[40] = 1;
    long prev_fp = -1;
    int prev_det = -1;
    bool first = true;
    for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      MitosisEval ev = evaluate_mitosis({s}, 3, thr);
      if (!first) {
        CHECK(ev.fp_frames <= prev_fp);
        CHECK(ev.detected_events <= prev_det);
      }
      prev_fp = ev.fp_frames;
      prev_det = ev.detected_events;
      first = false;
    }
  }
}

TEST_CASE("detection depends only on the window contents", "[mitosis]") {
  Rng rng(88);
  std::uniform_real_distribution<double> u(0, 1);
  MitosisSequence s;
  s.p_pos.resize(50);
  s.labels.assign(50, 0);
  for (auto& p : s.p_pos) p = u(rng);
  s.labels[20] = 1;
  MitosisEval base = evaluate_mitosis({s}, 3, 0.6);

  // scramble everything outside [17, 23]
  MitosisSequence t = s;
  std::shuffle(t.p_pos.begin(), t.p_pos.begin() + 17, rng);
  std::shuffle(t.p_pos.begin() + 24, t.p_pos.end(), rng);
  MitosisEval scrambled = evaluate_mitosis({t}, 3, 0.6);
  CHECK(base.precision == scrambled.precision);
  CHECK(base.detected_events == scrambled.detected_events);
}

TEST_CASE("prediction csv uses the documented header", "[mitosis]") {
  MitosisSequence s;
  s.cell = 3;
  s.first_frame = 2;
  s.p_pos = {0.1, 0.8};
  s.labels = {0, 1};
  const std::string path = "/tmp/aspnn_mit_pred.csv";
  write_mitosis_predictions_csv({s}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "frame,cell_id,p_pos,label");
  std::getline(in, line);
  CHECK(line == "2,3,0.1,0");
  std::remove(path.c_str());
}
