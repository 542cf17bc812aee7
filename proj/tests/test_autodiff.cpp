#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "aspnn/autodiff.hpp"
#include "aspnn/net.hpp"
#include "oracles.hpp"

using namespace aspnn;

TEST_CASE("identity-ish single layers", "[autodiff]") {
  DenseNet net;
  net.layers.push_back({Matrix::Identity(2, 2), Vector::Zero(2),
                        Activation::Tanh});
  Vector out = net.forward(Vector(Vector::Zero(2)));
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);

  DenseNet affine;
  Vector b(2);
  b << 1, -1;
  affine.layers.push_back({Matrix::Identity(2, 2), b, Activation::Identity});
  Vector in(2);
  in << 2, 3;
  Vector out2 = affine.forward(in);
  CHECK(out2[0] == 3.0);
  CHECK(out2[1] == 2.0);
}

TEST_CASE("random net matches scalar re-implementation", "[autodiff]") {
  DenseNet net = make_dense_net({3, 5, 2}, Activation::Tanh, Activation::Tanh,
                                1234);
  Rng rng(99);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x{u(rng), u(rng), u(rng)};
    Vector xe = Eigen::Map<Vector>(x.data(), 3);
    Vector got = net.forward(xe);
    std::vector<double> want = oracle::naive_forward(net, x);
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("dimension mismatch names the layer", "[autodiff]") {
  DenseNet net = make_dense_net({3, 4, 2}, Activation::Tanh,
                                Activation::Identity, 7);
  CHECK_THROWS_AS(net.forward(Vector(Vector::Zero(5))), Error);
  try {
    net.forward(Vector(Vector::Zero(5)));
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
}

TEST_CASE("softmax basics", "[autodiff]") {
  Vector two(2);
  two << 0, 0;
  Vector p = softmax(two);
  CHECK(p[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(p[1] == Catch::Approx(0.5).margin(1e-15));

  Vector big(2);
  big << 1000, 0;
  Vector q = softmax(big);
  CHECK(std::isfinite(q[0]));
  CHECK(q[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(q[1] == Catch::Approx(0.0).margin(1e-12));

  Vector three(3);
  three << 1, 2, 3;
  Vector r = softmax(three);
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(r[i] - std::exp(static_cast<double>(i + 1)) / denom) <
          1e-12);
  CHECK(std::abs(r.sum() - 1.0) < 1e-12);
}

TEST_CASE("linear layer gradient equals input entries", "[autodiff]") {
  // loss = sum of outputs of one identity-activation layer
  DenseNet net;
  net.layers.push_back(
      {Matrix::Zero(2, 3), Vector::Zero(2), Activation::Identity});
  ParamTable table;
  NetParamIds ids = register_net(table, net, "lin");
  GradientTape tape(table);
  Matrix x(1, 3);
  x << 0.5, -1.25, 2.0;
  auto in = tape.constant(x);
  auto out = tape.dense(net, ids, in);
  Matrix seed = Matrix::Ones(1, 2);
  tape.backward_with_seed(out, seed);
  const Matrix& dw = tape.grads.at(ids.layers[0].first);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) CHECK(dw(r, c) == x(0, c));
  const Matrix& db = tape.grads.at(ids.layers[0].second);
  CHECK(db(0, 0) == 1.0);
  CHECK(db(1, 0) == 1.0);
}

TEST_CASE("zero output gradient gives zero parameter gradients", "[autodiff]") {
  DenseNet net = make_dense_net({3, 4, 2}, Activation::Tanh,
                                Activation::Identity, 21);
  ParamTable table;
  NetParamIds ids = register_net(table, net, "n");
  GradientTape tape(table);
  auto in = tape.constant(Matrix::Random(1, 3));
  auto out = tape.dense(net, ids, in);
  tape.backward_with_seed(out, Matrix::Zero(1, 2));
  for (auto [w, b] : ids.layers) {
    CHECK(tape.grads.at(w).cwiseAbs().maxCoeff() == 0.0);
    CHECK(tape.grads.at(b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("tape cannot be consumed twice", "[autodiff]") {
  DenseNet net = make_dense_net({2, 2}, Activation::Tanh, Activation::Identity,
                                3);
  ParamTable table;
  NetParamIds ids = register_net(table, net, "n");
  GradientTape tape(table);
  auto out = tape.dense(net, ids, tape.constant(Matrix::Random(1, 2)));
  tape.backward_with_seed(out, Matrix::Ones(1, 2));
  CHECK_THROWS_AS(tape.backward_with_seed(out, Matrix::Ones(1, 2)), Error);
}

TEST_CASE("gradients match central finite differences", "[autodiff]") {
  // 100 random small nets; loss = sum of squared outputs.
  Rng seeds(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t seed = seeds();
    std::mt19937_64 shape_rng(seed);
    const int n_layers = 1 + static_cast<int>(shape_rng() % 3);
    std::vector<int> dims;
    dims.push_back(1 + static_cast<int>(shape_rng() % 8));
    for (int l = 0; l < n_layers; ++l)
      dims.push_back(1 + static_cast<int>(shape_rng() % 8));
    DenseNet net = make_dense_net(dims, Activation::Tanh, Activation::Identity,
                                  seed);
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix x = Matrix::NullaryExpr(1, dims[0], [&]() { return u(shape_rng); });

    ParamTable table;
    NetParamIds ids = register_net(table, net, "n");
    GradientTape tape(table);
    auto out = tape.dense(net, ids, tape.constant(x));
    Matrix outv = tape.value(out);
    tape.backward_with_seed(out, Matrix(2.0 * outv));  // d(sum out^2)/dout

    auto loss = [&]() { return net.forward(x).array().square().sum(); };
    double worst = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      auto& layer = net.layers[li];
      const Matrix& dw = tape.grads.at(ids.layers[li].first);
      for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
          const double fd = oracle::central_diff(loss, layer.w(r, c));
          worst = std::max(worst, oracle::rel_err(dw(r, c), fd));
        }
      const Matrix& db = tape.grads.at(ids.layers[li].second);
      for (Eigen::Index r = 0; r < layer.b.size(); ++r) {
        const double fd = oracle::central_diff(loss, layer.b[r]);
        worst = std::max(worst, oracle::rel_err(db(r, 0), fd));
      }
    }
    INFO("seed " << seed);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("tanh stays inside (-1,1); softmax rows form a simplex",
          "[autodiff]") {
  DenseNet net = make_dense_net({4, 6, 3}, Activation::Tanh,
                                Activation::Softmax, 77);
  Rng rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 200; ++t) {
    Vector x = Vector::NullaryExpr(4, [&]() { return u(rng); });
    Matrix hidden = (x.transpose() * net.layers[0].w.transpose());
    hidden.rowwise() += net.layers[0].b.transpose();
    hidden = hidden.array().tanh();
    CHECK(hidden.cwiseAbs().maxCoeff() < 1.0);
    Vector p = net.forward(x);
    CHECK(p.minCoeff() > 0.0);
    CHECK(p.maxCoeff() < 1.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("mse node value and gradient", "[autodiff]") {
  // mse of (1,0) against zeros: 0.5 under the 2-component mean
  ParamTable table;
  DenseNet net;
  net.layers.push_back(
      {Matrix::Identity(2, 2), Vector::Zero(2), Activation::Identity});
  NetParamIds ids = register_net(table, net, "id");
  Matrix pred(1, 2);
  pred << 1, 0;
  GradientTape tape(table);
  auto out = tape.dense(net, ids, tape.constant(pred));
  auto loss = tape.mse(out, Matrix::Zero(1, 2));
  CHECK(tape.value(loss)(0, 0) == Catch::Approx(0.5).margin(1e-15));
  tape.backward(loss);
  // d(0.5*(p0^2+p1^2))/db = (p0, p1)
  const Matrix& db = tape.grads.at(ids.layers[0].second);
  CHECK(db(0, 0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(db(1, 0) == Catch::Approx(0.0).margin(1e-15));
}
