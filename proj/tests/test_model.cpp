#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "aspnn/model.hpp"

using namespace aspnn;

namespace {

ModelBundle sample_bundle() {
  ModelBundle b = make_bundle(31337, Dominance::Spnn);
  Matrix srows(3, 4);
  srows << 0, 0, -1, -1, 150, 50, 2, 0.5, 300, 100, 5, 1;
  b.state_stats = NormStats::fit(srows);
  Matrix frows = Matrix::Random(5, feat::kCount);
  b.feature_stats = NormStats::fit(frows);
  return b;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly", "[model]") {
  ModelBundle b = sample_bundle();
  b.mitosis = make_dense_net(mitosis_dims(), Activation::Tanh,
                             Activation::Softmax, 4711);
  Matrix mrows = Matrix::Random(5, feat::kMitosisCount);
  b.mitosis_stats = NormStats::fit(mrows);
  b.lambda_d = 42.0;
  b.teacher_forcing = false;

  const std::string path = tmp_path("aspnn_ckpt.json");
  save_checkpoint(b, path);
  ModelBundle r = load_checkpoint(path);

  REQUIRE(r.spnn.layers.size() == b.spnn.layers.size());
  for (std::size_t i = 0; i < b.spnn.layers.size(); ++i) {
    CHECK((r.spnn.layers[i].w - b.spnn.layers[i].w).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((r.spnn.layers[i].b - b.spnn.layers[i].b).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(r.spnn.layers[i].act == b.spnn.layers[i].act);
  }
  for (std::size_t i = 0; i < b.conn.layers.size(); ++i)
    CHECK((r.conn.layers[i].w - b.conn.layers[i].w).cwiseAbs().maxCoeff() ==
          0.0);
  CHECK((r.combiner.w - b.combiner.w).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.state_stats.min - b.state_stats.min).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.feature_stats.max - b.feature_stats.max).cwiseAbs().maxCoeff() ==
        0.0);
  REQUIRE(r.mitosis.has_value());
  CHECK((r.mitosis->layers[0].w - b.mitosis->layers[0].w)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(r.lambda_d == 42.0);
  CHECK(r.teacher_forcing == false);
  CHECK(r.dominance == Dominance::Spnn);
  CHECK(r.seed == 31337);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint without mitosis net omits it", "[model]") {
  ModelBundle b = sample_bundle();
  const std::string path = tmp_path("aspnn_ckpt2.json");
  save_checkpoint(b, path);
  ModelBundle r = load_checkpoint(path);
  CHECK(!r.mitosis.has_value());
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected", "[model]") {
  CHECK_THROWS_AS(load_checkpoint(tmp_path("aspnn_nope.json")), Error);
  const std::string path = tmp_path("aspnn_ckpt3.json");
  {
    std::ofstream out(path);
    out << "{\"version\": 99}";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  {
    std::ofstream out(path);
    out << "not json";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("fixed architectures match their published sizes", "[model]") {
  ModelBundle b = make_bundle(1, Dominance::Balanced);
  CHECK(b.spnn.in_dim() == 4);
  CHECK(b.spnn.out_dim() == 32);
  REQUIRE(b.spnn.layers.size() == 6);  // 16,64,128,64,16 hidden + output head
  CHECK(b.spnn.layers[0].out_dim() == 16);
  CHECK(b.spnn.layers[2].out_dim() == 128);
  CHECK(b.conn.in_dim() == 23);
  REQUIRE(b.conn.layers.size() == 5);  // 181,297,149,295 hidden + output
  CHECK(b.conn.layers[1].out_dim() == 297);
  CHECK(b.conn.out_dim() == 2);
  DenseNet mit = make_dense_net(mitosis_dims(), Activation::Tanh,
                                Activation::Softmax, 2);
  CHECK(mit.in_dim() == 27);
  CHECK(mit.layers[1].out_dim() == 96);
  CHECK(mit.out_dim() == 2);
  CHECK(mit.layers.back().act == Activation::Softmax);
}
