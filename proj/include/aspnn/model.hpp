#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspnn/combiner.hpp"
#include "aspnn/common.hpp"
#include "aspnn/features.hpp"
#include "aspnn/net.hpp"

namespace aspnn {

inline constexpr int kCheckpointVersion = 1;

// Everything needed to run the trajectory pipeline (and optionally the
// mitosis classifier) after training: parameters plus the normalization
// statistics frozen from the training split.
struct ModelBundle {
  DenseNet spnn;  // 4 -> 32 (A|B row-major)
  DenseNet conn;  // 23 -> 2
  CombinerLayer combiner;
  std::optional<DenseNet> mitosis;  // 27 -> 2 softmax

  NormStats state_stats;    // 4 components
  NormStats feature_stats;  // 23 components
  std::optional<NormStats> mitosis_stats;  // 27 components

  bool teacher_forcing = true;
  Dominance dominance = Dominance::Spnn;
  double dt = 1.0;
  double lambda_d = 100.0;
  std::uint64_t seed = 0;
};

inline ModelBundle make_bundle(std::uint64_t seed, Dominance dominance) {
  Rng mix(seed);
  ModelBundle b;
  b.spnn = make_dense_net(spnn_dims(), Activation::Tanh, Activation::Identity,
                          mix());
  b.conn = make_dense_net(conn_dims(), Activation::Tanh, Activation::Identity,
                          mix());
  b.combiner = init_combiner(dominance);
  b.dominance = dominance;
  b.seed = seed;
  return b;
}

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline nlohmann::json net_to_json(const DenseNet& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    std::vector<double> w(static_cast<std::size_t>(l.w.size()));
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c)
        w[static_cast<std::size_t>(r * l.w.cols() + c)] = l.w(r, c);
    std::vector<double> b(l.b.data(), l.b.data() + l.b.size());
    layers.push_back({{"in", l.w.cols()},
                      {"out", l.w.rows()},
                      {"act", activation_name(l.act)},
                      {"w", w},
                      {"b", b}});
  }
  return {{"layers", layers}};
}

inline DenseNet net_from_json(const nlohmann::json& j) {
  DenseNet net;
  for (const auto& lj : j.at("layers")) {
    DenseLayer l;
    const Eigen::Index in = lj.at("in").get<Eigen::Index>();
    const Eigen::Index out = lj.at("out").get<Eigen::Index>();
    const auto w = lj.at("w").get<std::vector<double>>();
    const auto b = lj.at("b").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(in * out) ||
        b.size() != static_cast<std::size_t>(out))
      fail_data("checkpoint layer has inconsistent sizes");
    l.w.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c)
        l.w(r, c) = w[static_cast<std::size_t>(r * in + c)];
    l.b = Eigen::Map<const Vector>(b.data(), out);
    l.act = activation_from_name(lj.at("act").get<std::string>());
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

inline nlohmann::json stats_to_json(const NormStats& s) {
  return {{"min", std::vector<double>(s.min.data(), s.min.data() + s.min.size())},
          {"max", std::vector<double>(s.max.data(), s.max.data() + s.max.size())}};
}

inline NormStats stats_from_json(const nlohmann::json& j) {
  const auto mn = j.at("min").get<std::vector<double>>();
  const auto mx = j.at("max").get<std::vector<double>>();
  if (mn.size() != mx.size()) fail_data("checkpoint stats size mismatch");
  NormStats s;
  s.min = Eigen::Map<const Vector>(mn.data(), static_cast<Eigen::Index>(mn.size()));
  s.max = Eigen::Map<const Vector>(mx.data(), static_cast<Eigen::Index>(mx.size()));
  for (Eigen::Index i = 0; i < s.min.size(); ++i)
    if (s.max[i] < s.min[i]) fail_data("checkpoint stats: max < min");
  return s;
}

inline std::string architecture_tag(const ModelBundle& b) {
  std::string tag = "spnn:";
  for (const auto& l : b.spnn.layers) tag += std::to_string(l.w.rows()) + ",";
  tag += ";conn:";
  for (const auto& l : b.conn.layers) tag += std::to_string(l.w.rows()) + ",";
  tag += ";comb:2x4;mitosis:";
  if (b.mitosis)
    for (const auto& l : b.mitosis->layers)
      tag += std::to_string(l.w.rows()) + ",";
  return tag;
}

}  // namespace detail

inline void save_checkpoint(const ModelBundle& b, const std::string& path) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["config_hash"] = detail::fnv1a(detail::architecture_tag(b));
  j["spnn"] = detail::net_to_json(b.spnn);
  j["conn"] = detail::net_to_json(b.conn);
  j["combiner"] = {
      {"w", std::vector<double>{b.combiner.w(0, 0), b.combiner.w(0, 1),
                                b.combiner.w(0, 2), b.combiner.w(0, 3),
                                b.combiner.w(1, 0), b.combiner.w(1, 1),
                                b.combiner.w(1, 2), b.combiner.w(1, 3)}},
      {"b", std::vector<double>{b.combiner.b[0], b.combiner.b[1]}}};
  j["state_stats"] = detail::stats_to_json(b.state_stats);
  j["feature_stats"] = detail::stats_to_json(b.feature_stats);
  if (b.mitosis) {
    j["mitosis"] = detail::net_to_json(*b.mitosis);
    j["mitosis_stats"] = detail::stats_to_json(*b.mitosis_stats);
  }
  j["meta"] = {{"teacher_forcing", b.teacher_forcing},
               {"dominance", dominance_name(b.dominance)},
               {"dt", b.dt},
               {"lambda_d", b.lambda_d},
               {"seed", b.seed}};
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) fail_data("write failed for '" + path + "'");
}

inline ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail_data("checkpoint '" + path + "': " + e.what());
  }
  try {
    if (j.at("version").get<int>() != kCheckpointVersion)
      fail_data("checkpoint '" + path + "': unsupported version");
    ModelBundle b;
    b.spnn = detail::net_from_json(j.at("spnn"));
    b.conn = detail::net_from_json(j.at("conn"));
    const auto w = j.at("combiner").at("w").get<std::vector<double>>();
    const auto bias = j.at("combiner").at("b").get<std::vector<double>>();
    if (w.size() != 8 || bias.size() != 2)
      fail_data("checkpoint combiner has wrong shape");
    b.combiner.w.resize(2, 4);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 4; ++c)
        b.combiner.w(r, c) = w[static_cast<std::size_t>(4 * r + c)];
    b.combiner.b = Vec2(bias[0], bias[1]);
    b.state_stats = detail::stats_from_json(j.at("state_stats"));
    b.feature_stats = detail::stats_from_json(j.at("feature_stats"));
    if (j.contains("mitosis")) {
      b.mitosis = detail::net_from_json(j.at("mitosis"));
      b.mitosis_stats = detail::stats_from_json(j.at("mitosis_stats"));
    }
    const auto& meta = j.at("meta");
    b.teacher_forcing = meta.at("teacher_forcing").get<bool>();
    b.dominance = dominance_from_name(meta.at("dominance").get<std::string>());
    b.dt = meta.at("dt").get<double>();
    b.lambda_d = meta.at("lambda_d").get<double>();
    b.seed = meta.at("seed").get<std::uint64_t>();
    if (j.at("config_hash").get<std::uint64_t>() !=
        detail::fnv1a(detail::architecture_tag(b)))
      fail_data("checkpoint '" + path + "': config hash mismatch");
    return b;
  } catch (const nlohmann::json::exception& e) {
    fail_data("checkpoint '" + path + "': " + e.what());
  }
}

}  // namespace aspnn
