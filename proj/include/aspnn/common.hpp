#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace aspnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

using Rng = std::mt19937_64;

// Error taxonomy mirrored by the CLI exit codes (config=2, data=3, numeric=4).
enum class ErrorCode { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail_config(const std::string& msg) {
  throw Error(ErrorCode::Config, msg);
}
[[noreturn]] inline void fail_data(const std::string& msg) {
  throw Error(ErrorCode::Data, msg);
}
[[noreturn]] inline void fail_numeric(const std::string& msg) {
  throw Error(ErrorCode::Numeric, msg);
}

// Shortest round-trip decimal form; keeps exported CSVs byte-stable.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace aspnn
