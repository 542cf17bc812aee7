#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aspnn/autodiff.hpp"
#include "aspnn/common.hpp"

namespace aspnn {

// Stepwise decay: lr *= gamma whenever the epoch is a positive multiple of
// step_epochs. Called once per epoch by the training loop.
struct LrScheduler {
  int step_epochs = 0;  // 0 disables
  double gamma = 1.0;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrScheduler scheduler;
};

inline void scheduler_step(double& lr, const LrScheduler& sched, int epoch) {
  if (sched.step_epochs > 0 && epoch > 0 && epoch % sched.step_epochs == 0)
    lr *= sched.gamma;
}

// Adam over a subset of a ParamTable. Moments live per parameter tensor.
class Adam {
 public:
  Adam(const ParamTable& table, std::vector<ParamId> params,
       const OptimizerConfig& cfg)
      : table_(&table), params_(std::move(params)), cfg_(cfg), lr_(cfg.lr) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (ParamId id : params_) {
      auto val = table.value(id);
      m_.push_back(Matrix::Zero(val.rows(), val.cols()));
      v_.push_back(Matrix::Zero(val.rows(), val.cols()));
    }
  }

  double lr() const { return lr_; }
  long step_count() const { return t_; }

  void on_epoch(int epoch) { scheduler_step(lr_, cfg_.scheduler, epoch); }

  // One Adam update from the accumulated gradients. Untouched entries are
  // treated as zero gradients.
  void step(const Gradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const ParamId id = params_[k];
      auto value = table_->value(id);
      Matrix g;
      if (grads.touched(id)) {
        g = grads.at(id);
        if (!g.allFinite())
          fail_numeric("non-finite gradient for parameter '" +
                       table_->name(id) + "'");
      } else {
        g = Matrix::Zero(value.rows(), value.cols());
      }
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const Matrix mhat = m_[k] / bc1;
      const Matrix vhat = v_[k] / bc2;
      value.array() -=
          lr_ * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
    }
  }

 private:
  const ParamTable* table_;
  std::vector<ParamId> params_;
  OptimizerConfig cfg_;
  double lr_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

inline std::vector<ParamId> param_ids(const NetParamIds& ids) {
  std::vector<ParamId> out;
  for (auto [w, b] : ids.layers) {
    out.push_back(w);
    out.push_back(b);
  }
  return out;
}

}  // namespace aspnn
