// Copyright 2026 The uwm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// First-order optimizers over a ParameterSet and global-norm gradient clipping.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uwm/config.hpp"
#include "uwm/errors.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double decay = 0.9;  // RMSprop
  double eps = 1e-8;
};

class Optimizer {
 public:
  Optimizer(ParameterSet& params, OptimizerSettings s) : params_(params), s_(s) {
    if (!(s.lr > 0.0)) throw ConfigError("optimizer: learning rate must be > 0");
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
      v_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
    }
  }

  const OptimizerSettings& settings() const { return s_; }
  long steps() const { return t_; }

  // Applies one update from each Parameter::grad. Every gradient is checked
  // before any parameter moves.
  void step() {
    if (params_.size() != m_.size())
      throw StateError("optimizer: parameter set changed after construction");
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (!params_[i].grad.allFinite())
        throw NumericError("optimizer: non-finite gradient in parameter '" + params_[i].name + "'");
    ++t_;
    const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = params_[i];
      switch (s_.kind) {
        case OptimizerKind::kSgd:
          p.value -= s_.lr * p.grad;
          break;
        case OptimizerKind::kRmsprop:
          v_[i] = s_.decay * v_[i].array() + (1.0 - s_.decay) * p.grad.array().square();
          p.value.array() -= s_.lr * p.grad.array() / (v_[i].array().sqrt() + s_.eps);
          break;
        case OptimizerKind::kAdam:
          m_[i] = s_.beta1 * m_[i] + (1.0 - s_.beta1) * p.grad;
          v_[i] = s_.beta2 * v_[i].array() + (1.0 - s_.beta2) * p.grad.array().square();
          p.value.array() -=
              s_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + s_.eps);
          break;
      }
    }
  }

 private:
  ParameterSet& params_;
  OptimizerSettings s_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

inline double global_grad_norm(const ParameterSet& params) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) sq += params[i].grad.squaredNorm();
  return std::sqrt(sq);
}

// Rescales every gradient by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
inline double clip_gradients(ParameterSet& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_gradients: max norm must be > 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].grad *= k;
  }
  return norm;
}

}  // namespace uwm
