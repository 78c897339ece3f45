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


#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "uwm/tensor.hpp"

namespace uwm::testing {

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

// Max over every parameter entry of |analytic - central difference| /
// max(1, |analytic|) for the scalar `loss`.
inline double param_grad_error(ParameterSet& params, const std::function<Var(Tape&)>& loss,
                               double step = 1e-5) {
  params.zero_grad();
  {
    Tape t;
    Var l = loss(t);
    t.evaluate(l);
    t.backward(l);
    t.accumulate_param_grads();
  }
  auto value = [&] {
    Tape t;
    Var l = loss(t);
    return t.evaluate(l)(0, 0);
  };
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter& par = params[p];
    for (Index i = 0; i < par.value.size(); ++i) {
      const double orig = par.value(i);
      par.value(i) = orig + step;
      const double up = value();
      par.value(i) = orig - step;
      const double down = value();
      par.value(i) = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = par.grad(i);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
    }
  }
  return worst;
}

}  // namespace uwm::testing
