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

// Memorization-capacity calculus for write schedules.
//
// With per-step decay rate lambda, a write schedule with intervals
// l_1..l_{D+1} (summing to T) keeps an average contribution of
//
//   I = (C / T) * sum_i f(l_i),   f(x) = (1 - lambda^x) / (1 - lambda)
//
// which is maximized for lambda <= 1 (minimized for lambda > 1) by equal
// intervals T / (D + 1).

#pragma once

#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "uwm/controller.hpp"
#include "uwm/errors.hpp"
#include "uwm/schedule.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

struct TheoryParams {
  double lambda = 1.0;
  double c = 1.0;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw ContractError("theory: lambda must be a positive real");
    if (!(c > 0.0) || !std::isfinite(c)) throw ContractError("theory: C must be a positive real");
  }
};

enum class NormKind { kFrobenius, kInf, kSpectral };

inline NormKind parse_norm(std::string_view s) {
  if (s == "frobenius" || s == "fro") return NormKind::kFrobenius;
  if (s == "inf") return NormKind::kInf;
  if (s == "spectral") return NormKind::kSpectral;
  throw ConfigError("unknown norm '" + std::string(s) + "' (expected frobenius|inf|spectral)");
}

inline double matrix_norm(const Matrix& m, NormKind kind) {
  switch (kind) {
    case NormKind::kFrobenius: return m.norm();
    case NormKind::kInf: return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
    case NormKind::kSpectral:
      if (m.size() == 0) return 0.0;
      return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
  }
  return 0.0;
}

// sum_{j=0}^{x-1} lambda^j extended to real x > 0; equals x at lambda = 1.
inline double f_lambda(double x, double lambda) {
  if (lambda == 1.0) return x;
  const double d = lambda - 1.0;
  return std::expm1(x * std::log1p(d)) / d;
}

// Interval form: (C/T) sum_i f(l_i).
inline double avg_contribution(const WriteSchedule& s, const TheoryParams& p) {
  p.validate();
  s.validate();
  if (s.steps.empty() && s.slots > 0)
    throw ContractError("avg_contribution: empty schedule with D = " + std::to_string(s.slots));
  double total = 0.0;
  for (int l : s.intervals()) total += f_lambda(static_cast<double>(l), p.lambda);
  return p.c * total / static_cast<double>(s.length);
}

// Raw form: (C/T) sum over segments sum_t lambda^(K_i - t), with the last
// segment closing at T.
inline double avg_contribution_raw(const WriteSchedule& s, const TheoryParams& p) {
  p.validate();
  s.validate();
  if (s.steps.empty() && s.slots > 0)
    throw ContractError("avg_contribution_raw: empty schedule with D = " +
                        std::to_string(s.slots));
  std::vector<int> ends = s.steps;
  if (ends.empty() || ends.back() != s.length) ends.push_back(s.length);
  double total = 0.0;
  int start = 1;
  for (int end : ends) {
    for (int t = start; t <= end; ++t) total += std::pow(p.lambda, end - t);
    start = end + 1;
  }
  return p.c * total / static_cast<double>(s.length);
}

// D + 1 equal real intervals.
inline std::vector<double> optimal_intervals(int length, int slots) {
  if (length < 1) throw ContractError("optimal_intervals: T must be >= 1");
  if (slots < 0) throw ContractError("optimal_intervals: D must be >= 0");
  return std::vector<double>(static_cast<std::size_t>(slots + 1),
                             static_cast<double>(length) / static_cast<double>(slots + 1));
}

// C (D+1)/T f(T/(D+1)): the value at equal real intervals, for any lambda > 0.
inline double g_lambda(int length, int slots, const TheoryParams& p) {
  p.validate();
  if (length < 1 || slots < 0) throw ContractError("g_lambda: need T >= 1 and D >= 0");
  const double n = static_cast<double>(slots + 1);
  return p.c * n / static_cast<double>(length) *
         f_lambda(static_cast<double>(length) / n, p.lambda);
}

// Closed-form maximum of the average contribution for 0 < lambda <= 1.
inline double g_lambda_max(int length, int slots, const TheoryParams& p) {
  p.validate();
  if (p.lambda > 1.0) throw ContractError("g_lambda_max: requires lambda in (0, 1]");
  return g_lambda(length, slots, p);
}

struct BestSchedule {
  WriteSchedule schedule;
  double value = 0.0;
  std::uint64_t enumerated = 0;
};

inline constexpr std::uint64_t kMaxPlacements = 1'000'000;

// C(n, k), saturating at limit + 1.
inline std::uint64_t binomial_capped(int n, int k, std::uint64_t limit) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long double acc = 1.0L;
  for (int i = 1; i <= k; ++i) {
    acc = acc * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (acc > static_cast<long double>(limit)) return limit + 1;
  }
  return static_cast<std::uint64_t>(acc + 0.5L);
}

// Enumerates every placement 1 <= K_1 < ... < K_D < T and returns the one that
// maximizes the raw-form average contribution (minimizes it for lambda > 1).
// Ties keep the lexicographically first placement.
inline BestSchedule brute_force_best_schedule(int length, int slots, const TheoryParams& p,
                                              std::uint64_t limit = kMaxPlacements) {
  p.validate();
  if (length < 1 || slots < 0) throw ContractError("brute_force: need T >= 1 and D >= 0");
  if (slots > length - 1)
    throw ContractError("brute_force: D = " + std::to_string(slots) + " writes do not fit in T = " +
                        std::to_string(length));
  const std::uint64_t count = binomial_capped(length - 1, slots, limit);
  if (count > limit)
    throw SizeError("brute_force: C(" + std::to_string(length - 1) + ", " + std::to_string(slots) +
                    ") placements exceed the limit of " + std::to_string(limit));
  const bool maximize = p.lambda <= 1.0;
  BestSchedule best;
  best.value = maximize ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
  std::vector<int> k(static_cast<std::size_t>(slots));
  for (int i = 0; i < slots; ++i) k[static_cast<std::size_t>(i)] = i + 1;
  WriteSchedule cand;
  cand.length = length;
  cand.slots = slots;
  while (true) {
    cand.steps = k;
    const double v = avg_contribution_raw(cand, p);
    ++best.enumerated;
    if (maximize ? v > best.value : v < best.value) {
      best.value = v;
      best.schedule = cand;
    }
    // Next combination in lexicographic order.
    int i = slots - 1;
    while (i >= 0 && k[static_cast<std::size_t>(i)] == length - 1 - (slots - 1 - i)) --i;
    if (i < 0) break;
    ++k[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < slots; ++j)
      k[static_cast<std::size_t>(j)] = k[static_cast<std::size_t>(j - 1)] + 1;
  }
  return best;
}

inline double lambda_c_linear(const Matrix& u, NormKind kind = NormKind::kInf) {
  if (u.rows() != u.cols()) throw DimensionError("lambda_c_linear: U " + shape_str(u) + " is not square");
  return matrix_norm(u, kind);
}

struct ContributionProfile {
  std::vector<double> values;  // values[i - 1] = c_{i,T}
  NormKind norm = NormKind::kFrobenius;
  std::vector<Matrix> jacobians;  // dh_T / dx_i, hidden x input
};

inline constexpr std::size_t kMaxProfilePositions = 4096;

// c_{i,T} = ||dh_T / dx_i|| for a recurrence driven one row-vector input per
// step. `init(tape)` builds h_0; `step(tape, state, x)` advances it. One
// backward pass per coordinate of h_T assembles the Jacobian rows.
template <class Init, class Step>
ContributionProfile contribution_profile(Init&& init, Step&& step, const std::vector<Matrix>& inputs,
                                         NormKind norm = NormKind::kFrobenius,
                                         std::size_t max_positions = kMaxProfilePositions) {
  if (inputs.empty()) throw ContractError("contribution_profile: empty input sequence");
  if (inputs.size() > max_positions)
    throw SizeError("contribution_profile: T = " + std::to_string(inputs.size()) +
                    " exceeds the per-position backward limit of " + std::to_string(max_positions));
  for (const Matrix& x : inputs)
    if (x.rows() != 1) throw DimensionError("contribution_profile: inputs must be single rows, got " + shape_str(x));
  Tape tape;
  std::vector<Var> xs;
  ControllerState state = init(tape);
  for (const Matrix& x : inputs) {
    xs.push_back(tape.leaf(x));
    state = step(tape, state, xs.back());
  }
  const Matrix& h = tape.evaluate(state.h);
  const Index hidden = h.cols();
  ContributionProfile prof;
  prof.norm = norm;
  for (const Matrix& x : inputs) prof.jacobians.push_back(Matrix::Zero(hidden, x.cols()));
  for (Index j = 0; j < hidden; ++j) {
    Matrix seed = Matrix::Zero(1, hidden);
    seed(0, j) = 1.0;
    tape.zero_adjoints();
    tape.backward(state.h, seed);
    for (std::size_t i = 0; i < xs.size(); ++i) prof.jacobians[i].row(j) = xs[i].adjoint().row(0);
  }
  for (const Matrix& jac : prof.jacobians) prof.values.push_back(matrix_norm(jac, norm));
  return prof;
}

// Memory-less controller cell (read width 0).
inline ContributionProfile contribution_profile(const ControllerParams& cell,
                                                const std::vector<Matrix>& inputs,
                                                NormKind norm = NormKind::kFrobenius) {
  if (cell.read_dim != 0)
    throw ContractError("contribution_profile: controller must have read width 0");
  return contribution_profile(
      [&](Tape& t) { return initial_state(t, cell.kind, 1, cell.hidden); },
      [&](Tape& t, const ControllerState& s, Var x) { return cell_step(t, s, x, Var{}, cell); },
      inputs, norm);
}

// h_t = W x_t + U h_{t-1} + b, so that dh_T/dx_i = U^(T-i) W.
struct LinearSystem {
  Matrix w;  // hidden x input
  Matrix u;  // hidden x hidden
  Matrix b;  // hidden x 1
};

inline ContributionProfile contribution_profile(const LinearSystem& sys,
                                                const std::vector<Matrix>& inputs,
                                                NormKind norm = NormKind::kFrobenius) {
  if (sys.u.rows() != sys.u.cols() || sys.w.rows() != sys.u.rows() ||
      sys.b.rows() != sys.u.rows() || sys.b.cols() != 1)
    throw DimensionError("linear system: W " + shape_str(sys.w) + ", U " + shape_str(sys.u) +
                         ", b " + shape_str(sys.b));
  const Matrix wt = sys.w.transpose();
  const Matrix ut = sys.u.transpose();
  const Matrix bt = sys.b.transpose();
  return contribution_profile(
      [&](Tape& t) { return ControllerState{t.constant(Matrix::Zero(1, sys.u.rows())), Var{}}; },
      [&](Tape& t, const ControllerState& s, Var x) {
        Var h = add_row(add(matmul(x, t.constant(wt)), matmul(s.h, t.constant(ut))),
                        t.constant(bt));
        return ControllerState{h, Var{}};
      },
      inputs, norm);
}

}  // namespace uwm
