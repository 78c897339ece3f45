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

// Recurrent controller cells. The read vector enters each cell by
// concatenation with the step input: pre = [x; r] W + h U + b.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <string_view>

#include "uwm/errors.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

using Rng = std::mt19937_64;

enum class CellKind { kRnn, kLstm };

inline CellKind parse_cell_kind(std::string_view s) {
  if (s == "rnn") return CellKind::kRnn;
  if (s == "lstm") return CellKind::kLstm;
  if (s == "gru")
    throw ConfigError("controller 'gru' is not supported; use 'rnn' or 'lstm'");
  throw ConfigError("unknown controller '" + std::string(s) + "' (expected rnn or lstm)");
}

inline std::string_view cell_kind_name(CellKind k) { return k == CellKind::kRnn ? "rnn" : "lstm"; }

// Uniform in [-s, s] with s = 1/sqrt(fan_in).
inline Matrix init_uniform(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-s, s);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

struct ControllerState {
  Var h;
  Var c;  // LSTM only
};

struct ControllerParams {
  CellKind kind = CellKind::kLstm;
  Index input_dim = 0;
  Index read_dim = 0;
  Index hidden = 0;
  Index output_dim = 0;
  // Gate blocks are laid out [f | i | o | z] for the LSTM.
  Parameter* w = nullptr;      // (input + read) x gates*hidden
  Parameter* u = nullptr;      // hidden x gates*hidden
  Parameter* b = nullptr;      // 1 x gates*hidden
  Parameter* out_w = nullptr;  // (hidden + read) x output
  Parameter* out_b = nullptr;  // 1 x output

  Index gates() const { return kind == CellKind::kLstm ? 4 : 1; }

  static ControllerParams create(ParameterSet& set, const std::string& prefix, CellKind kind,
                                 Index input_dim, Index read_dim, Index hidden, Index output_dim,
                                 Rng& rng) {
    ControllerParams p;
    p.kind = kind;
    p.input_dim = input_dim;
    p.read_dim = read_dim;
    p.hidden = hidden;
    p.output_dim = output_dim;
    const Index g = p.gates() * hidden;
    const Index fan_in = input_dim + read_dim + hidden;
    p.w = &set.add(prefix + ".w", init_uniform(input_dim + read_dim, g, fan_in, rng));
    p.u = &set.add(prefix + ".u", init_uniform(hidden, g, fan_in, rng));
    p.b = &set.add(prefix + ".b", init_uniform(1, g, fan_in, rng));
    if (output_dim > 0) {
      p.out_w = &set.add(prefix + ".out_w",
                         init_uniform(hidden + read_dim, output_dim, hidden + read_dim, rng));
      p.out_b = &set.add(prefix + ".out_b", init_uniform(1, output_dim, hidden + read_dim, rng));
    }
    return p;
  }
};

inline ControllerState initial_state(Tape& tape, CellKind kind, Index batch, Index hidden) {
  ControllerState s;
  s.h = tape.constant(Matrix::Zero(batch, hidden));
  if (kind == CellKind::kLstm) s.c = tape.constant(Matrix::Zero(batch, hidden));
  return s;
}

namespace detail {

inline Var cell_input(Var x, Var r, const ControllerParams& p) {
  if (x.cols() != p.input_dim)
    throw DimensionError("controller: input " + shape_str(x.rows(), x.cols()) + " vs expected [" +
                         std::to_string(x.rows()) + "x" + std::to_string(p.input_dim) + "]");
  if (p.read_dim == 0) return x;
  if (!r.valid() || r.cols() != p.read_dim || r.rows() != x.rows())
    throw DimensionError("controller: read vector " +
                         (r.valid() ? shape_str(r.rows(), r.cols()) : std::string("[none]")) +
                         " vs expected [" + std::to_string(x.rows()) + "x" +
                         std::to_string(p.read_dim) + "]");
  return concat({x, r});
}

inline Var preactivation(Tape& tape, Var h_prev, Var x, Var r, const ControllerParams& p) {
  if (h_prev.cols() != p.hidden || h_prev.rows() != x.rows())
    throw DimensionError("controller: hidden " + shape_str(h_prev.rows(), h_prev.cols()) +
                         " vs expected [" + std::to_string(x.rows()) + "x" +
                         std::to_string(p.hidden) + "]");
  Var in = cell_input(x, r, p);
  return add_row(add(matmul(in, tape.param(*p.w)), matmul(h_prev, tape.param(*p.u))),
                 tape.param(*p.b));
}

}  // namespace detail

// h' = tanh([x; r] W + h U + b)
inline ControllerState rnn_step(Tape& tape, const ControllerState& state, Var x, Var r,
                                const ControllerParams& p) {
  if (p.kind != CellKind::kRnn) throw ContractError("rnn_step: parameters are not an RNN cell");
  return {tanh(detail::preactivation(tape, state.h, x, r, p)), Var{}};
}

// c' = f*c + i*z, h' = o*tanh(c') with f, i, o sigmoid gates and z = tanh(.).
inline ControllerState lstm_step(Tape& tape, const ControllerState& state, Var x, Var r,
                                 const ControllerParams& p) {
  if (p.kind != CellKind::kLstm) throw ContractError("lstm_step: parameters are not an LSTM cell");
  if (!state.c.valid()) throw ContractError("lstm_step: state has no cell vector");
  if (state.c.rows() != state.h.rows() || state.c.cols() != state.h.cols())
    throw DimensionError("lstm_step: cell " + shape_str(state.c.rows(), state.c.cols()) +
                         " vs hidden " + shape_str(state.h.rows(), state.h.cols()));
  const Index n = p.hidden;
  Var pre = detail::preactivation(tape, state.h, x, r, p);
  Var f = sigmoid(slice(pre, 0, n));
  Var i = sigmoid(slice(pre, n, n));
  Var o = sigmoid(slice(pre, 2 * n, n));
  Var z = tanh(slice(pre, 3 * n, n));
  Var c = add(mul(f, state.c), mul(i, z));
  return {mul(o, tanh(c)), c};
}

inline ControllerState cell_step(Tape& tape, const ControllerState& state, Var x, Var r,
                                 const ControllerParams& p) {
  return p.kind == CellKind::kLstm ? lstm_step(tape, state, x, r, p)
                                   : rnn_step(tape, state, x, r, p);
}

struct ControllerStep {
  ControllerState state;
  Var o;
};

// Advances the cell from `surrogate` (h_{t-1}, or an attention result standing
// in for it) and projects o = [h'; r] W_o + b_o.
inline ControllerStep controller_step(Tape& tape, const ControllerState& surrogate, Var x, Var r,
                                      const ControllerParams& p) {
  if (p.out_w == nullptr) throw ContractError("controller_step: controller has no output head");
  ControllerStep s;
  s.state = cell_step(tape, surrogate, x, r, p);
  Var joined = p.read_dim == 0 ? s.state.h : concat({s.state.h, r});
  s.o = add_row(matmul(joined, tape.param(*p.out_w)), tape.param(*p.out_b));
  return s;
}

inline Var controller_output(Tape& tape, const ControllerState& surrogate, Var r, Var x,
                             const ControllerParams& p) {
  return controller_step(tape, surrogate, x, r, p).o;
}

}  // namespace uwm
