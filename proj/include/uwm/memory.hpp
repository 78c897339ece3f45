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

// Slot memory with content-based addressing and gated erase/add writes.
//
// Memory is held as D slot matrices of shape (batch x W). One read head
// and one write head, both addressed by
//
//   w = softmax(beta * cos(key, M_i))
//
// and the write is M_i' = M_i * (1 - g w_i e) + g w_i a.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "uwm/errors.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

inline constexpr double kMemoryInit = 1e-6;

// Width of the controller output o_t that drives one read and one write head.
inline constexpr Index interface_size(Index word) { return 4 * word + 3; }

struct InterfaceVector {
  Var read_key;        // B x W
  Var read_strength;   // B x 1, >= 1
  Var write_key;       // B x W
  Var write_strength;  // B x 1, >= 1
  Var erase;           // B x W, in [0, 1]
  Var add;             // B x W
  Var gate;            // B x 1, in [0, 1]
};

// Splits o = [k_r | b_r | k_w | b_w | e | a | g] and applies the activations.
inline InterfaceVector parse_interface(Var o, Index word) {
  if (o.cols() != interface_size(word))
    throw DimensionError("parse_interface: " + shape_str(o.rows(), o.cols()) + " vs [" +
                         std::to_string(o.rows()) + "x" + std::to_string(interface_size(word)) +
                         "]");
  InterfaceVector v;
  Index at = 0;
  auto take = [&](Index n) {
    Var s = slice(o, at, n);
    at += n;
    return s;
  };
  v.read_key = take(word);
  v.read_strength = add_scalar(softplus(take(1)), 1.0);
  v.write_key = take(word);
  v.write_strength = add_scalar(softplus(take(1)), 1.0);
  v.erase = sigmoid(take(word));
  v.add = take(word);
  v.gate = sigmoid(take(1));
  return v;
}

struct MemoryState {
  std::vector<Var> slots;  // D entries, each B x W
  Var read;                // B x W, last read vector
  Var read_weights;        // B x D
  Var write_weights;       // B x D

  Index slot_count() const { return static_cast<Index>(slots.size()); }
};

namespace detail {

inline MemoryState with_uniform_read(Tape& tape, MemoryState m, Index batch) {
  const Index slots = m.slot_count();
  const Matrix uniform = Matrix::Constant(batch, slots, 1.0 / static_cast<double>(slots));
  m.read_weights = tape.constant(uniform);
  m.write_weights = tape.constant(uniform);
  Var r;
  for (Index i = 0; i < slots; ++i) {
    Var term = scale(m.slots[static_cast<std::size_t>(i)], 1.0 / static_cast<double>(slots));
    r = r.valid() ? add(r, term) : term;
  }
  m.read = r;
  return m;
}

}  // namespace detail

// Every slot holds kMemoryInit. The initial read is the uniform-weight read
// of that memory.
inline MemoryState initial_memory(Tape& tape, Index batch, Index slots, Index word) {
  if (slots < 1) throw ContractError("memory: need at least one slot");
  MemoryState m;
  for (Index i = 0; i < slots; ++i)
    m.slots.push_back(tape.constant(Matrix::Constant(batch, word, kMemoryInit)));
  return detail::with_uniform_read(tape, std::move(m), batch);
}

// Slot i starts from the 1 x W row `rows[i]`, broadcast over the batch.
inline MemoryState initial_memory(Tape& tape, Index batch, const std::vector<Var>& rows) {
  if (rows.empty()) throw ContractError("memory: need at least one slot");
  MemoryState m;
  for (const Var& row : rows) {
    if (row.rows() != 1)
      throw DimensionError("memory: initial slot " + shape_str(row.rows(), row.cols()) +
                           " must be a single row");
    m.slots.push_back(add_row(tape.constant(Matrix::Zero(batch, row.cols())), row));
  }
  return detail::with_uniform_read(tape, std::move(m), batch);
}

// softmax over slots of strength * cosine(key, slot); returns B x D.
inline Var address(std::span<const Var> slots, Var key, Var strength) {
  if (slots.empty()) throw ContractError("address: memory has no slots");
  if (strength.cols() != 1 || strength.rows() != key.rows())
    throw DimensionError("address: strength " + shape_str(strength.rows(), strength.cols()) +
                         " vs key " + shape_str(key.rows(), key.cols()));
  Var k = guard(key, "address key");
  Var beta = guard(strength, "address strength", /*require_positive=*/true);
  std::vector<Var> sims;
  sims.reserve(slots.size());
  for (const Var& slot : slots) {
    if (slot.rows() != key.rows() || slot.cols() != key.cols())
      throw DimensionError("address: slot " + shape_str(slot.rows(), slot.cols()) + " vs key " +
                           shape_str(key.rows(), key.cols()));
    sims.push_back(cosine_rows(k, slot));
  }
  Var s = sims.size() == 1 ? sims.front() : concat(sims);
  return softmax(mul_col(s, beta));
}

// r = sum_i w_i M_i
inline Var memory_read(std::span<const Var> slots, Var weights) {
  if (weights.cols() != static_cast<Index>(slots.size()))
    throw DimensionError("memory_read: weights " + shape_str(weights.rows(), weights.cols()) +
                         " vs " + std::to_string(slots.size()) + " slots");
  Var r;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Var term = mul_col(slots[i], column(weights, static_cast<Index>(i)));
    r = r.valid() ? add(r, term) : term;
  }
  return r;
}

// M_i' = M_i * (1 - g w_i e) + g w_i a
inline std::vector<Var> memory_write(std::span<const Var> slots, Var weights, Var erase, Var add_vec,
                                     Var gate) {
  if (weights.cols() != static_cast<Index>(slots.size()))
    throw DimensionError("memory_write: weights " + shape_str(weights.rows(), weights.cols()) +
                         " vs " + std::to_string(slots.size()) + " slots");
  if (gate.cols() != 1 || gate.rows() != weights.rows())
    throw DimensionError("memory_write: gate " + shape_str(gate.rows(), gate.cols()) +
                         " vs weights " + shape_str(weights.rows(), weights.cols()));
  std::vector<Var> out;
  out.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Var& m = slots[i];
    if (erase.rows() != m.rows() || erase.cols() != m.cols())
      throw DimensionError("memory_write: erase " + shape_str(erase.rows(), erase.cols()) +
                           " vs slot " + shape_str(m.rows(), m.cols()));
    if (add_vec.rows() != m.rows() || add_vec.cols() != m.cols())
      throw DimensionError("memory_write: add " + shape_str(add_vec.rows(), add_vec.cols()) +
                           " vs slot " + shape_str(m.rows(), m.cols()));
    Var gw = mul(gate, column(weights, static_cast<Index>(i)));
    Var erased = sub(m, mul(m, mul_col(erase, gw)));
    out.push_back(add(erased, mul_col(add_vec, gw)));
  }
  return out;
}

// One row of the per-step trace, for batch element 0.
struct TraceRow {
  int t = 0;
  int slot = 0;
  double write_w = 0.0;
  double read_w = 0.0;
  double gate = 0.0;
};

inline void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows) {
  os << "t,slot,write_w,read_w,gate\n";
  char buf[160];
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g\n", r.t, r.slot, r.write_w, r.read_w,
                  r.gate);
    os << buf;
  }
}

}  // namespace uwm
