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

// Memory-augmented sequence-to-sequence model and the episode runner that
// applies a writing policy during encoding.

#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uwm/controller.hpp"
#include "uwm/errors.hpp"
#include "uwm/memory.hpp"
#include "uwm/schedule.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

// How slots start each episode: kConstant fills every slot with kMemoryInit;
// kLearned gives slot i its own trained row, so content addressing can tell
// untouched slots apart.
enum class MemoryInit { kConstant, kLearned };

inline MemoryInit parse_memory_init(std::string_view s) {
  if (s == "constant") return MemoryInit::kConstant;
  if (s == "learned") return MemoryInit::kLearned;
  throw ConfigError("unknown memory init '" + std::string(s) + "' (expected learned|constant)");
}

inline std::string_view memory_init_name(MemoryInit m) {
  return m == MemoryInit::kLearned ? "learned" : "constant";
}

struct ModelSpec {
  CellKind cell = CellKind::kLstm;
  Index input_dim = 0;   // includes the end-of-sequence channel
  Index output_dim = 0;
  Index hidden = 0;      // N_h
  Index word = 0;        // W, slot width
  Index slots = 0;       // D
  bool attention = false;  // CUW cache attention parameters present
  MemoryInit memory_init = MemoryInit::kLearned;

  // Identifies every quantity that determines parameter shapes.
  std::string fingerprint() const {
    std::ostringstream os;
    os << "uwm-model/1 controller=" << cell_kind_name(cell) << " input=" << input_dim
       << " output=" << output_dim << " hidden=" << hidden << " word=" << word
       << " slots=" << slots << " attention=" << (attention ? 1 : 0)
       << " memory=" << memory_init_name(memory_init);
    return os.str();
  }
};

class MannModel {
 public:
  // Parameters are created in a fixed order from `seed`; the attention block
  // comes last so that models with and without it share every other value.
  MannModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.input_dim < 1 || spec.output_dim < 1 || spec.hidden < 1 || spec.word < 1 ||
        spec.slots < 1)
      throw ConfigError("model: all dimensions must be >= 1 (got " + spec.fingerprint() + ")");
    Rng rng(seed);
    controller_ = ControllerParams::create(params_, "controller", spec.cell, spec.input_dim,
                                           spec.word, spec.hidden, interface_size(spec.word), rng);
    head_w_ = &params_.add("head.w", init_uniform(spec.hidden + spec.word, spec.output_dim,
                                                  spec.hidden + spec.word, rng));
    head_b_ = &params_.add("head.b", Matrix::Zero(1, spec.output_dim));
    go_ = &params_.add("decoder.go", init_uniform(1, spec.input_dim, spec.input_dim, rng));
    if (spec.memory_init == MemoryInit::kLearned)
      for (Index i = 0; i < spec.slots; ++i)
        memory_init_.push_back(
            &params_.add("memory.init." + std::to_string(i), init_uniform(1, spec.word, 1, rng)));
    if (spec.attention)
      attention_ = AttentionParams::create(params_, "attention", spec.hidden, spec.word,
                                           spec.hidden, rng);
  }

  MannModel(const MannModel&) = delete;
  MannModel& operator=(const MannModel&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ControllerParams& controller() const { return controller_; }
  const AttentionParams* attention() const { return attention_ ? &*attention_ : nullptr; }
  Parameter& head_w() { return *head_w_; }
  Parameter& head_b() { return *head_b_; }
  Parameter& go() { return *go_; }
  const std::vector<Parameter*>& memory_init() const { return memory_init_; }

 private:
  ModelSpec spec_;
  ParameterSet params_;
  ControllerParams controller_;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
  Parameter* go_ = nullptr;
  std::vector<Parameter*> memory_init_;
  std::optional<AttentionParams> attention_;
};

struct EpisodePlan {
  WriteSchedule schedule;    // encode-phase writes; policy kCuw uses schedule.cache
  bool decode_write = true;  // write (as well as read) at every decode step
};

// Memory access at one step, for trace export after evaluation.
struct AccessRecord {
  int t = 0;
  bool wrote = false;
  Var write_weights;
  Var read_weights;
  Var gate;
};

struct EpisodeResult {
  std::vector<Var> outputs;  // one B x output_dim per decode step
  ControllerState final_state;
  MemoryState memory;
  int encode_writes = 0;
  int decode_writes = 0;
  int reads = 0;
  std::vector<int> write_steps;               // encode steps that wrote
  std::vector<std::size_t> cache_after_write;  // CUW cache size right after each write
  std::vector<Var> cached_states;              // every d_j pushed into the CUW cache
  std::vector<AccessRecord> accesses;
};

namespace detail {

struct Access {
  Var write_weights;
  Var read_weights;
  Var gate;
};

// Write then read with the heads parsed from o.
inline Access write_and_read(MemoryState& mem, Var o, Index word, bool do_write) {
  InterfaceVector iv = parse_interface(o, word);
  Access a;
  a.gate = iv.gate;
  if (do_write) {
    a.write_weights = address(mem.slots, iv.write_key, iv.write_strength);
    mem.slots = memory_write(mem.slots, a.write_weights, iv.erase, iv.add, iv.gate);
    mem.write_weights = a.write_weights;
  }
  a.read_weights = address(mem.slots, iv.read_key, iv.read_strength);
  mem.read = memory_read(mem.slots, a.read_weights);
  mem.read_weights = a.read_weights;
  return a;
}

}  // namespace detail

// Encodes `inputs` (T matrices of B x input_dim) under the plan's policy, then
// decodes `decode_steps` outputs fed with the learned go vector plus the
// end-of-sequence channel (last input column).
//
//   regular/uniform/random: at a scheduled step the controller step is
//     followed by write then read; elsewhere only the cell advances and r
//     carries over unchanged.
//   cuw: h_{t-1} is pushed to the cache every step; when t mod L == 0 the
//     attention summary a_t replaces h_{t-1} for that step, memory is written
//     and read, and the cache is cleared.
inline EpisodeResult run_episode(Tape& tape, MannModel& model, const std::vector<Matrix>& inputs,
                                 int decode_steps, const EpisodePlan& plan,
                                 bool record_accesses = false) {
  const ModelSpec& spec = model.spec();
  const WriteSchedule& sched = plan.schedule;
  if (static_cast<int>(inputs.size()) != sched.length)
    throw ContractError("run_episode: schedule length " + std::to_string(sched.length) +
                        " vs input length " + std::to_string(inputs.size()));
  if (inputs.empty()) throw ContractError("run_episode: empty input sequence");
  sched.validate();
  const bool cuw = sched.policy == Policy::kCuw;
  if (cuw && model.attention() == nullptr)
    throw ConfigError("run_episode: cuw policy needs a model built with attention");
  if (cuw && (sched.cache < 1 || sched.cache > uniform_interval(sched.length, sched.slots)))
    throw ConfigError("run_episode: cache size L = " + std::to_string(sched.cache) +
                      " outside [1, " + std::to_string(uniform_interval(sched.length, sched.slots)) +
                      "]");
  const Index batch = inputs.front().rows();
  for (const Matrix& x : inputs)
    if (x.rows() != batch || x.cols() != spec.input_dim)
      throw DimensionError("run_episode: input " + shape_str(x) + " vs [" + std::to_string(batch) +
                           "x" + std::to_string(spec.input_dim) + "]");

  EpisodeResult res;
  const ControllerParams& ctrl = model.controller();
  ControllerState state = initial_state(tape, spec.cell, batch, spec.hidden);
  MemoryState mem;
  if (model.memory_init().empty()) {
    mem = initial_memory(tape, batch, spec.slots, spec.word);
  } else {
    std::vector<Var> rows;
    for (Parameter* p : model.memory_init()) rows.push_back(tape.param(*p));
    mem = initial_memory(tape, batch, rows);
  }
  std::optional<CacheBuffer> cache;
  if (cuw) cache.emplace(static_cast<std::size_t>(sched.cache));

  auto record = [&](int t, bool wrote, const detail::Access& a) {
    if (!record_accesses) return;
    res.accesses.push_back({t, wrote, a.write_weights, a.read_weights, a.gate});
  };

  for (int t = 1; t <= sched.length; ++t) {
    Var x = tape.constant(inputs[static_cast<std::size_t>(t - 1)]);
    if (cuw) {
      cache->push(state.h);
      res.cached_states.push_back(state.h);
      if (t % sched.cache == 0) {
        AttentionResult att = cache_attention(tape, *cache, state.h, mem.read, *model.attention());
        ControllerState surrogate{att.summary, state.c};
        ControllerStep step = controller_step(tape, surrogate, x, mem.read, ctrl);
        state = step.state;
        record(t, true, detail::write_and_read(mem, step.o, spec.word, true));
        ++res.encode_writes;
        ++res.reads;
        res.write_steps.push_back(t);
        cache->clear();
        res.cache_after_write.push_back(cache->size());
      } else {
        state = cell_step(tape, state, x, mem.read, ctrl);
      }
      continue;
    }
    if (sched.writes_at(t)) {
      ControllerStep step = controller_step(tape, state, x, mem.read, ctrl);
      state = step.state;
      record(t, true, detail::write_and_read(mem, step.o, spec.word, true));
      ++res.encode_writes;
      ++res.reads;
      res.write_steps.push_back(t);
    } else {
      state = cell_step(tape, state, x, mem.read, ctrl);
    }
  }

  Matrix eos = Matrix::Zero(batch, spec.input_dim);
  eos.col(spec.input_dim - 1).setOnes();
  Var go = add_row(tape.constant(std::move(eos)), tape.param(model.go()));
  Var head_w = tape.param(model.head_w());
  Var head_b = tape.param(model.head_b());
  for (int s = 1; s <= decode_steps; ++s) {
    ControllerStep step = controller_step(tape, state, go, mem.read, ctrl);
    state = step.state;
    record(sched.length + s, plan.decode_write,
           detail::write_and_read(mem, step.o, spec.word, plan.decode_write));
    if (plan.decode_write) ++res.decode_writes;
    ++res.reads;
    res.outputs.push_back(add_row(matmul(concat({state.h, mem.read}), head_w), head_b));
  }
  res.final_state = state;
  res.memory = mem;
  return res;
}

// Trace rows for batch element 0; the tape must have been evaluated past every
// recorded access.
inline std::vector<TraceRow> collect_trace(const EpisodeResult& res) {
  std::vector<TraceRow> rows;
  for (const AccessRecord& a : res.accesses) {
    const Matrix& rw = a.read_weights.value();
    const double gate = a.gate.value()(0, 0);
    for (Index i = 0; i < rw.cols(); ++i) {
      TraceRow r;
      r.t = a.t;
      r.slot = static_cast<int>(i);
      r.write_w = a.wrote ? a.write_weights.value()(0, i) : 0.0;
      r.read_w = rw(0, i);
      r.gate = gate;
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace uwm
