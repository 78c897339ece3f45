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

// Write schedules over an encoding of length T, the hidden-state cache used
// by cached uniform writing, and the local attention that summarizes it.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uwm/controller.hpp"
#include "uwm/errors.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

enum class Policy { kRegular, kUniform, kRandom, kCuw, kCustom };

inline Policy parse_policy(std::string_view s) {
  if (s == "regular") return Policy::kRegular;
  if (s == "uniform") return Policy::kUniform;
  if (s == "random") return Policy::kRandom;
  if (s == "cuw") return Policy::kCuw;
  throw ConfigError("unknown policy '" + std::string(s) + "' (expected regular|uniform|random|cuw)");
}

inline std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::kRegular: return "regular";
    case Policy::kUniform: return "uniform";
    case Policy::kRandom: return "random";
    case Policy::kCuw: return "cuw";
    case Policy::kCustom: return "custom";
  }
  return "?";
}

// Uniform write interval floor(T / (D + 1)), never below one step.
inline int uniform_interval(int length, int slots) {
  return std::max(1, length / (slots + 1));
}

// Sorted 1-based write timesteps K_1 < ... < K_n within [1, T].
struct WriteSchedule {
  int length = 0;  // T
  int slots = 0;   // D
  Policy policy = Policy::kCustom;
  int cache = 0;   // L, CUW only
  std::vector<int> steps;

  bool writes_at(int t) const { return std::binary_search(steps.begin(), steps.end(), t); }
  std::size_t write_count() const { return steps.size(); }

  // l_1 = K_1, l_i = K_i - K_{i-1}, then the tail T - K_n when non-empty.
  // Always sums to T.
  std::vector<int> intervals() const {
    std::vector<int> out;
    int prev = 0;
    for (int k : steps) {
      out.push_back(k - prev);
      prev = k;
    }
    if (length - prev > 0 || out.empty()) out.push_back(length - prev);
    return out;
  }

  std::string steps_string(char sep = ' ') const {
    std::ostringstream os;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i) os << sep;
      os << steps[i];
    }
    return os.str();
  }

  void validate() const {
    if (length < 1) throw ContractError("schedule: length must be >= 1");
    int prev = 0;
    for (int k : steps) {
      if (k <= prev || k > length)
        throw ContractError("schedule: write steps must be strictly increasing within [1, " +
                            std::to_string(length) + "]");
      prev = k;
    }
  }
};

inline WriteSchedule make_schedule(int length, int slots, std::vector<int> steps) {
  WriteSchedule s;
  s.length = length;
  s.slots = slots;
  s.steps = std::move(steps);
  s.validate();
  return s;
}

// Write and read at every step.
inline WriteSchedule regular_schedule(int length, int slots) {
  if (length < 1) throw ConfigError("regular_schedule: T must be >= 1");
  WriteSchedule s;
  s.length = length;
  s.slots = slots;
  s.policy = Policy::kRegular;
  for (int t = 1; t <= length; ++t) s.steps.push_back(t);
  return s;
}

// Writes at t = floor(T/(D+1)) k, k = 1, 2, ... while t <= T. Degrades to
// every step when the interval rounds to zero; D = 0 has no writes.
inline WriteSchedule uniform_schedule(int length, int slots) {
  if (length < 1) throw ConfigError("uniform_schedule: T must be >= 1");
  if (slots < 0) throw ConfigError("uniform_schedule: D must be >= 0");
  WriteSchedule s;
  s.length = length;
  s.slots = slots;
  s.policy = Policy::kUniform;
  if (slots == 0) return s;
  const int interval = uniform_interval(length, slots);
  for (int t = interval; t <= length; t += interval) s.steps.push_back(t);
  return s;
}

// Each step is independently a write with probability (D + 1) / T.
inline WriteSchedule random_schedule(int length, int slots, std::uint64_t seed) {
  if (length < 1) throw ConfigError("random_schedule: T must be >= 1");
  if (slots < 0) throw ConfigError("random_schedule: D must be >= 0");
  const double p = static_cast<double>(slots + 1) / static_cast<double>(length);
  if (p > 1.0)
    throw ConfigError("random_schedule: write probability (D+1)/T = " + std::to_string(p) +
                      " exceeds 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  WriteSchedule s;
  s.length = length;
  s.slots = slots;
  s.policy = Policy::kRandom;
  for (int t = 1; t <= length; ++t)
    if (coin(rng)) s.steps.push_back(t);
  return s;
}

// Cached uniform writing fires whenever t mod L == 0.
inline WriteSchedule cuw_schedule(int length, int slots, int cache) {
  if (length < 1) throw ConfigError("cuw_schedule: T must be >= 1");
  const int max_cache = uniform_interval(length, slots);
  if (cache < 1 || cache > max_cache)
    throw ConfigError("cuw_schedule: cache size L = " + std::to_string(cache) +
                      " outside [1, " + std::to_string(max_cache) + "]");
  WriteSchedule s;
  s.length = length;
  s.slots = slots;
  s.policy = Policy::kCuw;
  s.cache = cache;
  for (int t = cache; t <= length; t += cache) s.steps.push_back(t);
  return s;
}

// Controller hidden states d_1..d_j collected between writes, oldest first.
class CacheBuffer {
 public:
  explicit CacheBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("cache: capacity must be >= 1");
  }

  void push(Var h) {
    if (items_.size() == capacity_)
      throw StateError("cache: push into a full cache of size " + std::to_string(capacity_));
    items_.push_back(h);
  }
  void clear() { items_.clear(); }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const std::vector<Var>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::vector<Var> items_;
};

// Score v^T tanh(h W + d U + r V) between the query and one cached state.
struct AttentionParams {
  Index hidden = 0;
  Index read_dim = 0;
  Index attn_dim = 0;
  Parameter* w = nullptr;  // hidden x attn
  Parameter* u = nullptr;  // hidden x attn
  Parameter* v = nullptr;  // read x attn
  Parameter* score = nullptr;  // attn x 1

  static AttentionParams create(ParameterSet& set, const std::string& prefix, Index hidden,
                                Index read_dim, Index attn_dim, Rng& rng) {
    AttentionParams p;
    p.hidden = hidden;
    p.read_dim = read_dim;
    p.attn_dim = attn_dim;
    const Index fan_in = 2 * hidden + read_dim;
    p.w = &set.add(prefix + ".w", init_uniform(hidden, attn_dim, fan_in, rng));
    p.u = &set.add(prefix + ".u", init_uniform(hidden, attn_dim, fan_in, rng));
    p.v = &set.add(prefix + ".v", init_uniform(read_dim, attn_dim, fan_in, rng));
    p.score = &set.add(prefix + ".score", init_uniform(attn_dim, 1, attn_dim, rng));
    return p;
  }
};

struct AttentionResult {
  Var summary;  // a_t, B x hidden
  Var weights;  // B x |cache|
};

// a = sum_j softmax_j(score(h_prev, d_j, r_prev)) d_j
inline AttentionResult cache_attention(Tape& tape, const CacheBuffer& cache, Var h_prev, Var r_prev,
                                       const AttentionParams& p) {
  if (cache.empty()) throw StateError("cache_attention: cache is empty");
  if (h_prev.cols() != p.hidden)
    throw DimensionError("cache_attention: query " + shape_str(h_prev.rows(), h_prev.cols()) +
                         " vs hidden size " + std::to_string(p.hidden));
  if (r_prev.cols() != p.read_dim)
    throw DimensionError("cache_attention: read " + shape_str(r_prev.rows(), r_prev.cols()) +
                         " vs read size " + std::to_string(p.read_dim));
  Var query = add(matmul(h_prev, tape.param(*p.w)), matmul(r_prev, tape.param(*p.v)));
  Var u = tape.param(*p.u);
  Var v = tape.param(*p.score);
  std::vector<Var> scores;
  for (const Var& d : cache.items()) {
    if (d.cols() != p.hidden || d.rows() != h_prev.rows())
      throw DimensionError("cache_attention: cached state " + shape_str(d.rows(), d.cols()) +
                           " vs query " + shape_str(h_prev.rows(), h_prev.cols()));
    scores.push_back(matmul(tanh(add(query, matmul(d, u))), v));
  }
  AttentionResult out;
  out.weights = softmax(scores.size() == 1 ? scores.front() : concat(scores));
  for (std::size_t j = 0; j < cache.size(); ++j) {
    Var term = mul_col(cache.items()[j], column(out.weights, static_cast<Index>(j)));
    out.summary = out.summary.valid() ? add(out.summary, term) : term;
  }
  return out;
}

}  // namespace uwm
