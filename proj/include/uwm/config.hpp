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

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uwm/controller.hpp"
#include "uwm/errors.hpp"
#include "uwm/model.hpp"
#include "uwm/schedule.hpp"
#include "uwm/tasks.hpp"

namespace uwm {

enum class OptimizerKind { kAdam, kRmsprop, kSgd };

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "rmsprop") return OptimizerKind::kRmsprop;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected adam|rmsprop|sgd)");
}

inline std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kRmsprop: return "rmsprop";
    case OptimizerKind::kSgd: return "sgd";
  }
  return "?";
}

struct ExperimentConfig {
  std::string task = "copy";
  int length = 20;        // T
  int lo = 0;             // token range; 0/0 selects the task default
  int hi = 0;
  int slots = 4;          // D
  int hidden = 64;        // N_h
  int word = 16;          // W
  int cache = 0;          // L; 0 selects floor(T / (D + 1))
  std::string policy = "uniform";
  std::string controller = "lstm";
  std::string optimizer = "adam";
  double lr = 1e-3;
  double clip = 10.0;
  int batch = 32;
  int iterations = 2000;
  std::vector<std::uint64_t> seeds = {1};
  bool decode_write = true;
  std::string name = "run";
  std::string runs_dir = "runs";
  int log_every = 100;
  int checkpoint_every = 1000;
  int eval_samples = 1000;
  bool wall_clock = true;  // off writes 0 in the seconds column
  bool trace = false;
  std::string memory_init = "learned";

  TaskSpec task_spec() const {
    TaskSpec s;
    s.task = parse_task(task);
    s.length = length;
    auto [dlo, dhi] = default_range(s.task);
    s.lo = (lo == 0 && hi == 0) ? dlo : lo;
    s.hi = (lo == 0 && hi == 0) ? dhi : hi;
    return s;
  }

  Policy policy_kind() const { return parse_policy(policy); }

  int effective_cache() const { return cache > 0 ? cache : uniform_interval(length, slots); }

  ModelSpec model_spec() const {
    const TaskSpec ts = task_spec();
    ModelSpec m;
    m.cell = parse_cell_kind(controller);
    m.input_dim = ts.input_dim();
    m.output_dim = ts.output_dim();
    m.hidden = hidden;
    m.word = word;
    m.slots = slots;
    m.attention = policy_kind() == Policy::kCuw;
    m.memory_init = parse_memory_init(memory_init);
    return m;
  }

  // Encode-phase schedule for one run; the random policy is drawn once per seed.
  WriteSchedule schedule(std::uint64_t seed) const {
    switch (policy_kind()) {
      case Policy::kRegular: return regular_schedule(length, slots);
      case Policy::kUniform: return uniform_schedule(length, slots);
      case Policy::kRandom: return random_schedule(length, slots, mix_seed(seed, 0x5C4ED));
      case Policy::kCuw: return cuw_schedule(length, slots, effective_cache());
      case Policy::kCustom: break;
    }
    throw ConfigError("schedule: unsupported policy");
  }

  void validate() const {
    const TaskSpec ts = task_spec();
    if (length < 2) throw ConfigError("config: T must be >= 2");
    if ((ts.task == TaskKind::kAdd || ts.task == TaskKind::kMax) && length % 2 != 0)
      throw ConfigError("config: " + task + " needs an even T");
    if (ts.lo > ts.hi) throw ConfigError("config: empty token range");
    if (slots < 1) throw ConfigError("config: slots (D) must be >= 1");
    if (hidden < 1 || word < 1) throw ConfigError("config: hidden and word sizes must be >= 1");
    if (batch < 1) throw ConfigError("config: batch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("config: learning rate must be > 0");
    if (!(clip > 0.0)) throw ConfigError("config: clip norm must be > 0");
    if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
    if (seeds.empty()) throw ConfigError("config: at least one seed is required");
    if (log_every < 1 || checkpoint_every < 1)
      throw ConfigError("config: log and checkpoint intervals must be >= 1");
    const int max_cache = uniform_interval(length, slots);
    if (cache < 0 || cache > max_cache)
      throw ConfigError("config: cache L = " + std::to_string(cache) + " exceeds max(1, floor(T/(D+1))) = " +
                        std::to_string(max_cache));
    parse_cell_kind(controller);
    parse_optimizer(optimizer);
    parse_memory_init(memory_init);
    if (policy_kind() == Policy::kRandom &&
        static_cast<double>(slots + 1) / static_cast<double>(length) > 1.0)
      throw ConfigError("config: random policy needs (D+1)/T <= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config: bad value '" + v + "' for '" + key + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad value '" + v + "' for '" + key + "'");
  }
}

inline bool parse_switch(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects on|off, got '" + v + "'");
}

}  // namespace detail

// Applies one `key = value` setting. Keys use the long CLI option names.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  const std::string v = detail::trim(value);
  if (key == "task") c.task = v;
  else if (key == "length" || key == "T") c.length = parse_number<int>(key, v);
  else if (key == "lo") c.lo = parse_number<int>(key, v);
  else if (key == "hi") c.hi = parse_number<int>(key, v);
  else if (key == "slots" || key == "D") c.slots = parse_number<int>(key, v);
  else if (key == "hidden") c.hidden = parse_number<int>(key, v);
  else if (key == "word") c.word = parse_number<int>(key, v);
  else if (key == "cache" || key == "L") c.cache = parse_number<int>(key, v);
  else if (key == "policy") c.policy = v;
  else if (key == "controller") c.controller = v;
  else if (key == "optimizer") c.optimizer = v;
  else if (key == "lr") c.lr = detail::parse_real(key, v);
  else if (key == "clip") c.clip = detail::parse_real(key, v);
  else if (key == "batch") c.batch = parse_number<int>(key, v);
  else if (key == "iterations" || key == "iters") c.iterations = parse_number<int>(key, v);
  else if (key == "seed" || key == "seeds") {
    c.seeds.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) c.seeds.push_back(parse_number<std::uint64_t>(key, item));
    }
  } else if (key == "decode-write") c.decode_write = detail::parse_switch(key, v);
  else if (key == "name") c.name = v;
  else if (key == "runs-dir") c.runs_dir = v;
  else if (key == "log-every") c.log_every = parse_number<int>(key, v);
  else if (key == "checkpoint-every") c.checkpoint_every = parse_number<int>(key, v);
  else if (key == "eval-samples") c.eval_samples = parse_number<int>(key, v);
  else if (key == "wall-clock") c.wall_clock = detail::parse_switch(key, v);
  else if (key == "trace") c.trace = detail::parse_switch(key, v);
  else if (key == "memory-init") c.memory_init = v;
  else throw ConfigError("config: unknown key '" + key + "'");
}

// Plain-text `key = value` lines; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& c, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    set_config_value(c, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

inline ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(base, ss.str());
  return base;
}

}  // namespace uwm
