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

// Seeded generators for the synthetic sequence tasks and their batch
// encoding.
//
//   double   x_1..x_T -> x_1..x_T x_1..x_T
//   copy     x_1..x_T -> x_1..x_T
//   reverse  x_1..x_T -> x_T..x_1
//   add      y_t = (x_t + x_{T-t}) / 2,  t = 1..T/2
//   max      y_t = max(x_{2t-1}, x_{2t}), t = 1..T/2
//   sinusoid y = 5 + A sin(2 pi f x + phi), first T points in, next T out

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "uwm/errors.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

enum class TaskKind { kDouble, kCopy, kReverse, kAdd, kMax, kSinusoid, kSinusoidNoisy };

inline TaskKind parse_task(std::string_view s) {
  if (s == "double") return TaskKind::kDouble;
  if (s == "copy") return TaskKind::kCopy;
  if (s == "reverse") return TaskKind::kReverse;
  if (s == "add") return TaskKind::kAdd;
  if (s == "max") return TaskKind::kMax;
  if (s == "sinusoid") return TaskKind::kSinusoid;
  if (s == "sinusoid-noisy") return TaskKind::kSinusoidNoisy;
  throw ConfigError("unknown task '" + std::string(s) +
                    "' (expected double|copy|reverse|add|max|sinusoid|sinusoid-noisy)");
}

inline std::string_view task_name(TaskKind k) {
  switch (k) {
    case TaskKind::kDouble: return "double";
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kAdd: return "add";
    case TaskKind::kMax: return "max";
    case TaskKind::kSinusoid: return "sinusoid";
    case TaskKind::kSinusoidNoisy: return "sinusoid-noisy";
  }
  return "?";
}

inline bool is_sinusoid(TaskKind k) {
  return k == TaskKind::kSinusoid || k == TaskKind::kSinusoidNoisy;
}

// Targets scored by regression rather than per-step classification.
inline bool is_regression(TaskKind k) { return k == TaskKind::kAdd || is_sinusoid(k); }

inline int output_length(TaskKind k, int length) {
  switch (k) {
    case TaskKind::kDouble: return 2 * length;
    case TaskKind::kAdd:
    case TaskKind::kMax: return length / 2;
    default: return length;
  }
}

struct DiscreteSample {
  TaskKind task = TaskKind::kCopy;
  int lo = 1;
  int hi = 10;
  std::vector<int> input;
  std::vector<double> target;  // reals: add targets may be half-integers
};

// Output sequence for a discrete task.
inline std::vector<double> discrete_target(TaskKind task, const std::vector<int>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<double> y;
  switch (task) {
    case TaskKind::kCopy:
      y.assign(x.begin(), x.end());
      break;
    case TaskKind::kReverse:
      y.assign(x.rbegin(), x.rend());
      break;
    case TaskKind::kDouble:
      y.assign(x.begin(), x.end());
      y.insert(y.end(), x.begin(), x.end());
      break;
    case TaskKind::kAdd:
      if (n % 2 != 0) throw ConfigError("add: sequence length must be even");
      // 1-based (x_t + x_{T-t}) / 2; x_0 does not exist, so t = T/2 pairs x_{T/2} with itself.
      for (int t = 1; t <= n / 2; ++t) y.push_back((x[t - 1] + x[n - t - 1]) / 2.0);
      break;
    case TaskKind::kMax:
      if (n % 2 != 0) throw ConfigError("max: sequence length must be even");
      for (int t = 1; t <= n / 2; ++t) y.push_back(std::max(x[2 * t - 2], x[2 * t - 1]));
      break;
    default:
      throw ContractError("discrete_target: '" + std::string(task_name(task)) +
                          "' is not a discrete task");
  }
  return y;
}

// Default token range: [1, 50] for max, [1, 10] otherwise.
inline std::pair<int, int> default_range(TaskKind k) {
  return k == TaskKind::kMax ? std::pair{1, 50} : std::pair{1, 10};
}

inline std::vector<DiscreteSample> gen_discrete(TaskKind task, int length, int lo, int hi,
                                                std::uint64_t seed, int count) {
  if (is_sinusoid(task)) throw ContractError("gen_discrete: sinusoid is not a discrete task");
  if (length < 2) throw ConfigError("gen_discrete: T must be >= 2");
  if ((task == TaskKind::kAdd || task == TaskKind::kMax) && length % 2 != 0)
    throw ConfigError("gen_discrete: " + std::string(task_name(task)) + " needs an even T, got " +
                      std::to_string(length));
  if (lo > hi) throw ConfigError("gen_discrete: empty token range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> token(lo, hi);
  std::vector<DiscreteSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    DiscreteSample s;
    s.task = task;
    s.lo = lo;
    s.hi = hi;
    s.input.resize(static_cast<std::size_t>(length));
    for (int& v : s.input) v = token(rng);
    s.target = discrete_target(task, s.input);
    out.push_back(std::move(s));
  }
  return out;
}

struct SinusoidSample {
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
  bool noisy = false;
  std::vector<double> clean_input;  // y_1..y_T before noise
  std::vector<double> input;        // y_1..y_T as observed
  std::vector<double> target;       // y_{T+1}..y_{2T}
};

inline double sinusoid_value(double amplitude, double frequency, double phase, double x) {
  return 5.0 + amplitude * std::sin(2.0 * std::numbers::pi * frequency * x + phase);
}

// A ~ U(1,5), f ~ U(10,30), phi ~ U(0,100); x_t = (t + e1)/1000 with
// e1 ~ U(-1,1) per point. Noise e2 ~ U(-2,2) only touches the input half.
inline std::vector<SinusoidSample> gen_sinusoid(int length, std::uint64_t seed, bool noisy,
                                                int count) {
  if (length < 1) throw ConfigError("gen_sinusoid: T must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(1.0, 5.0), freq(10.0, 30.0), phase(0.0, 100.0),
      jitter(-1.0, 1.0), noise(-2.0, 2.0);
  std::vector<SinusoidSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SinusoidSample s;
    s.amplitude = amp(rng);
    s.frequency = freq(rng);
    s.phase = phase(rng);
    s.noisy = noisy;
    for (int t = 1; t <= 2 * length; ++t) {
      const double x = (t + jitter(rng)) / 1000.0;
      const double y = sinusoid_value(s.amplitude, s.frequency, s.phase, x);
      if (t <= length) {
        s.clean_input.push_back(y);
        s.input.push_back(noisy ? y + noise(rng) : y);
      } else {
        s.target.push_back(y);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct TaskSpec {
  TaskKind task = TaskKind::kCopy;
  int length = 20;  // T
  int lo = 1;
  int hi = 10;

  int vocab() const { return hi - lo + 1; }
  // One-hot tokens (or one real channel) plus the end-of-sequence channel.
  Index input_dim() const { return is_sinusoid(task) ? 2 : vocab() + 1; }
  Index output_dim() const { return is_regression(task) ? 1 : vocab(); }
  int decode_steps() const { return output_length(task, length); }

  // Regression targets are trained as (y - center) / scale.
  double center() const { return is_sinusoid(task) ? 5.0 : 0.5 * (lo + hi); }
  double scale() const { return is_sinusoid(task) ? 5.0 : std::max(0.5 * (hi - lo), 1.0); }
};

// Time-major batch: inputs[t] is B x input_dim; each decode step has either
// class labels or normalized regression targets.
struct Batch {
  std::vector<Matrix> inputs;
  std::vector<std::vector<int>> labels;  // classification
  std::vector<Matrix> targets;           // regression, B x 1, normalized
  std::vector<Matrix> raw_targets;       // regression, B x 1, task units
};

inline Batch encode_discrete(const TaskSpec& spec, const std::vector<DiscreteSample>& samples) {
  const Index b = static_cast<Index>(samples.size());
  const int steps = spec.decode_steps();
  Batch batch;
  for (int t = 0; t < spec.length; ++t) {
    Matrix x = Matrix::Zero(b, spec.input_dim());
    for (Index r = 0; r < b; ++r) x(r, samples[r].input[t] - spec.lo) = 1.0;
    batch.inputs.push_back(std::move(x));
  }
  for (int s = 0; s < steps; ++s) {
    if (is_regression(spec.task)) {
      Matrix raw(b, 1);
      for (Index r = 0; r < b; ++r) raw(r, 0) = samples[r].target[s];
      batch.targets.push_back((raw.array() - spec.center()) / spec.scale());
      batch.raw_targets.push_back(std::move(raw));
    } else {
      std::vector<int> l(static_cast<std::size_t>(b));
      for (Index r = 0; r < b; ++r) l[r] = static_cast<int>(samples[r].target[s]) - spec.lo;
      batch.labels.push_back(std::move(l));
    }
  }
  return batch;
}

inline Batch encode_sinusoid(const TaskSpec& spec, const std::vector<SinusoidSample>& samples) {
  const Index b = static_cast<Index>(samples.size());
  Batch batch;
  for (int t = 0; t < spec.length; ++t) {
    Matrix x = Matrix::Zero(b, 2);
    for (Index r = 0; r < b; ++r) x(r, 0) = (samples[r].input[t] - spec.center()) / spec.scale();
    batch.inputs.push_back(std::move(x));
  }
  for (int s = 0; s < spec.length; ++s) {
    Matrix raw(b, 1);
    for (Index r = 0; r < b; ++r) raw(r, 0) = samples[r].target[s];
    batch.targets.push_back((raw.array() - spec.center()) / spec.scale());
    batch.raw_targets.push_back(std::move(raw));
  }
  return batch;
}

inline Batch make_batch(const TaskSpec& spec, std::uint64_t seed, int count) {
  if (is_sinusoid(spec.task))
    return encode_sinusoid(spec, gen_sinusoid(spec.length, seed,
                                              spec.task == TaskKind::kSinusoidNoisy, count));
  return encode_discrete(spec, gen_discrete(spec.task, spec.length, spec.lo, spec.hi, seed, count));
}

// SplitMix64 finalizer, for deriving independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace uwm
