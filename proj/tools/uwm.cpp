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


// Command-line front end: train, eval, gen, schedule, bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uwm/checkpoint.hpp"
#include "uwm/config.hpp"
#include "uwm/errors.hpp"
#include "uwm/schedule.hpp"
#include "uwm/tasks.hpp"
#include "uwm/theory.hpp"
#include "uwm/train.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// `--key value` overrides, applied on top of the optional config file.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;

  void bind(CLI::App& app, const std::vector<std::string>& keys) {
    app.add_option("--config", config_path, "plain-text key = value configuration file");
    for (const std::string& k : keys) app.add_option("--" + k, values[k]);
  }

  uwm::ExperimentConfig resolve(CLI::App& app) const {
    uwm::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = uwm::load_config_file(config_path);
    for (const auto& [k, v] : values)
      if (app.count("--" + k) > 0) uwm::set_config_value(cfg, k, v);
    return cfg;
  }
};

const std::vector<std::string> kTrainKeys = {
    "task",  "length",     "lo",        "hi",         "slots",       "hidden",     "word",
    "cache", "policy",     "controller", "optimizer", "lr",          "clip",       "batch",
    "iters", "seed",       "decode-write", "name",    "runs-dir",    "log-every",  "checkpoint-every",
    "eval-samples", "wall-clock", "trace", "memory-init"};

int run_train(CLI::App& app, const Overrides& ov) {
  const uwm::ExperimentConfig cfg = ov.resolve(app);
  cfg.validate();
  const auto runs = uwm::train(cfg, &std::cerr);
  std::cout << "seed,final_loss,test_metric,metric_kind,mem_writes,checkpoint\n";
  for (const auto& r : runs)
    std::printf("%llu,%.9g,%.9g,%s,%d,%s\n", static_cast<unsigned long long>(r.seed), r.final_loss,
                r.test_metric, r.metric_is_mse ? "mse" : "accuracy", r.encode_writes,
                r.checkpoint.c_str());
  return 0;
}

int run_eval(CLI::App& app, const Overrides& ov, const std::string& checkpoint, int samples) {
  const uwm::ExperimentConfig cfg = ov.resolve(app);
  cfg.validate();
  const std::uint64_t seed = cfg.seeds.front();
  uwm::MannModel model(cfg.model_spec(), uwm::init_seed(seed));
  if (!checkpoint.empty()) uwm::load_checkpoint(checkpoint, model.params(), model.spec().fingerprint());
  uwm::EpisodePlan plan{cfg.schedule(seed), cfg.decode_write};
  const int n = samples > 0 ? samples : cfg.eval_samples;
  const uwm::Score s = uwm::evaluate_model(model, cfg.task_spec(), plan, n, seed, cfg.batch);
  std::cout << "task,samples,metric_kind,metric\n";
  std::printf("%s,%d,%s,%.9g\n", cfg.task.c_str(), n, s.mse ? "mse" : "accuracy", s.value());
  return 0;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

std::string join_real(const std::vector<double>& v) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9f", v[i]);
    out += (i ? " " : "") + std::string(buf);
  }
  return out;
}

std::string join_token(const std::vector<double>& v) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%g", v[i]);
    out += (i ? " " : "") + std::string(buf);
  }
  return out;
}

int run_gen(CLI::App& app, const Overrides& ov, int count, const std::string& split,
            const std::string& out_path) {
  const uwm::ExperimentConfig cfg = ov.resolve(app);
  const uwm::TaskSpec ts = cfg.task_spec();
  if (count < 1) throw uwm::ConfigError("gen: count must be >= 1");
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw uwm::ConfigError("gen: cannot write '" + out_path + "'");
  }
  std::ostream& os = out_path.empty() ? std::cout : file;
  os << "split,task,seed,index,input,target\n";
  for (std::uint64_t seed : cfg.seeds) {
    const std::string prefix = split + "," + cfg.task + "," + std::to_string(seed) + ",";
    if (uwm::is_sinusoid(ts.task)) {
      const auto samples = uwm::gen_sinusoid(ts.length, seed, ts.task == uwm::TaskKind::kSinusoidNoisy, count);
      for (int i = 0; i < count; ++i)
        os << prefix << i << ',' << join_real(samples[i].input) << ',' << join_real(samples[i].target) << '\n';
    } else {
      const auto samples = uwm::gen_discrete(ts.task, ts.length, ts.lo, ts.hi, seed, count);
      for (int i = 0; i < count; ++i)
        os << prefix << i << ',' << join(samples[i].input) << ',' << join_token(samples[i].target) << '\n';
    }
  }
  return 0;
}

int run_schedule(CLI::App& app, const Overrides& ov) {
  const uwm::ExperimentConfig cfg = ov.resolve(app);
  std::cout << "policy,T,D,L,write_steps\n";
  for (std::uint64_t seed : cfg.seeds) {
    const uwm::WriteSchedule s = cfg.schedule(seed);
    std::printf("%s,%d,%d,%d,%s\n", cfg.policy.c_str(), cfg.length, cfg.slots,
                s.policy == uwm::Policy::kCuw ? s.cache : 0, s.steps_string(' ').c_str());
  }
  return 0;
}

// D distinct write steps drawn uniformly from [1, T-1].
uwm::WriteSchedule random_placement(int length, int slots, std::uint64_t seed) {
  std::vector<int> pool;
  for (int t = 1; t < length; ++t) pool.push_back(t);
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(slots));
  std::sort(pool.begin(), pool.end());
  return uwm::make_schedule(length, slots, pool);
}

int run_bound(CLI::App& app, const Overrides& ov, const std::vector<double>& lambdas, double c) {
  const uwm::ExperimentConfig cfg = ov.resolve(app);
  const int T = cfg.length, D = cfg.slots;
  if (T < 2 || D < 1 || D > T - 1) throw uwm::ConfigError("bound: need T >= 2 and 1 <= D <= T-1");
  std::cout << "T,D,lambda,schedule,I_lambda,g_max,is_optimal\n";
  const int interval = uwm::uniform_interval(T, D);
  std::vector<int> uw;
  for (int k = 1; k <= D && k * interval < T; ++k) uw.push_back(k * interval);
  for (double lambda : lambdas) {
    const uwm::TheoryParams p{lambda, c};
    p.validate();
    std::vector<std::pair<std::string, uwm::WriteSchedule>> rows;
    rows.emplace_back("uniform", uwm::make_schedule(T, static_cast<int>(uw.size()), uw));
    rows.back().second.slots = D;
    rows.emplace_back("random", random_placement(T, D, cfg.seeds.front()));
    std::optional<double> best;
    try {
      const auto b = uwm::brute_force_best_schedule(T, D, p);
      best = b.value;
      rows.emplace_back("best", b.schedule);
    } catch (const uwm::SizeError& e) {
      std::cerr << "bound: " << e.what() << "; skipping enumeration\n";
    }
    const double g = uwm::g_lambda(T, D, p);
    for (const auto& [name, sched] : rows) {
      const double v = uwm::avg_contribution(sched, p);
      const char* opt = !best ? "unknown" : (std::abs(v - *best) <= 1e-12 ? "true" : "false");
      std::printf("%d,%d,%.9g,%s:%s,%.12g,%.12g,%s\n", T, D, lambda, name.c_str(),
                  sched.steps_string(' ').c_str(), v, g, opt);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uwm: uniform and cached uniform writing for slot-memory networks"};
  app.require_subcommand(1);

  Overrides train_ov, eval_ov, gen_ov, sched_ov, bound_ov;
  CLI::App* train = app.add_subcommand("train", "train one model per seed");
  train_ov.bind(*train, kTrainKeys);

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on fresh test sequences");
  eval_ov.bind(*eval, kTrainKeys);
  std::string checkpoint;
  int samples = 0;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (omit to score an untrained model)");
  eval->add_option("--samples", samples, "number of test sequences");

  CLI::App* gen = app.add_subcommand("gen", "write task samples as CSV");
  gen_ov.bind(*gen, {"task", "length", "lo", "hi", "seed"});
  int count = 10;
  std::string split = "train", out_path;
  gen->add_option("--count", count, "samples per seed");
  gen->add_option("--split", split, "split label written in the first column");
  gen->add_option("--out", out_path, "output file (default stdout)");

  CLI::App* sched = app.add_subcommand("schedule", "print the write steps of a policy");
  sched_ov.bind(*sched, {"policy", "length", "slots", "cache", "seed"});

  CLI::App* bound = app.add_subcommand("bound", "tabulate the average-contribution bound");
  bound_ov.bind(*bound, {"length", "slots", "seed"});
  std::vector<double> lambdas = {0.9};
  double c = 1.0;
  bound->add_option("--lambda", lambdas, "decay rate(s)")->delimiter(',');
  bound->add_option("--C", c, "contribution constant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return run_train(*train, train_ov);
    if (*eval) return run_eval(*eval, eval_ov, checkpoint, samples);
    if (*gen) return run_gen(*gen, gen_ov, count, split, out_path);
    if (*sched) return run_schedule(*sched, sched_ov);
    if (*bound) return run_bound(*bound, bound_ov, lambdas, c);
  } catch (const uwm::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const uwm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const uwm::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
