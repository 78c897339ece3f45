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


// Training and evaluation loop: losses, scoring, metrics CSV, checkpoints.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "uwm/checkpoint.hpp"
#include "uwm/config.hpp"
#include "uwm/errors.hpp"
#include "uwm/model.hpp"
#include "uwm/optim.hpp"
#include "uwm/tasks.hpp"
#include "uwm/tensor.hpp"

namespace uwm {

// Training aborted on a non-finite loss or gradient.
class NumericAbort : public NumericError {
 public:
  NumericAbort(const std::string& what, long iteration, std::string last_checkpoint)
      : NumericError(what), iteration_(iteration), last_checkpoint_(std::move(last_checkpoint)) {}
  long iteration() const { return iteration_; }
  const std::string& last_checkpoint() const { return last_checkpoint_; }

 private:
  long iteration_;
  std::string last_checkpoint_;
};

struct MetricsRow {
  long iter = 0;
  double seconds = 0.0;
  double loss = 0.0;
  double metric = 0.0;  // accuracy in percent, or MSE for sinusoid
  int mem_writes = 0;   // encode-phase writes per episode
  std::uint64_t seed = 0;
};

inline constexpr const char* kMetricsHeader = "iter,seconds,loss,metric,mem_writes,seed";

inline std::string format_metrics_row(const MetricsRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%ld,%.3f,%.9g,%.9g,%d,%llu", r.iter, r.seconds, r.loss, r.metric,
                r.mem_writes, static_cast<unsigned long long>(r.seed));
  return buf;
}

// Running sum for accuracy (percent of exact matches) or mean squared error.
struct Score {
  bool mse = false;
  double sum = 0.0;
  double count = 0.0;

  double value() const {
    if (count == 0.0) return 0.0;
    return mse ? sum / count : 100.0 * sum / count;
  }
  void merge(const Score& o) {
    sum += o.sum;
    count += o.count;
  }
};

// Add predictions count as correct within a quarter unit of the half-integer target.
inline constexpr double kAddTolerance = 0.25;

inline Score score_outputs(const TaskSpec& spec, const Batch& batch, const std::vector<Var>& outputs) {
  Score s;
  s.mse = is_sinusoid(spec.task);
  for (std::size_t step = 0; step < outputs.size(); ++step) {
    const Matrix& out = outputs[step].value();
    if (is_regression(spec.task)) {
      const Matrix pred = (out.array() * spec.scale() + spec.center()).matrix();
      const Matrix& raw = batch.raw_targets[step];
      for (Index r = 0; r < pred.rows(); ++r) {
        const double err = pred(r, 0) - raw(r, 0);
        s.sum += s.mse ? err * err : (std::abs(err) < kAddTolerance ? 1.0 : 0.0);
        s.count += 1.0;
      }
    } else {
      for (Index r = 0; r < out.rows(); ++r) {
        Index best = 0;
        out.row(r).maxCoeff(&best);
        s.sum += best == batch.labels[step][static_cast<std::size_t>(r)] ? 1.0 : 0.0;
        s.count += 1.0;
      }
    }
  }
  return s;
}

struct EpisodeLoss {
  Var loss;
  EpisodeResult episode;
};

// Mean over decode steps of cross-entropy (classification) or squared error.
inline EpisodeLoss build_loss(Tape& tape, MannModel& model, const TaskSpec& spec, const Batch& batch,
                              const EpisodePlan& plan, bool record_accesses = false) {
  EpisodeLoss el;
  el.episode = run_episode(tape, model, batch.inputs, spec.decode_steps(), plan, record_accesses);
  const auto& outs = el.episode.outputs;
  for (std::size_t s = 0; s < outs.size(); ++s) {
    Var term = is_regression(spec.task) ? squared_error(outs[s], batch.targets[s])
                                        : softmax_cross_entropy(outs[s], batch.labels[s]);
    el.loss = el.loss.valid() ? add(el.loss, term) : term;
  }
  el.loss = scale(el.loss, 1.0 / static_cast<double>(outs.size()));
  return el;
}

// Seed streams derived from a run seed.
inline std::uint64_t init_seed(std::uint64_t seed) { return mix_seed(seed, 0); }
inline std::uint64_t train_batch_seed(std::uint64_t seed, long iter) {
  return mix_seed(mix_seed(seed, 1), static_cast<std::uint64_t>(iter));
}
inline std::uint64_t test_batch_seed(std::uint64_t seed, long chunk) {
  return mix_seed(mix_seed(seed, 2), static_cast<std::uint64_t>(chunk));
}

// Scores `samples` fresh test sequences in chunks of at most `batch`.
inline Score evaluate_model(MannModel& model, const TaskSpec& spec, const EpisodePlan& plan,
                            int samples, std::uint64_t seed, int batch) {
  if (samples < 1) throw ConfigError("evaluate: sample count must be >= 1");
  if (batch < 1) throw ConfigError("evaluate: batch must be >= 1");
  Score total;
  total.mse = is_sinusoid(spec.task);
  long chunk = 0;
  for (int done = 0; done < samples; done += batch, ++chunk) {
    const int n = std::min(batch, samples - done);
    const Batch b = make_batch(spec, test_batch_seed(seed, chunk), n);
    Tape tape;
    EpisodeResult res = run_episode(tape, model, b.inputs, spec.decode_steps(), plan);
    tape.evaluate(res.outputs.back());
    total.merge(score_outputs(spec, b, res.outputs));
  }
  return total;
}

class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        seed_(seed),
        spec_(cfg.task_spec()),
        model_(cfg.model_spec(), init_seed(seed)),
        optimizer_(model_.params(), OptimizerSettings{parse_optimizer(cfg.optimizer), cfg.lr}) {
    cfg.validate();
    plan_.schedule = cfg.schedule(seed);
    plan_.decode_write = cfg.decode_write;
  }

  struct StepResult {
    double loss = 0.0;
    Score score;
    int encode_writes = 0;
    double grad_norm = 0.0;
  };

  // One clipped optimizer update on a fresh batch. Throws NumericError on a
  // non-finite loss or gradient.
  StepResult step(long iter) {
    const Batch b = make_batch(spec_, train_batch_seed(seed_, iter), cfg_.batch);
    Tape tape;
    EpisodeLoss el = build_loss(tape, model_, spec_, b, plan_);
    StepResult r;
    r.loss = tape.evaluate(el.loss)(0, 0);
    if (!std::isfinite(r.loss))
      throw NumericError("non-finite loss at iteration " + std::to_string(iter));
    r.score = score_outputs(spec_, b, el.episode.outputs);
    r.encode_writes = el.episode.encode_writes;
    model_.params().zero_grad();
    tape.backward(el.loss);
    tape.accumulate_param_grads();
    r.grad_norm = clip_gradients(model_.params(), cfg_.clip);
    optimizer_.step();
    return r;
  }

  Score evaluate(int samples) {
    return evaluate_model(model_, spec_, plan_, samples, seed_, cfg_.batch);
  }

  MannModel& model() { return model_; }
  const TaskSpec& task() const { return spec_; }
  const EpisodePlan& plan() const { return plan_; }
  std::uint64_t seed() const { return seed_; }

 private:
  ExperimentConfig cfg_;
  std::uint64_t seed_;
  TaskSpec spec_;
  MannModel model_;
  Optimizer optimizer_;
  EpisodePlan plan_;
};

struct RunSummary {
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double test_metric = 0.0;
  bool metric_is_mse = false;
  int encode_writes = 0;
  double seconds = 0.0;
  std::string checkpoint;
  std::string run_dir;
};

inline std::string run_directory(const ExperimentConfig& cfg) {
  return (std::filesystem::path(cfg.runs_dir) / cfg.name).string();
}

// Writes the evaluation trace of one test sequence (batch element 0).
inline std::string export_trace(MannModel& model, const TaskSpec& spec, const EpisodePlan& plan,
                                std::uint64_t seed, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const Batch b = make_batch(spec, test_batch_seed(seed, 0), 1);
  Tape tape;
  EpisodeResult res = run_episode(tape, model, b.inputs, spec.decode_steps(), plan, true);
  tape.evaluate(res.outputs.back());
  const std::string path = (std::filesystem::path(dir) / ("seed-" + std::to_string(seed) + ".csv")).string();
  std::ofstream f(path);
  if (!f) throw ConfigError("trace: cannot write '" + path + "'");
  const auto rows = collect_trace(res);
  write_trace_csv(f, rows);
  return path;
}

// Trains one model per configured seed. Every seed appends to the shared
// metrics.csv; checkpoints go to ckpt-<iter> (or seed-<s>/ckpt-<iter> when
// several seeds share the run).
inline std::vector<RunSummary> train(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path dir = run_directory(cfg);
  fs::create_directories(dir);
  std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
  if (!metrics) throw ConfigError("train: cannot write '" + (dir / "metrics.csv").string() + "'");
  metrics << kMetricsHeader << '\n';

  std::vector<RunSummary> out;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path ckpt_dir = cfg.seeds.size() > 1 ? dir / ("seed-" + std::to_string(seed)) : dir;
    fs::create_directories(ckpt_dir);
    Trainer trainer(cfg, seed);
    const std::string fp = trainer.model().spec().fingerprint();
    std::string last_ckpt;
    auto save = [&](long iter) {
      const std::string path = (ckpt_dir / ("ckpt-" + std::to_string(iter))).string();
      save_checkpoint(path, trainer.model().params(), fp, static_cast<std::uint64_t>(iter));
      last_ckpt = path;
    };

    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    double window_loss = 0.0;
    Score window_score;
    int window = 0;
    double last_loss = 0.0;
    int writes = 0;
    for (long iter = 1; iter <= cfg.iterations; ++iter) {
      Trainer::StepResult r;
      try {
        r = trainer.step(iter);
      } catch (const NumericError& e) {
        throw NumericAbort(std::string(e.what()) + " (iteration " + std::to_string(iter) +
                               ", last good checkpoint: " +
                               (last_ckpt.empty() ? std::string("none") : last_ckpt) + ")",
                           iter, last_ckpt);
      }
      window_loss += r.loss;
      window_score.mse = r.score.mse;
      window_score.merge(r.score);
      ++window;
      last_loss = r.loss;
      writes = r.encode_writes;
      if (iter % cfg.log_every == 0 || iter == cfg.iterations) {
        MetricsRow row;
        row.iter = iter;
        row.seconds = cfg.wall_clock ? elapsed() : 0.0;
        row.loss = window_loss / window;
        row.metric = window_score.value();
        row.mem_writes = writes;
        row.seed = seed;
        metrics << format_metrics_row(row) << '\n';
        metrics.flush();
        if (log) *log << "seed " << seed << " iter " << iter << " loss " << row.loss << " metric "
                      << row.metric << '\n';
        window_loss = 0.0;
        window_score = Score{};
        window = 0;
      }
      if (iter % cfg.checkpoint_every == 0) save(iter);
    }
    if (cfg.iterations % cfg.checkpoint_every != 0 || cfg.iterations == 0) save(cfg.iterations);

    RunSummary s;
    s.seed = seed;
    s.final_loss = last_loss;
    s.seconds = elapsed();
    const Score test = trainer.evaluate(cfg.eval_samples);
    s.test_metric = test.value();
    s.metric_is_mse = test.mse;
    s.encode_writes = writes;
    s.checkpoint = last_ckpt;
    s.run_dir = dir.string();
    if (cfg.trace) export_trace(trainer.model(), trainer.task(), trainer.plan(), seed, (dir / "trace").string());
    out.push_back(s);
  }
  return out;
}

}  // namespace uwm
