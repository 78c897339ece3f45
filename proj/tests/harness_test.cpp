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


#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "uwm/checkpoint.hpp"
#include "uwm/config.hpp"
#include "uwm/optim.hpp"
#include "uwm/train.hpp"

namespace uwm {
namespace {

namespace fs = std::filesystem;
using testing::param_grad_error;
using testing::random_matrix;

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(::testing::TempDir()) / ("uwm_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TEST(Config, ParsesKeyValueText) {
  ExperimentConfig c;
  apply_config_text(c, "# comment\ntask = max\nT=30\n D = 5 \nlr = 0.01  # inline\nseeds = 1, 2,3\n"
                       "decode-write = off\nmemory-init = constant\n");
  EXPECT_EQ(c.task, "max");
  EXPECT_EQ(c.length, 30);
  EXPECT_EQ(c.slots, 5);
  EXPECT_DOUBLE_EQ(c.lr, 0.01);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_FALSE(c.decode_write);
  EXPECT_EQ(c.task_spec().hi, 50);
  EXPECT_EQ(c.effective_cache(), 5);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsBadInput) {
  ExperimentConfig c;
  EXPECT_THROW(set_config_value(c, "colour", "red"), ConfigError);
  EXPECT_THROW(set_config_value(c, "T", "ten"), ConfigError);
  EXPECT_THROW(set_config_value(c, "lr", "1e-3x"), ConfigError);
  EXPECT_THROW(set_config_value(c, "trace", "maybe"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "no equals sign"), ConfigError);
  EXPECT_THROW(load_config_file("/nonexistent/uwm.cfg"), ConfigError);

  auto invalid = [](auto mutate) {
    ExperimentConfig c;
    mutate(c);
    return [c] { c.validate(); };
  };
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.task = "add"; c.length = 7; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.slots = 0; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.lr = 0; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.clip = -1; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.cache = 5; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.policy = "sometimes"; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.controller = "gru"; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.optimizer = "lbfgs"; })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.seeds.clear(); })(), ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.policy = "random"; c.length = 4; c.slots = 4; })(),
               ConfigError);
  EXPECT_THROW(invalid([](ExperimentConfig& c) { c.lo = 5; c.hi = 3; })(), ConfigError);
}

TEST(Optim, SgdStep) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Matrix::Constant(1, 1, 1.0));
  Optimizer opt(ps, {OptimizerKind::kSgd, 0.1});
  p.grad(0, 0) = 2.0;
  opt.step();
  EXPECT_DOUBLE_EQ(p.value(0, 0), 0.8);
  p.grad.setZero();
  opt.step();
  EXPECT_DOUBLE_EQ(p.value(0, 0), 0.8);
  EXPECT_THROW(Optimizer(ps, {OptimizerKind::kSgd, 0.0}), ConfigError);
}

TEST(Optim, AdamFirstStepsMatchHandComputation) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Matrix::Constant(1, 2, 0.0));
  const double lr = 1e-3;
  Optimizer opt(ps, {OptimizerKind::kAdam, lr});
  const double g1[2] = {0.5, -3.0}, g2[2] = {0.1, 2.0};
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {0, 0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    for (int k = 0; k < 2; ++k) {
      p.grad(0, k) = g[k];
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      const double mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
      x[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step();
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(p.value(0, k), x[k], 1e-15);
  }
}

TEST(Optim, AdamFirstStepIsLearningRate) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Matrix::Zero(1, 3));
  Optimizer opt(ps, {OptimizerKind::kAdam, 0.01});
  p.grad << 4.0, -0.2, 1e-3;
  opt.step();
  EXPECT_NEAR(p.value(0, 0), -0.01, 1e-9);
  EXPECT_NEAR(p.value(0, 1), 0.01, 1e-9);
  EXPECT_NEAR(p.value(0, 2), -0.01, 1e-6);
}

TEST(Optim, RmspropStep) {
  ParameterSet ps;
  Parameter& p = ps.add("p", Matrix::Zero(1, 1));
  Optimizer opt(ps, {OptimizerKind::kRmsprop, 0.01});
  p.grad(0, 0) = 2.0;
  opt.step();
  EXPECT_NEAR(p.value(0, 0), -0.01 * 2.0 / (std::sqrt(0.1 * 4.0) + 1e-8), 1e-15);
}

TEST(Optim, NonFiniteGradientNamesParameter) {
  ParameterSet ps;
  Parameter& a = ps.add("alpha", Matrix::Ones(1, 1));
  ps.add("beta", Matrix::Ones(1, 1)).grad(0, 0) = std::nan("");
  Optimizer opt(ps, {});
  a.grad(0, 0) = 1.0;
  try {
    opt.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'beta'"), std::string::npos) << e.what();
  }
  EXPECT_EQ(a.value(0, 0), 1.0);
}

TEST(Clip, RescalesAboveThreshold) {
  ParameterSet ps;
  Parameter& a = ps.add("a", Matrix::Zero(1, 2));
  Parameter& b = ps.add("b", Matrix::Zero(2, 1));
  a.grad << 12, 0;
  b.grad << 0, 16;
  const Matrix a0 = a.grad, b0 = b.grad;
  EXPECT_DOUBLE_EQ(clip_gradients(ps, 10.0), 20.0);
  EXPECT_NEAR(global_grad_norm(ps), 10.0, 1e-12);
  const double dot = a.grad.cwiseProduct(a0).sum() + b.grad.cwiseProduct(b0).sum();
  EXPECT_NEAR(dot / (10.0 * 20.0), 1.0, 1e-12);

  a.grad << 3, 0;
  b.grad << 0, 4;
  EXPECT_DOUBLE_EQ(clip_gradients(ps, 10.0), 5.0);
  EXPECT_EQ(a.grad(0, 0), 3.0);
  EXPECT_EQ(b.grad(1, 0), 4.0);
  EXPECT_THROW(clip_gradients(ps, 0.0), ContractError);
}

ExperimentConfig tiny_config(const std::string& policy) {
  ExperimentConfig c;
  c.task = "copy";
  c.length = 6;
  c.slots = 2;
  c.hidden = 4;
  c.word = 3;
  c.batch = 2;
  c.policy = policy;
  return c;
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const fs::path dir = scratch("ckpt_roundtrip");
  ExperimentConfig c = tiny_config("cuw");
  MannModel a(c.model_spec(), 1), b(c.model_spec(), 2);
  const std::string fp = a.spec().fingerprint();
  save_checkpoint((dir / "m").string(), a.params(), fp, 17);
  CheckpointHeader h = load_checkpoint((dir / "m").string(), b.params(), fp);
  EXPECT_EQ(h.iteration, 17u);
  EXPECT_EQ(h.version, kCheckpointVersion);
  for (std::size_t i = 0; i < a.params().size(); ++i)
    EXPECT_TRUE((a.params()[i].value.array() == b.params()[i].value.array()).all()) << a.params()[i].name;
  EXPECT_EQ(read_checkpoint_header((dir / "m").string()).fingerprint, fp);
}

TEST(Checkpoint, IncompatibleModelNamesBothFingerprints) {
  const fs::path dir = scratch("ckpt_compat");
  ExperimentConfig c = tiny_config("uniform");
  MannModel a(c.model_spec(), 1);
  save_checkpoint((dir / "m").string(), a.params(), a.spec().fingerprint(), 1);
  c.hidden = 5;
  MannModel b(c.model_spec(), 1);
  const Matrix before = b.params()[0].value;
  try {
    load_checkpoint((dir / "m").string(), b.params(), b.spec().fingerprint());
    FAIL() << "expected CheckpointCompatibilityError";
  } catch (const CheckpointCompatibilityError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("hidden=4"), std::string::npos) << what;
    EXPECT_NE(what.find("hidden=5"), std::string::npos) << what;
  }
  EXPECT_TRUE((b.params()[0].value.array() == before.array()).all());
}

TEST(Checkpoint, DamagedFiles) {
  const fs::path dir = scratch("ckpt_damage");
  ExperimentConfig c = tiny_config("regular");
  MannModel a(c.model_spec(), 1);
  const std::string fp = a.spec().fingerprint();
  const std::string bytes = encode_checkpoint(a.params(), fp, 3);
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream((dir / name).string(), std::ios::binary) << data;
    return (dir / name).string();
  };
  std::string v2 = bytes;
  v2[8] = 2;
  EXPECT_THROW(load_checkpoint(write("v2", v2), a.params(), fp), CheckpointVersionError);
  EXPECT_THROW(load_checkpoint(write("cut", bytes.substr(0, bytes.size() - 5)), a.params(), fp),
               CheckpointCorruptionError);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(load_checkpoint(write("magic", magic), a.params(), fp), CheckpointCorruptionError);
  EXPECT_THROW(load_checkpoint(write("tail", bytes + "zz"), a.params(), fp), CheckpointCorruptionError);
  EXPECT_THROW(load_checkpoint((dir / "missing").string(), a.params(), fp), CheckpointError);
}

TEST(Checkpoint, SizeTracksParameterCount) {
  ParameterSet ps;
  ps.add("w", Matrix::Zero(100, 1000));
  const std::string bytes = encode_checkpoint(ps, "fp", 0);
  EXPECT_GE(bytes.size(), 800000u);
  EXPECT_LT(bytes.size(), 800100u);
}

class FullModelGradient : public ::testing::TestWithParam<const char*> {};

TEST_P(FullModelGradient, MatchesFiniteDifferences) {
  ExperimentConfig c = tiny_config(GetParam());
  const TaskSpec spec = c.task_spec();
  MannModel model(c.model_spec(), 3);
  EpisodePlan plan{c.schedule(4)};
  const Batch b = make_batch(spec, 5, 2);
  const double err = param_grad_error(model.params(), [&](Tape& t) {
    return build_loss(t, model, spec, b, plan).loss;
  });
  EXPECT_LT(err, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Policies, FullModelGradient,
                         ::testing::Values("regular", "uniform", "random", "cuw"));

TEST(Evaluate, UntrainedCopyIsChance) {
  ExperimentConfig c;
  c.hidden = 16;
  c.word = 8;
  Trainer tr(c, 1);
  const double acc = tr.evaluate(1000).value();
  EXPECT_NEAR(acc, 10.0, 3.0);
}

TEST(Evaluate, ScoresAddByTolerance) {
  TaskSpec spec{TaskKind::kAdd, 4, 1, 10};
  Batch b;
  b.raw_targets = {Matrix::Constant(2, 1, 4.5)};
  Tape t;
  Matrix pred(2, 1);
  pred << (4.6 - 5.5) / 4.5, (5.0 - 5.5) / 4.5;
  Var out = t.constant(pred);
  t.evaluate(out);
  Score s = score_outputs(spec, b, {out});
  EXPECT_DOUBLE_EQ(s.value(), 50.0);
}

ExperimentConfig run_config(const fs::path& dir, const std::string& name) {
  ExperimentConfig c = tiny_config("uniform");
  c.runs_dir = dir.string();
  c.name = name;
  c.iterations = 6;
  c.log_every = 2;
  c.checkpoint_every = 3;
  c.eval_samples = 4;
  c.wall_clock = false;
  c.seeds = {1, 2};
  return c;
}

TEST(Train, MetricsAreDeterministic) {
  const fs::path dir = scratch("train_det");
  train(run_config(dir, "a"));
  train(run_config(dir, "b"));
  const std::string a = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(a, slurp(dir / "b" / "metrics.csv"));
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsHeader);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
  EXPECT_TRUE(fs::exists(dir / "a" / "seed-1" / "ckpt-3"));
  EXPECT_TRUE(fs::exists(dir / "a" / "seed-2" / "ckpt-6"));
}

TEST(Train, DivergenceAbortsWithCheckpoint) {
  const fs::path dir = scratch("train_nan");
  ExperimentConfig c = run_config(dir, "nan");
  c.seeds = {1};
  c.optimizer = "sgd";
  c.lr = 1e308;
  c.checkpoint_every = 1;
  c.iterations = 20;
  try {
    train(c);
    FAIL() << "expected NumericAbort";
  } catch (const NumericAbort& e) {
    EXPECT_GE(e.iteration(), 2);
    EXPECT_FALSE(e.last_checkpoint().empty());
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(Train, MetricsRowFormat) {
  MetricsRow r;
  r.iter = 100;
  r.seconds = 1.5;
  r.loss = 0.25;
  r.metric = 97.5;
  r.mem_writes = 5;
  r.seed = 3;
  EXPECT_EQ(format_metrics_row(r), "100,1.500,0.25,97.5,5,3");
}

}  // namespace
}  // namespace uwm
