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


#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "uwm/model.hpp"
#include "uwm/schedule.hpp"

namespace uwm {
namespace {

using testing::random_matrix;

TEST(Uniform, FiftyStepsFourSlots) {
  WriteSchedule s = uniform_schedule(50, 4);
  EXPECT_EQ(s.steps, (std::vector<int>{10, 20, 30, 40, 50}));
  EXPECT_EQ(s.policy, Policy::kUniform);
}

TEST(Uniform, NoSlotsNoWrites) { EXPECT_TRUE(uniform_schedule(10, 0).steps.empty()); }

TEST(Uniform, SmallIntervalAndErrors) {
  EXPECT_EQ(uniform_interval(30, 14), 2);
  EXPECT_EQ(uniform_schedule(30, 14).write_count(), 15u);
  EXPECT_EQ(uniform_interval(3, 10), 1);
  EXPECT_EQ(uniform_schedule(7, 1).steps, (std::vector<int>{3, 6}));
  EXPECT_THROW(uniform_schedule(0, 1), ConfigError);
  EXPECT_THROW(uniform_schedule(5, -1), ConfigError);
}

TEST(Uniform, GridInvariants) {
  for (int T = 1; T <= 60; ++T) {
    for (int D = 1; D <= 12; ++D) {
      WriteSchedule s = uniform_schedule(T, D);
      const int interval = uniform_interval(T, D);
      EXPECT_EQ(static_cast<int>(s.write_count()), T / interval) << T << " " << D;
      if (T % (D + 1) == 0) {
        EXPECT_EQ(static_cast<int>(s.write_count()), D + 1);
      }
      const std::vector<int> iv = s.intervals();
      int total = 0;
      for (int l : iv) total += l;
      EXPECT_EQ(total, T);
      const auto [lo, hi] = std::minmax_element(iv.begin(), iv.end());
      EXPECT_LE(*hi - *lo, interval);
      EXPECT_NO_THROW(s.validate());
    }
  }
}

TEST(Regular, EveryStep) {
  WriteSchedule s = regular_schedule(7, 2);
  EXPECT_EQ(s.write_count(), 7u);
  for (int t = 1; t <= 7; ++t) EXPECT_TRUE(s.writes_at(t));
}

TEST(Random, DeterministicPerSeed) {
  EXPECT_EQ(random_schedule(50, 4, 99).steps, random_schedule(50, 4, 99).steps);
  EXPECT_NE(random_schedule(200, 9, 1).steps, random_schedule(200, 9, 2).steps);
}

TEST(Random, MeanWriteCount) {
  const int draws = 10000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i)
    total += static_cast<double>(random_schedule(50, 4, static_cast<std::uint64_t>(i)).write_count());
  const double p = 5.0 / 50.0;
  const double sigma = std::sqrt(50.0 * p * (1.0 - p) / draws);
  EXPECT_NEAR(total / draws, 5.0, 5.0 * sigma);
}

TEST(Random, ProbabilityAboveOne) {
  EXPECT_THROW(random_schedule(4, 4, 1), ConfigError);
  EXPECT_EQ(random_schedule(5, 4, 1).write_count(), 5u);
}

TEST(Cuw, ScheduleAndRange) {
  WriteSchedule s = cuw_schedule(50, 4, 10);
  EXPECT_EQ(s.steps, (std::vector<int>{10, 20, 30, 40, 50}));
  EXPECT_EQ(s.cache, 10);
  EXPECT_THROW(cuw_schedule(50, 4, 11), ConfigError);
  EXPECT_THROW(cuw_schedule(50, 4, 0), ConfigError);
  for (int L = 1; L <= 10; ++L) EXPECT_EQ(static_cast<int>(cuw_schedule(50, 4, L).write_count()), 50 / L);
}

TEST(Schedule, ValidateRejectsBadSteps) {
  EXPECT_THROW(make_schedule(5, 1, {3, 3}), ContractError);
  EXPECT_THROW(make_schedule(5, 1, {6}), ContractError);
  EXPECT_THROW(make_schedule(5, 1, {0}), ContractError);
  EXPECT_EQ(make_schedule(5, 1, {2}).intervals(), (std::vector<int>{2, 3}));
}

TEST(CacheBufferTest, CapacityAndState) {
  EXPECT_THROW(CacheBuffer(0), ConfigError);
  Tape t;
  CacheBuffer c(2);
  c.push(t.constant(Matrix::Zero(1, 1)));
  c.push(t.constant(Matrix::Zero(1, 1)));
  EXPECT_THROW(c.push(t.constant(Matrix::Zero(1, 1))), StateError);
  c.clear();
  EXPECT_TRUE(c.empty());
}

struct AttentionFixture {
  ParameterSet set;
  Rng rng{5};
  AttentionParams p = AttentionParams::create(set, "att", 3, 2, 4, rng);
};

TEST(Attention, SingletonReturnsElement) {
  AttentionFixture f;
  std::mt19937_64 rng(1);
  Tape t;
  CacheBuffer c(1);
  const Matrix d = random_matrix(2, 3, rng);
  c.push(t.constant(d));
  AttentionResult a = cache_attention(t, c, t.constant(random_matrix(2, 3, rng)),
                                      t.constant(random_matrix(2, 2, rng)), f.p);
  EXPECT_TRUE(t.evaluate(a.summary).isApprox(d, 0.0));
}

TEST(Attention, ZeroParamsGiveMean) {
  AttentionFixture f;
  for (std::size_t i = 0; i < f.set.size(); ++i) f.set[i].value.setZero();
  std::mt19937_64 rng(2);
  Tape t;
  CacheBuffer c(3);
  std::vector<Matrix> ds;
  for (int j = 0; j < 3; ++j) {
    ds.push_back(random_matrix(2, 3, rng));
    c.push(t.constant(ds.back()));
  }
  AttentionResult a = cache_attention(t, c, t.constant(random_matrix(2, 3, rng)),
                                      t.constant(random_matrix(2, 2, rng)), f.p);
  EXPECT_TRUE(t.evaluate(a.summary).isApprox((ds[0] + ds[1] + ds[2]) / 3.0, 1e-14));
}

// Only the score vector and U are non-zero, so score_j = v . tanh(d_j U).
TEST(Attention, HandScores) {
  AttentionFixture f;
  for (std::size_t i = 0; i < f.set.size(); ++i) f.set[i].value.setZero();
  f.p.u->value(0, 0) = 1.0;
  f.p.score->value(0, 0) = 2.0 / std::tanh(1.0);
  Tape t;
  CacheBuffer c(2);
  Matrix d1(1, 3), d2(1, 3);
  d1 << 1, 0, 0;
  d2 << 0, 5, 0;
  c.push(t.constant(d1));
  c.push(t.constant(d2));
  AttentionResult a = cache_attention(t, c, t.constant(Matrix::Zero(1, 3)),
                                      t.constant(Matrix::Zero(1, 2)), f.p);
  const Matrix& w = t.evaluate(a.weights);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(w(0, 0), e2 / (e2 + 1.0), 1e-12);
  EXPECT_NEAR(w(0, 0), 0.880797, 1e-6);
  EXPECT_NEAR(w(0, 1), 0.119203, 1e-6);
  EXPECT_TRUE(t.evaluate(a.summary).isApprox(w(0, 0) * d1 + w(0, 1) * d2, 1e-14));
}

TEST(Attention, WeightsAreSimplex) {
  AttentionFixture f;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tape t;
    CacheBuffer c(5);
    for (int j = 0; j < 5; ++j) c.push(t.constant(random_matrix(3, 3, rng, -3, 3)));
    AttentionResult a = cache_attention(t, c, t.constant(random_matrix(3, 3, rng)),
                                        t.constant(random_matrix(3, 2, rng)), f.p);
    const Matrix& w = t.evaluate(a.weights);
    for (Index r = 0; r < 3; ++r) {
      EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-9);
      EXPECT_GT(w.row(r).minCoeff(), 0.0);
    }
  }
}

TEST(Attention, EmptyCacheAndShapes) {
  AttentionFixture f;
  Tape t;
  CacheBuffer c(2);
  EXPECT_THROW(cache_attention(t, c, t.constant(Matrix::Zero(1, 3)), t.constant(Matrix::Zero(1, 2)), f.p),
               StateError);
  c.push(t.constant(Matrix::Zero(1, 3)));
  EXPECT_THROW(cache_attention(t, c, t.constant(Matrix::Zero(1, 4)), t.constant(Matrix::Zero(1, 2)), f.p),
               DimensionError);
}

ModelSpec tiny_spec(bool attention) {
  ModelSpec s;
  s.cell = CellKind::kLstm;
  s.input_dim = 4;
  s.output_dim = 3;
  s.hidden = 5;
  s.word = 3;
  s.slots = 2;
  s.attention = attention;
  return s;
}

std::vector<Matrix> random_inputs(int T, Index batch, Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Matrix> xs;
  for (int t = 0; t < T; ++t) xs.push_back(random_matrix(batch, dim, rng));
  return xs;
}

TEST(Episode, CuwWithUnitCacheEqualsRegular) {
  MannModel reg(tiny_spec(false), 7);
  MannModel cuw(tiny_spec(true), 7);
  const auto xs = random_inputs(6, 2, 4, 8);
  EpisodePlan pr{regular_schedule(6, 2)};
  EpisodePlan pc{cuw_schedule(6, 2, 1)};
  Tape t1, t2;
  EpisodeResult a = run_episode(t1, reg, xs, 3, pr);
  EpisodeResult b = run_episode(t2, cuw, xs, 3, pc);
  ASSERT_EQ(a.outputs.size(), b.outputs.size());
  for (std::size_t k = 0; k < a.outputs.size(); ++k) {
    const Matrix& va = t1.evaluate(a.outputs[k]);
    const Matrix& vb = t2.evaluate(b.outputs[k]);
    EXPECT_TRUE((va.array() == vb.array()).all()) << "step " << k;
  }
  EXPECT_EQ(a.encode_writes, b.encode_writes);
}

TEST(Episode, CuwWritesAndClearsCache) {
  MannModel m(tiny_spec(true), 9);
  const auto xs = random_inputs(50, 1, 4, 10);
  EpisodePlan plan{cuw_schedule(50, 4, 10)};
  Tape t;
  EpisodeResult r = run_episode(t, m, xs, 1, plan);
  EXPECT_EQ(r.encode_writes, 5);
  EXPECT_EQ(r.write_steps, (std::vector<int>{10, 20, 30, 40, 50}));
  EXPECT_EQ(r.cache_after_write, (std::vector<std::size_t>(5, 0)));
}

TEST(Episode, WriteCounts) {
  MannModel m(tiny_spec(true), 11);
  const auto xs = random_inputs(50, 1, 4, 12);
  auto count = [&](const WriteSchedule& s) {
    Tape t;
    EpisodePlan plan{s, false};
    EpisodeResult r = run_episode(t, m, xs, 2, plan);
    EXPECT_EQ(r.decode_writes, 0);
    return r.encode_writes;
  };
  EXPECT_EQ(count(regular_schedule(50, 4)), 50);
  EXPECT_EQ(count(uniform_schedule(50, 4)), 5);
  EXPECT_EQ(count(cuw_schedule(50, 4, 3)), 16);
  WriteSchedule rnd = random_schedule(50, 4, 3);
  EXPECT_EQ(count(rnd), static_cast<int>(rnd.write_count()));
}

TEST(Episode, ReadConstantBetweenWrites) {
  MannModel m(tiny_spec(false), 13);
  const auto xs = random_inputs(12, 2, 4, 14);
  for (const WriteSchedule& s : {uniform_schedule(12, 2), random_schedule(12, 2, 5)}) {
    // Snapshot r after every encode step by decoding zero steps on prefixes.
    std::vector<Matrix> reads;
    for (int T = 1; T <= 12; ++T) {
      std::vector<Matrix> prefix(xs.begin(), xs.begin() + T);
      WriteSchedule sub = s;
      sub.length = T;
      sub.steps.erase(std::remove_if(sub.steps.begin(), sub.steps.end(), [&](int k) { return k > T; }),
                      sub.steps.end());
      Tape t;
      EpisodeResult r = run_episode(t, m, prefix, 0, EpisodePlan{sub});
      reads.push_back(t.evaluate(r.memory.read));
    }
    for (int T = 2; T <= 12; ++T) {
      if (!s.writes_at(T)) {
        EXPECT_TRUE((reads[T - 1].array() == reads[T - 2].array()).all()) << "t=" << T;
      }
    }
  }
}

TEST(Episode, GradientReachesCachedStates) {
  MannModel m(tiny_spec(true), 15);
  const auto xs = random_inputs(6, 1, 4, 16);
  Tape t;
  EpisodeResult r = run_episode(t, m, xs, 2, EpisodePlan{cuw_schedule(6, 2, 2)});
  Var loss = sum(add(r.outputs[0], r.outputs[1]));
  t.evaluate(loss);
  t.backward(loss);
  ASSERT_EQ(r.cached_states.size(), 6u);
  for (int w = 0; w < 3; ++w) {
    double norm = 0.0;
    for (int j = 0; j < 2; ++j) norm += r.cached_states[static_cast<std::size_t>(2 * w + j)].adjoint().norm();
    EXPECT_GT(norm, 0.0) << "write " << w;
  }
}

TEST(Episode, LengthMismatchAndRangeErrors) {
  MannModel m(tiny_spec(false), 17);
  const auto xs = random_inputs(5, 1, 4, 18);
  Tape t;
  EXPECT_THROW(run_episode(t, m, xs, 1, EpisodePlan{regular_schedule(6, 2)}), ContractError);
  EXPECT_THROW(run_episode(t, m, xs, 1, EpisodePlan{cuw_schedule(5, 1, 2)}), ConfigError);
  WriteSchedule bad = cuw_schedule(6, 1, 3);
  bad.length = 5;
  bad.steps = {3};
  MannModel mc(tiny_spec(true), 17);
  EXPECT_THROW(run_episode(t, mc, xs, 1, EpisodePlan{bad}), ConfigError);
}

}  // namespace
}  // namespace uwm
