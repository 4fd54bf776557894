// Copyright 2026 The ogpmoe Authors
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

#include "oracles.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/harness/synthetic.hpp"
#include "ogpmoe/smc_engine.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>

namespace {

using ogpmoe::Dataset;
using ogpmoe::EngineConfig;
using ogpmoe::ParticleEnsemble;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Dataset blob(std::mt19937_64& rng, int n, double center, double spread = 1.0) {
  std::normal_distribution<double> z;
  Dataset d{ogpmoe::PointMatrix(n, 1), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    d.inputs(i, 0) = center + spread * z(rng);
    d.outputs[i] = std::sin(d.inputs(i, 0)) + 0.2 * z(rng);
  }
  return d;
}

ogpmoe::harness::SyntheticData regimes(std::uint64_t seed, int n_train, int n_test) {
  ogpmoe::harness::SyntheticSpec spec;
  spec.seed = seed;
  spec.n_train = n_train;
  spec.n_test = n_test;
  return ogpmoe::harness::generate_synthetic(spec);
}

EngineConfig config(int particles, double alpha, std::uint64_t seed = 1) {
  EngineConfig c;
  c.particles = particles;
  c.alpha = alpha;
  c.seed = seed;
  return c;
}

void expect_normalized(const ParticleEnsemble& ens) {
  const Eigen::VectorXd lw = ens.log_weights();
  EXPECT_NEAR(ogpmoe::log_sum_exp(lw), 0.0, 1e-9);
  const double ess = ogpmoe::effective_sample_size(lw);
  EXPECT_GE(ess, 1.0 - 1e-12);
  EXPECT_LE(ess, ens.size() + 1e-9);
}

TEST(EffectiveSampleSize, Examples) {
  EXPECT_NEAR(ogpmoe::effective_sample_size(Eigen::VectorXd::Constant(64, -std::log(64.0))), 64.0,
              1e-10);
  Eigen::VectorXd one = Eigen::VectorXd::Constant(5, kNegInf);
  one[2] = 0.0;
  EXPECT_DOUBLE_EQ(ogpmoe::effective_sample_size(one), 1.0);
  EXPECT_NEAR(ogpmoe::effective_sample_size(Eigen::Vector2d(std::log(0.8), std::log(0.2))),
              1.0 / 0.68, 1e-12);
}

TEST(InitEnsemble, SingleParticleHasUnitWeight) {
  std::mt19937_64 gen(1);
  const auto ens = ogpmoe::init_ensemble(blob(gen, 30, 0.0), config(1, 2.0));
  ASSERT_EQ(ens.size(), 1);
  EXPECT_EQ(ens.particles[0].log_weight, 0.0);
  EXPECT_EQ(ens.step_counter, 1);
}

TEST(InitEnsemble, IdenticalPartitionsGetEqualWeights) {
  std::mt19937_64 gen(2);
  // A vanishing concentration forces both particles into a single cluster.
  const auto ens = ogpmoe::init_ensemble(blob(gen, 40, 0.0), config(2, 1e-12));
  ASSERT_EQ(ens.particles[0].num_clusters(), 1);
  ASSERT_EQ(ens.particles[1].num_clusters(), 1);
  EXPECT_NEAR(std::exp(ens.particles[0].log_weight), 0.5, 1e-12);
  EXPECT_NEAR(std::exp(ens.particles[1].log_weight), 0.5, 1e-12);
}

TEST(InitEnsemble, TwoRegimeDataProducesMultipleClusters) {
  int hits = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto data = regimes(500 + seed, 200, 10);
    const auto ens = ogpmoe::init_ensemble(data.train, config(8, 2.0, seed));
    bool any = false;
    for (const auto& p : ens.particles) any = any || p.num_clusters() >= 2;
    hits += any ? 1 : 0;
  }
  EXPECT_GE(hits, 18);
}

TEST(InitEnsemble, RejectsBadInput) {
  std::mt19937_64 gen(3);
  EXPECT_THROW(ogpmoe::init_ensemble(Dataset{}, config(2, 1.0)), ogpmoe::InputError);
  EXPECT_THROW(ogpmoe::init_ensemble(blob(gen, 5, 0.0), config(0, 1.0)), ogpmoe::InputError);
  EXPECT_THROW(ogpmoe::init_ensemble(blob(gen, 5, 0.0), config(2, 0.0)), ogpmoe::InputError);
}

TEST(Step, SingleParticleNeverResamples) {
  const auto data = regimes(7, 200, 10);
  const auto blocks = std::vector<Dataset>{data.train.slice(0, 50), data.train.slice(50, 100),
                                           data.train.slice(100, 150), data.train.slice(150, 200)};
  auto ens = ogpmoe::init_ensemble(blocks[0], config(1, 2.0));
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    const auto r = ogpmoe::step(ens, blocks[b]);
    EXPECT_FALSE(r.resampled);
    EXPECT_EQ(r.ess, 1.0);
    EXPECT_EQ(ens.particles[0].log_weight, 0.0);
  }
}

TEST(Step, RepeatedBatchKeepsClusterCounts) {
  std::mt19937_64 gen(4);
  const Dataset batch = blob(gen, 30, 0.0);
  auto ens = ogpmoe::init_ensemble(batch, config(4, 1e-12));
  std::vector<int> before;
  for (const auto& p : ens.particles) before.push_back(p.num_clusters());
  ogpmoe::step(ens, batch);
  for (int j = 0; j < ens.size(); ++j) EXPECT_EQ(ens.particles[j].num_clusters(), before[j]);
}

TEST(Step, WeightsStayNormalizedAfterEveryStep) {
  for (int seed = 0; seed < 3; ++seed) {
    const auto data = regimes(40 + seed, 240, 10);
    auto ens = ogpmoe::init_ensemble(data.train.slice(0, 40), config(8, 2.0, seed));
    expect_normalized(ens);
    for (int b = 1; b < 6; ++b) {
      const auto r = ogpmoe::step(ens, data.train.slice(40 * b, 40 * (b + 1)));
      expect_normalized(ens);
      EXPECT_GE(r.ess, 1.0 - 1e-12);
      EXPECT_LE(r.ess, 8.0 + 1e-9);
      EXPECT_EQ(r.cluster_counts.size(), 8u);
      EXPECT_EQ(r.step, b);
    }
    EXPECT_EQ(ens.step_counter, 6);
    EXPECT_EQ(ens.history.size(), 6u);
  }
}

TEST(Step, ResultsIndependentOfThreadCount) {
  const auto data = regimes(77, 200, 30);
  auto run = [&](int threads) {
    EngineConfig c = config(8, 2.0, 5);
    c.threads = threads;
    auto ens = ogpmoe::init_ensemble(data.train.slice(0, 50), c);
    std::vector<ogpmoe::StepReport> reports{ens.last_report};
    for (int b = 1; b < 4; ++b) reports.push_back(ogpmoe::step(ens, data.train.slice(50 * b, 50 * (b + 1))));
    const auto s = ogpmoe::score(ens, data.test);
    return std::make_tuple(reports, s.pred_ll, s.pred_mse, ens.log_weights());
  };
  const auto one = run(1);
  const auto four = run(4);
  EXPECT_EQ(std::get<0>(one), std::get<0>(four));
  EXPECT_EQ(std::get<1>(one), std::get<1>(four));
  EXPECT_EQ(std::get<2>(one), std::get<2>(four));
  EXPECT_EQ(std::get<3>(one), std::get<3>(four));
}

TEST(Step, SequentialBlocksImproveOnInitOnly) {
  int better = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto data = regimes(900 + seed, 300, 100);
    auto ens = ogpmoe::init_ensemble(data.train.slice(0, 60), config(4, 2.0, seed));
    const double init_only = ogpmoe::score(ens, data.test).pred_ll;
    for (int b = 1; b < 5; ++b) ogpmoe::step(ens, data.train.slice(60 * b, 60 * (b + 1)));
    const double final_ll = ogpmoe::score(ens, data.test).pred_ll;
    better += final_ll > init_only ? 1 : 0;
  }
  EXPECT_GT(better, 10);
}

// A single particle with one forced cluster absorbs T blocks. Its weight
// increments telescope to the final cached likelihood, which is the
// likelihood of all the data under the final hyperparameters.
TEST(Step, SingleClusterIncrementsTelescope) {
  const auto data = regimes(31, 250, 10);
  auto ens = ogpmoe::init_ensemble(data.train.slice(0, 50), config(1, 1e-12));
  auto& p = ens.particles[0];
  double sum = p.previous_total_lml;
  for (int b = 1; b < 5; ++b) {
    const double before = p.previous_total_lml;
    ogpmoe::step(ens, data.train.slice(50 * b, 50 * (b + 1)));
    sum += ens.particles[0].previous_total_lml - before;
  }
  const auto& q = ens.particles[0];
  ASSERT_EQ(q.num_clusters(), 1);
  const auto& e = q.experts[0];
  const double direct = ogpmoe::log_marginal_likelihood(
      ogpmoe::GPDataView(data.train.inputs, data.train.outputs), e.theta);
  EXPECT_NEAR(e.cached_lml, direct, 1e-8 * std::abs(direct));
  EXPECT_NEAR(sum, e.cached_lml, 1e-12 * std::abs(direct));
}

TEST(Step, FailedParticleIsEliminated) {
  const auto data = regimes(8, 160, 10);
  auto ens = ogpmoe::init_ensemble(data.train.slice(0, 40), config(4, 2.0));
  ens.particles[1].log_weight = kNegInf;
  ogpmoe::normalize_log_weights(ens);
  EXPECT_EQ(std::exp(ens.particles[1].log_weight), 0.0);
  const auto r = ogpmoe::step(ens, data.train.slice(40, 80));
  EXPECT_EQ(r.failed_particles, 1);
  expect_normalized(ens);
  if (!r.resampled) {
    EXPECT_EQ(std::exp(ens.particles[1].log_weight), 0.0);
    ogpmoe::resample(ens);
  }
  for (const auto& p : ens.particles) EXPECT_TRUE(std::isfinite(p.log_weight));
}

TEST(Step, NumericalFailureEliminatesParticles) {
  const auto data = regimes(9, 120, 10);
  // Every arm overflows the covariance, so each particle's refresh fails.
  ogpmoe::ArmPool bad;
  bad.append({{0.0, 800.0, 0.0}, {"bad", 0, 0}, 0.0});
  auto ens = ogpmoe::init_ensemble(data.train.slice(0, 40), config(3, 2.0));
  ens.arm_pool = bad;
  // Each failure is contained in its particle; only when none survives does
  // the step report it, rather than producing NaN weights.
  EXPECT_THROW(ogpmoe::step(ens, data.train.slice(40, 80)), ogpmoe::NumericalError);
  for (const auto& p : ens.particles) EXPECT_EQ(p.log_weight, kNegInf);
}

TEST(Step, RejectsBadBatches) {
  std::mt19937_64 gen(10);
  auto ens = ogpmoe::init_ensemble(blob(gen, 10, 0.0), config(2, 1.0));
  EXPECT_THROW(ogpmoe::step(ens, Dataset{}), ogpmoe::InputError);
  Dataset wide{ogpmoe::PointMatrix::Zero(3, 2), Eigen::VectorXd::Zero(3)};
  EXPECT_THROW(ogpmoe::step(ens, wide), ogpmoe::InputError);
  ParticleEnsemble empty;
  EXPECT_THROW(ogpmoe::step(empty, blob(gen, 3, 0.0)), ogpmoe::StateError);
}

TEST(Resample, DegenerateWeightsCopyOneParticle) {
  const auto data = regimes(11, 80, 10);
  auto ens = ogpmoe::init_ensemble(data.train, config(5, 2.0));
  for (int j = 0; j < 5; ++j) ens.particles[j].log_weight = j == 0 ? 0.0 : kNegInf;
  const auto source = ens.particles[0];
  ogpmoe::resample(ens);
  std::set<std::uint64_t> keys;
  for (const auto& p : ens.particles) {
    EXPECT_EQ(p.assignment_log, source.assignment_log);
    EXPECT_DOUBLE_EQ(p.log_weight, -std::log(5.0));
    keys.insert(p.stream_key);
  }
  EXPECT_EQ(keys.size(), 5u);
}

TEST(Resample, NeverPicksZeroWeight) {
  ogpmoe::RandomStream rng(3, 3, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::VectorXd w(6);
    for (int j = 0; j < 6; ++j) w[j] = rng.uniform() < 0.4 ? 0.0 : rng.uniform();
    if (w.sum() == 0.0) w[trial % 6] = 1.0;
    for (int idx : ogpmoe::systematic_resample_indices(w / w.sum(), rng.uniform())) {
      EXPECT_GT(w[idx], 0.0);
    }
  }
}

TEST(Resample, UnbiasedForClusterCountStatistic) {
  const Eigen::VectorXd g = (Eigen::VectorXd(8) << 1, 2, 2, 3, 1, 4, 2, 5).finished();
  const Eigen::VectorXd w = (Eigen::VectorXd(8) << 0.05, 0.3, 0.02, 0.1, 0.18, 0.05, 0.2, 0.1).finished();
  const double target = w.dot(g);
  ogpmoe::RandomStream rng(17, 0, 0);
  std::vector<double> means;
  for (int trial = 0; trial < 10000; ++trial) {
    double s = 0.0;
    for (int idx : ogpmoe::systematic_resample_indices(w, rng.uniform())) s += g[idx];
    means.push_back(s / 8.0);
  }
  const auto est = oracle::mean_se(means);
  EXPECT_LE(std::abs(est.mean - target), 3.0 * est.se);
}

TEST(EnsemblePredict, SingleParticleEqualsParticlePredict) {
  const auto data = regimes(12, 120, 20);
  const auto ens = ogpmoe::init_ensemble(data.train, config(1, 2.0));
  const auto a = ogpmoe::ensemble_predict(ens, data.test.inputs);
  const auto b = ogpmoe::particle_predict(ens.particles[0], data.test.inputs, ens.prior, 2.0,
                                          ens.base_theta);
  EXPECT_EQ(a.log_weights, b.log_weights);
  EXPECT_EQ(a.means, b.means);
  EXPECT_EQ(a.variances, b.variances);
}

TEST(EnsemblePredict, DuplicatedParticleMatchesSingle) {
  const auto data = regimes(13, 120, 20);
  auto one = ogpmoe::init_ensemble(data.train, config(1, 2.0));
  auto two = one;
  two.particles.push_back(two.particles[0]);
  for (auto& p : two.particles) p.log_weight = -std::log(2.0);
  const auto a = ogpmoe::ensemble_predict(one, data.test.inputs);
  const auto b = ogpmoe::ensemble_predict(two, data.test.inputs);
  EXPECT_LT((a.mean() - b.mean()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.variance() - b.variance()).cwiseAbs().maxCoeff(), 1e-12);
  for (int i = 0; i < 20; ++i) {
    EXPECT_NEAR(a.log_density(i, data.test.outputs[i]), b.log_density(i, data.test.outputs[i]),
                1e-12);
  }
}

TEST(EnsemblePredict, MomentsMatchHierarchicalMonteCarlo) {
  const auto data = regimes(14, 150, 3);
  auto ens = ogpmoe::init_ensemble(data.train.slice(0, 75), config(6, 2.0));
  ogpmoe::step(ens, data.train.slice(75, 150));
  const auto mix = ogpmoe::ensemble_predict(ens, data.test.inputs);
  const Eigen::VectorXd mean = mix.mean(), var = mix.variance();
  std::mt19937_64 rng(15);
  std::normal_distribution<double> z;
  std::vector<double> pw;
  for (const auto& p : ens.particles) pw.push_back(std::exp(p.log_weight));
  std::discrete_distribution<int> pick_particle(pw.begin(), pw.end());
  std::vector<ogpmoe::MixturePrediction> parts;
  for (const auto& p : ens.particles) {
    parts.push_back(ogpmoe::particle_predict(p, data.test.inputs, ens.prior, 2.0, ens.base_theta));
  }
  const int draws = 1000000;
  for (int i = 0; i < 3; ++i) {
    std::vector<std::discrete_distribution<int>> pick_component;
    for (const auto& part : parts) {
      const Eigen::VectorXd w = part.log_weights.row(i).array().exp();
      pick_component.emplace_back(w.data(), w.data() + w.size());
    }
    std::vector<double> ys(draws), sq(draws);
    for (int d = 0; d < draws; ++d) {
      const int j = pick_particle(rng);
      const int k = pick_component[j](rng);
      ys[d] = parts[j].means(i, k) + std::sqrt(parts[j].variances(i, k)) * z(rng);
      sq[d] = (ys[d] - mean[i]) * (ys[d] - mean[i]);
    }
    const auto m = oracle::mean_se(ys);
    const auto v = oracle::mean_se(sq);
    EXPECT_LE(std::abs(m.mean - mean[i]), 3.0 * m.se);
    EXPECT_LE(std::abs(v.mean - var[i]), 3.0 * v.se);
  }
}

TEST(Score, ExactMeansGiveZeroError) {
  const auto data = regimes(16, 100, 15);
  const auto ens = ogpmoe::init_ensemble(data.train, config(3, 2.0));
  const auto mix = ogpmoe::ensemble_predict(ens, data.test.inputs);
  EXPECT_EQ(ogpmoe::score_prediction(mix, mix.mean()).pred_mse, 0.0);
}

TEST(Score, SingleExpertReducesToGaussianDensity) {
  std::mt19937_64 gen(17);
  const Dataset train = blob(gen, 40, 0.0);
  const auto ens = ogpmoe::init_ensemble(train, config(1, 1e-12));
  ASSERT_EQ(ens.particles[0].num_clusters(), 1);
  Dataset test{ogpmoe::PointMatrix::Constant(1, 1, 0.3), Eigen::VectorXd::Constant(1, 0.1)};
  const auto s = ogpmoe::score(ens, test);
  const auto g = ogpmoe::gp_predict(ogpmoe::GPDataView(train.inputs, train.outputs),
                                    ens.particles[0].experts[0].theta, test.inputs);
  const double r = 0.1 - g.mean[0];
  const double expected =
      -0.5 * std::log(2.0 * std::numbers::pi * g.variance[0]) - 0.5 * r * r / g.variance[0];
  EXPECT_NEAR(s.pred_ll, expected, 1e-9);
  EXPECT_NEAR(s.pred_mse, r * r, 1e-9);
}

TEST(Score, EmptyTestSetIsInputError) {
  std::mt19937_64 gen(18);
  const auto ens = ogpmoe::init_ensemble(blob(gen, 10, 0.0), config(1, 1.0));
  EXPECT_THROW(ogpmoe::score(ens, Dataset{ogpmoe::PointMatrix(0, 1), Eigen::VectorXd(0)}),
               ogpmoe::InputError);
}

}  // namespace
