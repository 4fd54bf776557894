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

#pragma once

#include "ogpmoe/bandit_warmstart.hpp"
#include "ogpmoe/smc_engine.hpp"
#include "ogpmoe/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ogpmoe::harness {

enum class Ordering { kTimeOrdered, kShuffled };

/// How a training set is streamed into the engine.
struct StreamPlan {
  int train_blocks = 1;  // the first block initializes the ensemble
  // > 0: the test set is split into this many blocks, each predicted and then
  // absorbed. 0: one final prediction of the whole test set, no absorption.
  int test_blocks = 5;
  Ordering ordering = Ordering::kTimeOrdered;

  void validate() const;
};

struct PointPrediction {
  Eigen::VectorXd x;
  double mean = 0.0;
  double variance = 0.0;
  double y = 0.0;
  double log_density = 0.0;
  int block = 0;
};

struct RunRecord {
  std::string command;
  nlohmann::json config;  // EngineConfig snapshot (thread count excluded)
  std::uint64_t seed = 0;
  std::vector<StepReport> steps;
  std::vector<PointPrediction> predictions;
  bool completed = false;
  Score metrics;  // recomputed from `predictions`
  long optimizer_iterations = 0;
  double wall_time_seconds = 0.0;
};

nlohmann::json prior_to_json(const NIWPrior& prior);
NIWPrior prior_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const EngineConfig& config);
EngineConfig config_from_json(const nlohmann::json& j);

/// Summed log density and MSE over recorded predictions.
Score metrics_from_predictions(const std::vector<PointPrediction>& predictions);

/// Splits `data` into `blocks` contiguous, nearly equal parts (earlier parts
/// get the remainder).
std::vector<Dataset> split_blocks(const Dataset& data, int blocks);

/// Initializes on the first training block, steps through the remaining
/// blocks, then predicts-then-absorbs each test block. `final_state`, when
/// given, receives the ensemble at the end of the run.
RunRecord run_fit(const Dataset& train, const Dataset& test, const StreamPlan& plan,
                  const EngineConfig& config, ParticleEnsemble* final_state = nullptr);

/// run_fit with arm selection from `pool` in place of gradient refreshes.
RunRecord run_warmfit(const Dataset& train, const Dataset& test, const StreamPlan& plan,
                      const EngineConfig& config, const ArmPool& pool,
                      ParticleEnsemble* final_state = nullptr);

/// Trains on the leading `split_fraction` of time-ordered data, then for every
/// remaining point predicts one step ahead before absorbing it.
RunRecord run_track(const Dataset& data, double split_fraction, const EngineConfig& config,
                    ParticleEnsemble* final_state = nullptr);

/// Single-particle local GP: one hard partition driven directly through the
/// particle operations, without the ensemble machinery. Uses the stream and
/// seed conventions of particle 0 so that it matches run_fit with J = 1.
RunRecord run_local_gp(const Dataset& train, const Dataset& test, const StreamPlan& plan,
                       const EngineConfig& config);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Holds out round(test_fraction * n) points: the last ones (tail) or a
/// seed-determined random subset. Both parts keep the original row order.
TrainTestSplit split_train_test(const Dataset& data, double test_fraction, bool random,
                                std::uint64_t seed);

/// Reorders training data per plan.ordering (shuffles with a seed-derived stream).
Dataset order_training(const Dataset& train, const StreamPlan& plan, std::uint64_t seed);

/// Predicts-and-records one test block from an ensemble.
void record_block(const MixturePrediction& pred, const Dataset& block, int block_id,
                  std::vector<PointPrediction>& out);

}  // namespace ogpmoe::harness
