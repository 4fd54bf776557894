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
#include "ogpmoe/crp_niw.hpp"
#include "ogpmoe/kernel_gp.hpp"
#include "ogpmoe/particle.hpp"
#include "ogpmoe/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ogpmoe {

struct EngineConfig {
  int particles = 16;
  double alpha = 2.0;
  // Taken from the first batch when unset.
  std::optional<NIWPrior> prior;
  OptimizerConfig optimizer;
  int minibatch = 0;  // 0 disables subsampling
  // Resample when ESS < resample_threshold * J.
  double resample_threshold = 0.5;
  int threads = 1;
  std::uint64_t seed = 1;
  // Warm-start behaviour, used only when the ensemble carries an arm pool.
  WarmStartOptions warm;
  std::string run_id = "run";

  /// Throws InputError on invalid settings.
  void validate() const;
};

struct StepReport {
  int step = 0;
  int batch_size = 0;
  double ess = 0.0;
  bool resampled = false;
  std::vector<int> cluster_counts;  // per particle, after the step
  std::vector<int> refresh_counts;  // per particle
  long optimizer_iterations = 0;
  long evaluations = 0;
  int failed_particles = 0;
  int arms_added = 0;

  bool operator==(const StepReport&) const = default;
};

/// The SMC state: J particles, their (log-space, normalized) weights, and the
/// data they have absorbed.
struct ParticleEnsemble {
  EngineConfig config;
  NIWPrior prior;
  // Default kernel for the unoccupied-cluster predictive component.
  KernelHyperparams base_theta;
  std::vector<Particle> particles;
  int step_counter = 0;  // batches absorbed, including the initial one
  std::uint64_t master_seed = 0;
  std::vector<Dataset> history;
  std::optional<ArmPool> arm_pool;  // present: warm refresh replaces optimization
  StepReport last_report;

  [[nodiscard]] Eigen::VectorXd log_weights() const;
  [[nodiscard]] int dim() const { return prior.dim(); }
  [[nodiscard]] int size() const { return static_cast<int>(particles.size()); }
};

/// Samples every particle's partition of the first batch from the inputs-only
/// CRP, fits its experts, and weights it by the summed marginal likelihoods.
ParticleEnsemble init_ensemble(const Dataset& first_batch, const EngineConfig& config,
                               std::optional<ArmPool> pool = std::nullopt);

/// One pass of the online update: per-particle assign/refresh/reweight in
/// parallel, then ESS, conditional resampling and normalization.
StepReport step(ParticleEnsemble& ens, const Dataset& batch);

/// 1 / sum(w^2) for normalized log weights.
double effective_sample_size(const Eigen::VectorXd& log_weights);

/// Systematic resampling with offset u in [0, 1): slot i takes the particle
/// whose cumulative-weight interval contains (i + u) / J.
std::vector<int> systematic_resample_indices(const Eigen::VectorXd& weights, double u);

/// Resamples in place; every slot gets a fresh child random stream and weight 1/J.
void resample(ParticleEnsemble& ens);

/// Shifts log weights so that they log-sum-exp to zero.
void normalize_log_weights(ParticleEnsemble& ens);

/// Weighted mixture of every particle's predictive.
MixturePrediction ensemble_predict(const ParticleEnsemble& ens, PointsRef test);

struct Score {
  double pred_ll = 0.0;   // summed log predictive density
  double pred_mse = 0.0;  // mean squared error of the predictive mean
};

Score score_prediction(const MixturePrediction& pred, VectorRef y);
Score score(const ParticleEnsemble& ens, const Dataset& test);

}  // namespace ogpmoe
