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

#include "ogpmoe/crp_niw.hpp"
#include "ogpmoe/kernel_gp.hpp"
#include "ogpmoe/random_stream.hpp"
#include "ogpmoe/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace ogpmoe {

/// One GP expert: the points assigned to a cluster and its fitted kernel.
struct ExpertState {
  ClusterStats stats;
  std::vector<double> inputs;  // row-major, stats.count x dim
  std::vector<double> outputs;
  KernelHyperparams theta;
  double cached_lml = 0.0;  // tempered log marginal likelihood under theta
  bool dirty = true;        // received points since theta was last updated
  bool fitted = false;      // theta has been fit at least once
  std::vector<int> subsample;         // member indices used for fitting; empty means all
  std::shared_ptr<const GPFit> fit;   // factorization behind cached_lml, null when dirty
  // Optimizer curvature from the last refresh; seeds the next one.
  std::optional<Eigen::Matrix3d> curvature;

  [[nodiscard]] int size() const { return stats.count; }
  [[nodiscard]] Eigen::Map<const PointMatrix> input_matrix() const;
  [[nodiscard]] Eigen::Map<const Eigen::VectorXd> output_vector() const;

  /// The data theta is fit to: all members, or the subsample (tempered by count / B).
  [[nodiscard]] Dataset fitting_data(double* temper_power) const;
};

struct AssignmentRecord {
  int batch_id = 0;
  int point_index = 0;
  int cluster_id = 0;

  bool operator==(const AssignmentRecord&) const = default;
};

/// One SMC hypothesis: a partition of every absorbed point into GP experts.
struct Particle {
  Particle() = default;
  Particle(int dim_, std::uint64_t stream_key_) : dim(dim_), stream_key(stream_key_) {}

  int dim = 1;
  std::uint64_t stream_key = 0;
  std::vector<ExpertState> experts;  // index == cluster id
  double log_weight = 0.0;
  double previous_total_lml = 0.0;   // sum of cached_lml at the end of the last weight update
  std::vector<AssignmentRecord> assignment_log;

  [[nodiscard]] int num_clusters() const { return static_cast<int>(experts.size()); }
  [[nodiscard]] int total_points() const;
  [[nodiscard]] std::vector<ClusterStats> cluster_stats() const;
  [[nodiscard]] double total_cached_lml() const;
};

/// Adds one observation to cluster `cluster` (== num_clusters() opens a new one).
void absorb_point(Particle& p, int cluster, VectorRef x, double y);

/// Sequentially samples a cluster for every point of the batch from the
/// inputs-only CRP predictive, updating statistics after each draw.
std::vector<int> assign_batch(Particle& p, const Dataset& batch, int batch_id, double alpha,
                              const NIWPrior& prior, RandomStream& rng);

struct RefreshStats {
  int refreshed = 0;
  long optimizer_iterations = 0;
  long evaluations = 0;
};

/// Re-optimizes the hyperparameters of every dirty expert, starting from its
/// current theta (or the data-driven default if it has never been fit).
/// With minibatch > 0, experts holding more than `minibatch` points are fit to
/// a fresh uniform subsample drawn from `rng`, tempered by count / minibatch.
RefreshStats refresh_hyperparams(Particle& p, const OptimizerConfig& opts, int minibatch,
                                 RandomStream& rng);

/// Recomputes cached likelihoods of dirty experts under their current theta
/// without optimizing. Returns the number of experts touched.
int refresh_cached_likelihoods(Particle& p, int minibatch, RandomStream& rng);

/// Draws the subsample for expert `e` (or clears it) and returns its fitting data.
Dataset prepare_fitting_data(ExpertState& e, int minibatch, RandomStream& rng,
                             double* temper_power);

/// Installs a fit as the expert's current state and clears the dirty flag.
void adopt_fit(ExpertState& e, GPFit fit);

/// (sum of cached_lml) minus the total stored at the previous update; the
/// stored total is replaced and log_weight is incremented by the difference.
double log_weight_increment(Particle& p);

/// Gaussian mixture over test points: one row per point, one column per component.
struct MixturePrediction {
  Eigen::MatrixXd log_weights;
  Eigen::MatrixXd means;
  Eigen::MatrixXd variances;

  [[nodiscard]] Eigen::Index num_points() const { return means.rows(); }
  [[nodiscard]] Eigen::VectorXd mean() const;
  /// Law of total variance over all components.
  [[nodiscard]] Eigen::VectorXd variance() const;
  [[nodiscard]] double log_density(Eigen::Index point, double y) const;
};

/// Mixes each expert's GP predictive with CRP assignment probabilities of the
/// test input; the last component is an unoccupied cluster with the prior GP
/// under `new_cluster_theta` (mean 0, variance sf2 + noise).
MixturePrediction particle_predict(const Particle& p, PointsRef test, const NIWPrior& prior,
                                   double alpha, const KernelHyperparams& new_cluster_theta);

/// Rebuilds the experts' members from an assignment log and the batch history.
/// Hyperparameters are left at their defaults and every expert is dirty.
void replay_assignments(Particle& p, const std::vector<Dataset>& history,
                        const std::vector<AssignmentRecord>& log);

}  // namespace ogpmoe
