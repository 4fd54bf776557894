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

#include "ogpmoe/random_stream.hpp"
#include "ogpmoe/types.hpp"

#include <span>
#include <vector>

namespace ogpmoe {

/// Normal-inverse-Wishart prior (or posterior) over a cluster's input mean and covariance.
struct NIWPrior {
  Eigen::VectorXd mu0;
  double lambda = 0.01;
  Eigen::MatrixXd psi;
  double nu = 3.0;

  [[nodiscard]] int dim() const { return static_cast<int>(mu0.size()); }
  /// Throws InputError unless psi is SPD, lambda > 0 and nu > D - 1.
  void validate() const;
};

/// Weak data-driven prior: mu0 = mean, lambda = 0.01, nu = D + 2,
/// psi = nu * covariance (plus a small ridge so a single point still gives an SPD matrix).
NIWPrior default_niw_prior(PointsRef inputs);

/// Sufficient statistics of the inputs assigned to one cluster.
struct ClusterStats {
  int count = 0;
  Eigen::VectorXd sum_x;
  Eigen::MatrixXd sum_outer;

  static ClusterStats empty(int dim);
  [[nodiscard]] int dim() const { return static_cast<int>(sum_x.size()); }
};

/// Multivariate Student-t.
struct MVTParams {
  Eigen::VectorXd loc;
  Eigen::MatrixXd scale;
  double dof = 1.0;
};

NIWPrior niw_posterior(const NIWPrior& prior, const ClusterStats& stats);

/// Posterior predictive of a single new point: t with dof nu - D + 1 and
/// scale psi (lambda + 1) / (lambda (nu - D + 1)).
MVTParams niw_predictive(const NIWPrior& niw);

/// Precomputed Cholesky of an MVT scale for repeated density evaluations.
class MVTDensity {
 public:
  explicit MVTDensity(const MVTParams& params);
  [[nodiscard]] double log_density(VectorRef x) const;

 private:
  Eigen::VectorXd loc_;
  Eigen::MatrixXd chol_l_;
  double dof_;
  double log_norm_;
};

double mvt_log_density(VectorRef x, const MVTParams& params);
double mvt_log_predictive(VectorRef x, const NIWPrior& niw);

/// Unnormalized CRP scores: log h_k + log MVT(x | posterior_k) for each
/// occupied cluster, then log alpha + log MVT(x | prior) for a new cluster.
Eigen::VectorXd crp_assignment_log_scores(VectorRef x, std::span<const ClusterStats> clusters,
                                          double alpha, const NIWPrior& prior);

/// crp_assignment_log_scores normalized so that the exponentials sum to one.
Eigen::VectorXd crp_assignment_logprobs(VectorRef x, std::span<const ClusterStats> clusters,
                                        double alpha, const NIWPrior& prior);

/// Caches one predictive density per cluster so that scoring many points
/// against a fixed (or incrementally updated) clustering stays cheap.
class CrpScorer {
 public:
  CrpScorer(std::span<const ClusterStats> clusters, double alpha, const NIWPrior& prior);

  [[nodiscard]] Eigen::VectorXd log_scores(VectorRef x) const;
  [[nodiscard]] Eigen::VectorXd logprobs(VectorRef x) const;

  /// Replaces the statistics of cluster k (k == number of clusters appends one).
  void set_cluster(std::size_t k, const ClusterStats& stats);
  [[nodiscard]] std::size_t num_clusters() const { return counts_.size(); }

 private:
  NIWPrior prior_;
  double log_alpha_;
  MVTDensity new_cluster_;
  std::vector<MVTDensity> densities_;
  std::vector<int> counts_;
};

/// Categorical draw from normalized log probabilities.
int sample_assignment(const Eigen::VectorXd& logprobs, RandomStream& rng);

ClusterStats update_stats(const ClusterStats& stats, VectorRef x, bool remove = false);

double log_sum_exp(const Eigen::VectorXd& v);

}  // namespace ogpmoe
