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

#include "ogpmoe/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <optional>

namespace ogpmoe {

/// RBF kernel parameters of one expert, all stored as natural logs.
struct KernelHyperparams {
  double log_lengthscale = 0.0;
  double log_signal_var = 0.0;
  double log_noise_var = 0.0;

  [[nodiscard]] double lengthscale() const { return std::exp(log_lengthscale); }
  [[nodiscard]] double signal_var() const { return std::exp(log_signal_var); }
  [[nodiscard]] double noise_var() const { return std::exp(log_noise_var); }
  [[nodiscard]] bool finite() const;

  [[nodiscard]] Eigen::Vector3d as_vector() const;
  static KernelHyperparams from_vector(const Eigen::Vector3d& v);

  bool operator==(const KernelHyperparams&) const = default;
};

/// Non-owning view of the observations one expert is fit to.
///
/// temper_power is the exponent applied to the likelihood when the expert is
/// fit to a subsample of B out of N points (N/B), and 1 otherwise.
struct GPDataView {
  GPDataView(PointsRef inputs_, VectorRef outputs_, double temper_power_ = 1.0);

  PointsRef inputs;
  VectorRef outputs;
  double temper_power;

  [[nodiscard]] Eigen::Index size() const { return outputs.size(); }
  [[nodiscard]] bool empty() const { return outputs.size() == 0; }
};

/// Marginal predictive distributions; variance includes the noise term.
struct PredictiveGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

struct OptimizerConfig {
  int max_iters = 100;
  double grad_tol = 1e-4;
  // Box on every log-parameter. The starting point is always feasible: the box
  // is widened to contain it.
  double lower_bound = -12.0;
  double upper_bound = 12.0;
  // Largest move of any single log-parameter in one line-search trial.
  double max_step = 2.0;
};

/// k(x, x') = sf2 * exp(-|x - x'|^2 / (2 l^2)).
Eigen::MatrixXd rbf_covariance(PointsRef x1, PointsRef x2, const KernelHyperparams& theta);

/// Factorized covariance of one expert's training data under fixed hyperparameters.
struct GPFit {
  KernelHyperparams theta;
  PointMatrix inputs;
  Eigen::LLT<Eigen::MatrixXd> chol;  // of K + (noise + jitter) I
  Eigen::VectorXd alpha;             // (K + noise I)^{-1} y
  double temper_power = 1.0;
  double jitter = 0.0;
  double lml = 0.0;  // tempered log marginal likelihood
};

/// Cholesky-factorizes K + noise I, first without jitter, then with diagonal
/// jitter escalating from 1e-8 to 1e-2 times the mean diagonal. Throws
/// NumericalError listing every jitter level tried when all of them fail.
GPFit fit_gp(const GPDataView& data, const KernelHyperparams& theta);

double log_marginal_likelihood(const GPDataView& data, const KernelHyperparams& theta);

/// Gradient of the tempered log marginal likelihood with respect to
/// (log_lengthscale, log_signal_var, log_noise_var).
Eigen::Vector3d lml_gradient(const GPDataView& data, const KernelHyperparams& theta);
Eigen::Vector3d lml_gradient(const GPFit& fit);

struct OptimizeResult {
  GPFit fit;  // fit.theta and fit.lml are the optimum found
  int iterations = 0;   // accepted ascent steps
  int evaluations = 0;  // factorizations performed
  bool converged = false;
  // BFGS inverse-Hessian estimate of -lml at the optimum; empty if no
  // curvature pair was collected.
  std::optional<Eigen::Matrix3d> inverse_hessian{};
};

/// Maximizes the tempered log marginal likelihood (flat prior on the log
/// parameters) with projected BFGS and a backtracking Armijo line search.
/// Only improving steps are accepted, so the returned objective is never
/// below the objective at theta_init. `inverse_hessian`, typically from a
/// previous call on nearby data, replaces the identity as the first estimate.
OptimizeResult optimize_hyperparams(const GPDataView& data, const KernelHyperparams& theta_init,
                                    const OptimizerConfig& opts = {},
                                    const Eigen::Matrix3d* inverse_hessian = nullptr);

PredictiveGaussian gp_predict(const GPDataView& train, const KernelHyperparams& theta,
                              PointsRef test);
/// Untempered posterior predictive from an existing factorization.
PredictiveGaussian gp_predict(const GPFit& fit, PointsRef test);

/// Data-driven starting point for a cluster that has never been fit:
/// lengthscale = input stddev (floor 1e-3), signal variance = output variance
/// (floor 1e-6), noise variance = a tenth of the output variance (floor 1e-8).
KernelHyperparams default_hyperparams(PointsRef inputs, VectorRef outputs);

}  // namespace ogpmoe
