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

#include "ogpmoe/crp_niw.hpp"

#include "ogpmoe/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>

namespace ogpmoe {

void NIWPrior::validate() const {
  const int d = dim();
  if (d < 1 || psi.rows() != d || psi.cols() != d) {
    throw InputError("NIW prior: inconsistent dimensions");
  }
  if (!(lambda > 0.0)) throw InputError("NIW prior: lambda must be positive");
  if (!(nu > d - 1)) throw InputError("NIW prior: nu must exceed D - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(psi);
  if (llt.info() != Eigen::Success || !psi.isApprox(psi.transpose())) {
    throw InputError("NIW prior: psi must be symmetric positive definite");
  }
}

NIWPrior default_niw_prior(PointsRef inputs) {
  const auto n = inputs.rows();
  const auto d = inputs.cols();
  if (n == 0 || d == 0) throw InputError("NIW prior: no inputs");
  NIWPrior prior;
  prior.mu0 = inputs.colwise().mean().transpose();
  prior.lambda = 0.01;
  prior.nu = static_cast<double>(d) + 2.0;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d, d);
  if (n > 1) {
    const PointMatrix centered = inputs.rowwise() - prior.mu0.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n);
    const double ridge = 1e-6 * std::max(cov.trace() / static_cast<double>(d), 1e-12);
    cov.diagonal().array() += ridge;
  }
  prior.psi = prior.nu * cov;
  return prior;
}

ClusterStats ClusterStats::empty(int dim) {
  return {0, Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
}

NIWPrior niw_posterior(const NIWPrior& prior, const ClusterStats& stats) {
  if (stats.count == 0) return prior;
  const double n = stats.count;
  const Eigen::VectorXd xbar = stats.sum_x / n;
  const Eigen::MatrixXd scatter = stats.sum_outer - n * xbar * xbar.transpose();
  const Eigen::VectorXd diff = xbar - prior.mu0;

  NIWPrior post;
  post.lambda = prior.lambda + n;
  post.nu = prior.nu + n;
  post.mu0 = (prior.lambda * prior.mu0 + stats.sum_x) / post.lambda;
  post.psi = prior.psi + scatter + (prior.lambda * n / post.lambda) * diff * diff.transpose();
  post.psi = 0.5 * (post.psi + post.psi.transpose());
  return post;
}

MVTParams niw_predictive(const NIWPrior& niw) {
  const double d = niw.dim();
  MVTParams t;
  t.loc = niw.mu0;
  t.dof = niw.nu - d + 1.0;
  t.scale = niw.psi * ((niw.lambda + 1.0) / (niw.lambda * t.dof));
  return t;
}

MVTDensity::MVTDensity(const MVTParams& params) : loc_(params.loc), dof_(params.dof) {
  if (!(dof_ > 0.0)) throw NumericalError("MVT: degrees of freedom must be positive");
  Eigen::LLT<Eigen::MatrixXd> llt(params.scale);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("MVT: scale matrix is not positive definite");
  }
  chol_l_ = llt.matrixL();
  const double d = static_cast<double>(loc_.size());
  const double log_det = 2.0 * chol_l_.diagonal().array().log().sum();
  log_norm_ = std::lgamma(0.5 * (dof_ + d)) - std::lgamma(0.5 * dof_) -
              0.5 * d * std::log(dof_ * std::numbers::pi) - 0.5 * log_det;
}

double MVTDensity::log_density(VectorRef x) const {
  if (x.size() != loc_.size()) throw InputError("MVT: point dimension mismatch");
  const Eigen::VectorXd z =
      chol_l_.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(x - loc_));
  const double d = static_cast<double>(loc_.size());
  return log_norm_ - 0.5 * (dof_ + d) * std::log1p(z.squaredNorm() / dof_);
}

double mvt_log_density(VectorRef x, const MVTParams& params) {
  return MVTDensity(params).log_density(x);
}

double mvt_log_predictive(VectorRef x, const NIWPrior& niw) {
  return mvt_log_density(x, niw_predictive(niw));
}

double log_sum_exp(const Eigen::VectorXd& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

CrpScorer::CrpScorer(std::span<const ClusterStats> clusters, double alpha, const NIWPrior& prior)
    : prior_(prior),
      log_alpha_(std::log(alpha)),
      new_cluster_(niw_predictive(prior)) {
  if (!(alpha > 0.0)) throw InputError("CRP: alpha must be positive");
  densities_.reserve(clusters.size());
  counts_.reserve(clusters.size());
  for (const auto& c : clusters) {
    if (c.count < 1) throw InputError("CRP: clusters must be occupied");
    densities_.emplace_back(niw_predictive(niw_posterior(prior, c)));
    counts_.push_back(c.count);
  }
}

void CrpScorer::set_cluster(std::size_t k, const ClusterStats& stats) {
  MVTDensity density(niw_predictive(niw_posterior(prior_, stats)));
  if (k == densities_.size()) {
    densities_.push_back(std::move(density));
    counts_.push_back(stats.count);
  } else {
    densities_.at(k) = std::move(density);
    counts_.at(k) = stats.count;
  }
}

Eigen::VectorXd CrpScorer::log_scores(VectorRef x) const {
  const auto k = static_cast<Eigen::Index>(densities_.size());
  Eigen::VectorXd s(k + 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    s[i] = std::log(static_cast<double>(counts_[i])) + densities_[i].log_density(x);
  }
  s[k] = log_alpha_ + new_cluster_.log_density(x);
  return s;
}

Eigen::VectorXd CrpScorer::logprobs(VectorRef x) const {
  Eigen::VectorXd s = log_scores(x);
  s.array() -= log_sum_exp(s);
  return s;
}

Eigen::VectorXd crp_assignment_log_scores(VectorRef x, std::span<const ClusterStats> clusters,
                                          double alpha, const NIWPrior& prior) {
  return CrpScorer(clusters, alpha, prior).log_scores(x);
}

Eigen::VectorXd crp_assignment_logprobs(VectorRef x, std::span<const ClusterStats> clusters,
                                        double alpha, const NIWPrior& prior) {
  return CrpScorer(clusters, alpha, prior).logprobs(x);
}

int sample_assignment(const Eigen::VectorXd& logprobs, RandomStream& rng) {
  const auto k = logprobs.size();
  if (k == 0) throw InputError("sample_assignment: empty distribution");
  if (k == 1) return 0;
  // Inverse CDF; normalize defensively against rounding in the input.
  const double m = logprobs.maxCoeff();
  const Eigen::ArrayXd p = (logprobs.array() - m).exp();
  const double u = rng.uniform() * p.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed on the rounding gap at the top; return the last positive slot.
  for (Eigen::Index i = k - 1; i >= 0; --i) {
    if (p[i] > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(k - 1);
}

ClusterStats update_stats(const ClusterStats& stats, VectorRef x, bool remove) {
  if (x.size() != stats.sum_x.size()) throw InputError("update_stats: dimension mismatch");
  ClusterStats out = stats;
  if (remove) {
    if (stats.count < 1) throw InputError("update_stats: cannot remove from an empty cluster");
    out.count -= 1;
    if (out.count == 0) return ClusterStats::empty(stats.dim());
    out.sum_x -= x;
    out.sum_outer.noalias() -= x * x.transpose();
  } else {
    out.count += 1;
    out.sum_x += x;
    out.sum_outer.noalias() += x * x.transpose();
  }
  return out;
}

}  // namespace ogpmoe
