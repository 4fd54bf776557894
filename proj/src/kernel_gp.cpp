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

#include "ogpmoe/kernel_gp.hpp"

#include "ogpmoe/errors.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <sstream>

namespace ogpmoe {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd squared_distances(PointsRef x1, PointsRef x2) {
  Eigen::MatrixXd d2(x1.rows(), x2.rows());
  for (Eigen::Index j = 0; j < x2.rows(); ++j) {
    d2.col(j) = (x1.rowwise() - x2.row(j)).rowwise().squaredNorm();
  }
  return d2;
}

// Squared distances from point j to points j..n-1.
Eigen::ArrayXd tail_distances(PointsRef x, Eigen::Index j) {
  return (x.bottomRows(x.rows() - j).rowwise() - x.row(j)).rowwise().squaredNorm().array();
}

// Lower triangle of K_f + noise I; the strict upper triangle is left zero.
Eigen::MatrixXd noisy_kernel_lower(PointsRef x, const KernelHyperparams& theta) {
  const Eigen::Index n = x.rows();
  const double sf2 = theta.signal_var();
  const double scale = -0.5 / (theta.lengthscale() * theta.lengthscale());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k.col(j).tail(n - j) = (tail_distances(x, j) * scale).exp() * sf2;
  }
  k.diagonal().array() += theta.noise_var();
  return k;
}

// L^{-1} for lower-triangular L, solved in column blocks below the diagonal.
Eigen::MatrixXd lower_inverse(const Eigen::MatrixXd& l) {
  constexpr Eigen::Index kBlock = 64;
  const Eigen::Index n = l.rows();
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j0 = 0; j0 < n; j0 += kBlock) {
    const Eigen::Index w = std::min(kBlock, n - j0);
    const Eigen::Index m = n - j0;
    auto blk = inv.block(j0, j0, m, w);
    blk.topRows(w).setIdentity();
    l.block(j0, j0, m, m).triangularView<Eigen::Lower>().solveInPlace(blk);
  }
  return inv;
}

void check_dims(PointsRef x1, PointsRef x2) {
  if (x1.cols() != x2.cols()) {
    std::ostringstream msg;
    msg << "point dimension mismatch: " << x1.cols() << " vs " << x2.cols();
    throw InputError(msg.str());
  }
}

}  // namespace

bool KernelHyperparams::finite() const {
  return std::isfinite(log_lengthscale) && std::isfinite(log_signal_var) &&
         std::isfinite(log_noise_var);
}

Eigen::Vector3d KernelHyperparams::as_vector() const {
  return {log_lengthscale, log_signal_var, log_noise_var};
}

KernelHyperparams KernelHyperparams::from_vector(const Eigen::Vector3d& v) {
  return {v[0], v[1], v[2]};
}

GPDataView::GPDataView(PointsRef inputs_, VectorRef outputs_, double temper_power_)
    : inputs(inputs_), outputs(outputs_), temper_power(temper_power_) {
  if (inputs.rows() != outputs.size()) {
    throw InputError("GP data: inputs and outputs differ in length");
  }
  if (!(temper_power >= 1.0)) {
    throw InputError("GP data: temper power must be >= 1");
  }
}

Eigen::MatrixXd rbf_covariance(PointsRef x1, PointsRef x2, const KernelHyperparams& theta) {
  check_dims(x1, x2);
  const double sf2 = theta.signal_var();
  const double scale = -0.5 / (theta.lengthscale() * theta.lengthscale());
  Eigen::MatrixXd k = squared_distances(x1, x2);
  k = (k.array() * scale).exp() * sf2;
  return k;
}

GPFit fit_gp(const GPDataView& data, const KernelHyperparams& theta) {
  if (data.empty()) {
    throw InputError("GP fit: no data");
  }
  if (!theta.finite()) {
    throw NumericalError("GP fit: non-finite hyperparameters");
  }
  const Eigen::Index n = data.size();
  GPFit fit;
  fit.theta = theta;
  fit.inputs = data.inputs;
  fit.temper_power = data.temper_power;

  Eigen::MatrixXd k = noisy_kernel_lower(data.inputs, theta);
  if (!k.allFinite()) {
    throw NumericalError("GP fit: non-finite covariance entries");
  }
  const double mean_diag = k.diagonal().mean();

  // No jitter first, then 1e-8 .. 1e-2 times the mean diagonal.
  std::vector<double> tried;
  bool ok = false;
  for (int level = -9; level <= -2 && !ok; ++level) {
    const double jitter = level < -8 ? 0.0 : std::pow(10.0, level) * mean_diag;
    tried.push_back(jitter);
    if (jitter == 0.0) {
      fit.chol.compute(k);
    } else {
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jitter;
      fit.chol.compute(kj);
    }
    ok = fit.chol.info() == Eigen::Success && fit.chol.matrixLLT().diagonal().minCoeff() > 0.0;
    fit.jitter = jitter;
  }
  if (!ok) {
    std::ostringstream msg;
    msg << "Cholesky factorization failed (n=" << n << "); jitter levels tried:";
    for (double j : tried) msg << ' ' << j;
    throw NumericalError(msg.str());
  }

  fit.alpha = fit.chol.solve(data.outputs);
  const double log_det = 2.0 * fit.chol.matrixLLT().diagonal().array().log().sum();
  const double quad = data.outputs.dot(fit.alpha);
  const double lml = -0.5 * quad - 0.5 * log_det - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!std::isfinite(lml)) {
    throw NumericalError("GP fit: non-finite log marginal likelihood");
  }
  fit.lml = data.temper_power * lml;
  return fit;
}

double log_marginal_likelihood(const GPDataView& data, const KernelHyperparams& theta) {
  return fit_gp(data, theta).lml;
}

Eigen::Vector3d lml_gradient(const GPFit& fit) {
  const Eigen::Index n = fit.inputs.rows();
  const auto& theta = fit.theta;
  const double inv_l2 = 1.0 / (theta.lengthscale() * theta.lengthscale());
  const double sf2 = theta.signal_var();

  // Lower triangle of K^{-1} = L^{-T} L^{-1}.
  const Eigen::MatrixXd linv = lower_inverse(fit.chol.matrixLLT());
  Eigen::MatrixXd kinv = Eigen::MatrixXd::Zero(n, n);
  kinv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());

  // W = alpha alpha^T - K^{-1}; dlml/dtheta = 0.5 tr(W dK/dtheta).
  double g_len = 0.0;
  double g_sf = 0.0;
  double g_sn = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index m = n - j;
    const Eigen::ArrayXd d2 = tail_distances(fit.inputs, j);
    const Eigen::ArrayXd kf = (d2 * (-0.5 * inv_l2)).exp() * sf2;
    const Eigen::ArrayXd w =
        fit.alpha.tail(m).array() * fit.alpha[j] - kinv.col(j).tail(m).array();
    // off-diagonal pairs appear twice in the trace
    g_sf += 2.0 * (w * kf).sum() - w[0] * kf[0];
    g_len += 2.0 * (w * kf * d2).sum() * inv_l2;
    g_sn += w[0];
  }
  g_sn *= theta.noise_var();
  return 0.5 * fit.temper_power * Eigen::Vector3d(g_len, g_sf, g_sn);
}

Eigen::Vector3d lml_gradient(const GPDataView& data, const KernelHyperparams& theta) {
  return lml_gradient(fit_gp(data, theta));
}

namespace {

// Gradient with components zeroed where the box blocks ascent.
Eigen::Vector3d projected(const Eigen::Vector3d& g, const Eigen::Vector3d& x,
                          const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  Eigen::Vector3d p = g;
  for (int i = 0; i < 3; ++i) {
    if ((x[i] <= lo[i] && g[i] < 0.0) || (x[i] >= hi[i] && g[i] > 0.0)) p[i] = 0.0;
  }
  return p;
}

}  // namespace

OptimizeResult optimize_hyperparams(const GPDataView& data, const KernelHyperparams& theta_init,
                                    const OptimizerConfig& opts,
                                    const Eigen::Matrix3d* inverse_hessian) {
  if (opts.max_iters < 1) {
    throw InputError("optimizer: max_iters must be >= 1");
  }
  if (!theta_init.finite()) {
    throw InputError("optimizer: non-finite initial hyperparameters");
  }
  OptimizeResult result{fit_gp(data, theta_init)};
  result.evaluations = 1;
  if (!std::isfinite(result.fit.lml)) {
    throw InputError("optimizer: non-finite objective at the initial point");
  }

  Eigen::Vector3d x = theta_init.as_vector();
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(opts.lower_bound).cwiseMin(x);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(opts.upper_bound).cwiseMax(x);
  double f = result.fit.lml;
  Eigen::Vector3d g = lml_gradient(result.fit);

  // Inverse Hessian approximation of -f.
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  bool h_is_identity = true;
  if (inverse_hessian && inverse_hessian->allFinite()) {
    h = *inverse_hessian;
    h_is_identity = false;
  }

  while (result.iterations < opts.max_iters) {
    const Eigen::Vector3d pg = projected(g, x, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      result.converged = true;
      break;
    }
    Eigen::Vector3d d = h * g;
    for (int i = 0; i < 3; ++i) {
      if ((x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0)) d[i] = 0.0;
    }
    if (d.dot(pg) <= 0.0) {
      d = pg;
      h.setIdentity();
      h_is_identity = true;
    }
    const double dmax = d.lpNorm<Eigen::Infinity>();
    if (dmax > opts.max_step) d *= opts.max_step / dmax;

    // Backtracking; the next step comes from a quadratic fit along d, kept
    // within [0.1, 0.5] of the current one.
    bool accepted = false;
    double step = 1.0;
    const double slope = g.dot(d);
    Eigen::Vector3d x_new;
    for (int ls = 0; ls < 40 && !accepted; ++ls) {
      x_new = (x + step * d).cwiseMax(lo).cwiseMin(hi);
      if (x_new == x) break;
      double next = 0.5 * step;
      try {
        GPFit trial = fit_gp(data, KernelHyperparams::from_vector(x_new));
        ++result.evaluations;
        if (trial.lml > f && trial.lml >= f + 1e-4 * g.dot(x_new - x)) {
          result.fit = std::move(trial);
          accepted = true;
        } else {
          const double curvature = f + slope * step - trial.lml;
          if (curvature > 0.0) next = slope * step * step / (2.0 * curvature);
          next = std::clamp(next, 0.1 * step, 0.5 * step);
        }
      } catch (const NumericalError&) {
        ++result.evaluations;
      }
      step = next;
    }
    if (!accepted) {
      if (h_is_identity) break;
      h.setIdentity();
      h_is_identity = true;
      continue;
    }

    const Eigen::Vector3d g_new = lml_gradient(result.fit);
    const Eigen::Vector3d s = x_new - x;
    const Eigen::Vector3d y = g - g_new;  // change in gradient of -f
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (h_is_identity) {
        h *= sy / y.squaredNorm();
      }
      const double rho = 1.0 / sy;
      const Eigen::Matrix3d v = Eigen::Matrix3d::Identity() - rho * s * y.transpose();
      h = v * h * v.transpose() + rho * s * s.transpose();
      h_is_identity = false;
    }
    x = x_new;
    f = result.fit.lml;
    g = g_new;
    ++result.iterations;
  }
  if (!result.converged) {
    result.converged = projected(g, x, lo, hi).lpNorm<Eigen::Infinity>() < opts.grad_tol;
  }
  if (!h_is_identity) result.inverse_hessian = h;
  return result;
}

PredictiveGaussian gp_predict(const GPFit& fit, PointsRef test) {
  check_dims(fit.inputs, test);
  const Eigen::MatrixXd ks = rbf_covariance(fit.inputs, test, fit.theta);  // n x m
  PredictiveGaussian out;
  out.mean = ks.transpose() * fit.alpha;
  const Eigen::MatrixXd v = fit.chol.matrixL().solve(ks);
  const double sf2 = fit.theta.signal_var();
  const double sn2 = fit.theta.noise_var();
  out.variance.resize(test.rows());
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const double latent = std::max(0.0, sf2 - v.col(i).squaredNorm());
    out.variance[i] = latent + sn2;
  }
  return out;
}

PredictiveGaussian gp_predict(const GPDataView& train, const KernelHyperparams& theta,
                              PointsRef test) {
  return gp_predict(fit_gp(train, theta), test);
}

KernelHyperparams default_hyperparams(PointsRef inputs, VectorRef outputs) {
  KernelHyperparams theta;
  const auto n = static_cast<double>(inputs.rows());
  double input_sd = 0.0;
  double output_var = 0.0;
  if (inputs.rows() > 0) {
    const Eigen::RowVectorXd mean = inputs.colwise().mean();
    const double mean_var =
        (inputs.rowwise() - mean).array().square().colwise().sum().mean() / n;
    input_sd = std::sqrt(mean_var);
    const double ymean = outputs.mean();
    output_var = (outputs.array() - ymean).square().sum() / n;
  }
  theta.log_lengthscale = std::log(std::max(input_sd, 1e-3));
  theta.log_signal_var = std::log(std::max(output_var, 1e-6));
  theta.log_noise_var = std::log(std::max(0.1 * output_var, 1e-8));
  return theta;
}

}  // namespace ogpmoe
