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

#include "ogpmoe/particle.hpp"

#include "ogpmoe/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace ogpmoe {

Eigen::Map<const PointMatrix> ExpertState::input_matrix() const {
  const auto n = static_cast<Eigen::Index>(outputs.size());
  const Eigen::Index d = n > 0 ? static_cast<Eigen::Index>(inputs.size()) / n : stats.dim();
  return {inputs.data(), n, d};
}

Eigen::Map<const Eigen::VectorXd> ExpertState::output_vector() const {
  return {outputs.data(), static_cast<Eigen::Index>(outputs.size())};
}

Dataset ExpertState::fitting_data(double* temper_power) const {
  const auto x = input_matrix();
  const auto y = output_vector();
  if (subsample.empty()) {
    if (temper_power) *temper_power = 1.0;
    return Dataset{x, y};
  }
  const auto b = static_cast<Eigen::Index>(subsample.size());
  Dataset out{PointMatrix(b, x.cols()), Eigen::VectorXd(b)};
  for (Eigen::Index i = 0; i < b; ++i) {
    out.inputs.row(i) = x.row(subsample[i]);
    out.outputs[i] = y[subsample[i]];
  }
  if (temper_power) *temper_power = static_cast<double>(size()) / static_cast<double>(b);
  return out;
}

int Particle::total_points() const {
  int n = 0;
  for (const auto& e : experts) n += e.stats.count;
  return n;
}

std::vector<ClusterStats> Particle::cluster_stats() const {
  std::vector<ClusterStats> out;
  out.reserve(experts.size());
  for (const auto& e : experts) out.push_back(e.stats);
  return out;
}

double Particle::total_cached_lml() const {
  double total = 0.0;
  for (const auto& e : experts) total += e.cached_lml;
  return total;
}

void absorb_point(Particle& p, int cluster, VectorRef x, double y) {
  if (x.size() != p.dim) throw InputError("absorb_point: dimension mismatch");
  if (cluster < 0 || cluster > p.num_clusters()) {
    throw InputError("absorb_point: cluster id out of range");
  }
  if (cluster == p.num_clusters()) {
    ExpertState e;
    e.stats = ClusterStats::empty(p.dim);
    p.experts.push_back(std::move(e));
  }
  auto& e = p.experts[cluster];
  e.stats = update_stats(e.stats, x);
  e.inputs.insert(e.inputs.end(), x.data(), x.data() + x.size());
  e.outputs.push_back(y);
  e.dirty = true;
  e.fit.reset();
}

std::vector<int> assign_batch(Particle& p, const Dataset& batch, int batch_id, double alpha,
                              const NIWPrior& prior, RandomStream& rng) {
  if (batch.empty()) throw InputError("assign_batch: empty batch");
  if (batch.dim() != p.dim || prior.dim() != p.dim) {
    throw InputError("assign_batch: batch dimension does not match the particle");
  }
  const auto stats = p.cluster_stats();
  CrpScorer scorer(stats, alpha, prior);
  std::vector<int> ids;
  ids.reserve(batch.size());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(batch.size()); ++i) {
    const Eigen::VectorXd x = batch.inputs.row(i).transpose();
    const int k = sample_assignment(scorer.logprobs(x), rng);
    absorb_point(p, k, x, batch.outputs[i]);
    scorer.set_cluster(static_cast<std::size_t>(k), p.experts[k].stats);
    p.assignment_log.push_back({batch_id, static_cast<int>(i), k});
    ids.push_back(k);
  }
  return ids;
}

Dataset prepare_fitting_data(ExpertState& e, int minibatch, RandomStream& rng,
                             double* temper_power) {
  e.subsample.clear();
  if (minibatch > 0 && e.size() > minibatch) {
    // Partial Fisher-Yates: the first `minibatch` slots are a uniform sample.
    std::vector<int> idx(static_cast<std::size_t>(e.size()));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < minibatch; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(e.size() - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(minibatch));
    std::sort(idx.begin(), idx.end());
    e.subsample = std::move(idx);
  }
  return e.fitting_data(temper_power);
}

void adopt_fit(ExpertState& e, GPFit fit) {
  e.theta = fit.theta;
  e.cached_lml = fit.lml;
  e.fit = std::make_shared<const GPFit>(std::move(fit));
  e.dirty = false;
  e.fitted = true;
  e.curvature.reset();
}

RefreshStats refresh_hyperparams(Particle& p, const OptimizerConfig& opts, int minibatch,
                                 RandomStream& rng) {
  RefreshStats out;
  for (auto& e : p.experts) {
    if (!e.dirty) continue;
    double temper = 1.0;
    const Dataset data = prepare_fitting_data(e, minibatch, rng, &temper);
    const GPDataView view(data.inputs, data.outputs, temper);
    const KernelHyperparams start =
        e.fitted ? e.theta : default_hyperparams(data.inputs, data.outputs);
    OptimizeResult r =
        optimize_hyperparams(view, start, opts, e.curvature ? &*e.curvature : nullptr);
    out.optimizer_iterations += r.iterations;
    out.evaluations += r.evaluations;
    adopt_fit(e, std::move(r.fit));
    e.curvature = r.inverse_hessian;
    ++out.refreshed;
  }
  return out;
}

int refresh_cached_likelihoods(Particle& p, int minibatch, RandomStream& rng) {
  int touched = 0;
  for (auto& e : p.experts) {
    if (!e.dirty) continue;
    double temper = 1.0;
    const Dataset data = prepare_fitting_data(e, minibatch, rng, &temper);
    const GPDataView view(data.inputs, data.outputs, temper);
    const KernelHyperparams theta =
        e.fitted ? e.theta : default_hyperparams(data.inputs, data.outputs);
    adopt_fit(e, fit_gp(view, theta));
    ++touched;
  }
  return touched;
}

double log_weight_increment(Particle& p) {
  for (const auto& e : p.experts) {
    if (e.dirty) throw StateError("log_weight_increment: refresh the particle first");
  }
  const double total = p.total_cached_lml();
  const double inc = total - p.previous_total_lml;
  p.previous_total_lml = total;
  p.log_weight += inc;
  return inc;
}

Eigen::VectorXd MixturePrediction::mean() const {
  Eigen::VectorXd out(num_points());
  for (Eigen::Index i = 0; i < num_points(); ++i) {
    const Eigen::ArrayXd w = log_weights.row(i).array().exp();
    out[i] = (w * means.row(i).transpose().array()).sum();
  }
  return out;
}

Eigen::VectorXd MixturePrediction::variance() const {
  Eigen::VectorXd out(num_points());
  for (Eigen::Index i = 0; i < num_points(); ++i) {
    const Eigen::ArrayXd w = log_weights.row(i).array().exp();
    const Eigen::ArrayXd mu = means.row(i).transpose().array();
    const Eigen::ArrayXd var = variances.row(i).transpose().array();
    const double m = (w * mu).sum();
    // second moment about the mixture mean avoids cancellation
    out[i] = (w * (var + (mu - m).square())).sum();
  }
  return out;
}

double MixturePrediction::log_density(Eigen::Index point, double y) const {
  static const double kLog2Pi = std::log(2.0 * std::numbers::pi);
  const auto c = log_weights.cols();
  Eigen::VectorXd terms(c);
  for (Eigen::Index k = 0; k < c; ++k) {
    const double v = variances(point, k);
    const double r = y - means(point, k);
    terms[k] = log_weights(point, k) - 0.5 * (kLog2Pi + std::log(v) + r * r / v);
  }
  return log_sum_exp(terms);
}

MixturePrediction particle_predict(const Particle& p, PointsRef test, const NIWPrior& prior,
                                   double alpha, const KernelHyperparams& new_cluster_theta) {
  if (p.experts.empty()) throw StateError("particle_predict: particle has no experts");
  if (test.cols() != p.dim) throw InputError("particle_predict: test dimension mismatch");
  const Eigen::Index m = test.rows();
  const Eigen::Index k = p.num_clusters();
  MixturePrediction out{Eigen::MatrixXd(m, k + 1), Eigen::MatrixXd(m, k + 1),
                        Eigen::MatrixXd(m, k + 1)};

  const auto stats = p.cluster_stats();
  const CrpScorer scorer(stats, alpha, prior);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.log_weights.row(i) = scorer.logprobs(test.row(i).transpose()).transpose();
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto& e = p.experts[c];
    PredictiveGaussian pred;
    if (e.fit) {
      pred = gp_predict(*e.fit, test);
    } else {
      double temper = 1.0;
      const Dataset data = e.fitting_data(&temper);
      pred = gp_predict(GPDataView(data.inputs, data.outputs, temper), e.theta, test);
    }
    out.means.col(c) = pred.mean;
    out.variances.col(c) = pred.variance;
  }
  out.means.col(k).setZero();
  out.variances.col(k).setConstant(new_cluster_theta.signal_var() + new_cluster_theta.noise_var());
  return out;
}

void replay_assignments(Particle& p, const std::vector<Dataset>& history,
                        const std::vector<AssignmentRecord>& log) {
  p.experts.clear();
  p.assignment_log.clear();
  for (const auto& r : log) {
    if (r.batch_id < 0 || r.batch_id >= static_cast<int>(history.size())) {
      throw InputError("replay: assignment refers to an unknown batch");
    }
    const Dataset& b = history[static_cast<std::size_t>(r.batch_id)];
    if (r.point_index < 0 || r.point_index >= static_cast<int>(b.size())) {
      throw InputError("replay: assignment refers to an unknown point");
    }
    absorb_point(p, r.cluster_id, b.inputs.row(r.point_index).transpose(),
                 b.outputs[r.point_index]);
    p.assignment_log.push_back(r);
  }
}

}  // namespace ogpmoe
