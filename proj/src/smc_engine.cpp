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

#include "ogpmoe/smc_engine.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/parallel.hpp"

#include <cmath>
#include <limits>

namespace ogpmoe {

namespace {

constexpr std::uint64_t kResampleStream = 0xFFFFFFFFFFFFFFFFULL;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct ParticleOutcome {
  int refreshed = 0;
  long optimizer_iterations = 0;
  long evaluations = 0;
  bool failed = false;
  std::vector<Arm> new_arms;
};

// The per-particle body of one batch update. Numerical failure removes the
// particle from the ensemble (weight zero) instead of aborting the step.
ParticleOutcome advance_particle(ParticleEnsemble& ens, std::size_t j, const Dataset& batch,
                                 int batch_id) {
  ParticleOutcome out;
  Particle& p = ens.particles[j];
  if (p.log_weight == kNegInf) {
    out.failed = true;
    return out;
  }
  const auto& cfg = ens.config;
  RandomStream rng(ens.master_seed, p.stream_key, static_cast<std::uint64_t>(batch_id));
  try {
    assign_batch(p, batch, batch_id, cfg.alpha, ens.prior, rng);
    if (ens.arm_pool) {
      WarmStartOptions warm = cfg.warm;
      warm.optimizer = cfg.optimizer;
      WarmRefreshResult r = warm_refresh(p, *ens.arm_pool, warm, cfg.minibatch, rng,
                                         cfg.run_id, static_cast<int>(j));
      out.refreshed = r.refreshed;
      out.optimizer_iterations = r.optimizer_iterations;
      out.evaluations = r.evaluations;
      out.new_arms = std::move(r.new_arms);
    } else {
      RefreshStats r = refresh_hyperparams(p, cfg.optimizer, cfg.minibatch, rng);
      out.refreshed = r.refreshed;
      out.optimizer_iterations = r.optimizer_iterations;
      out.evaluations = r.evaluations;
    }
    log_weight_increment(p);
  } catch (const NumericalError&) {
    p.log_weight = kNegInf;
    out.failed = true;
  }
  return out;
}

StepReport advance_all(ParticleEnsemble& ens, const Dataset& batch, int batch_id) {
  const std::size_t j_count = ens.particles.size();
  std::vector<ParticleOutcome> outcomes(j_count);
  parallel_for(j_count, ens.config.threads, [&](std::size_t j) {
    outcomes[j] = advance_particle(ens, j, batch, batch_id);
  });

  // Synchronization: fixed particle order from here on.
  StepReport report;
  report.step = batch_id;
  report.batch_size = static_cast<int>(batch.size());
  for (std::size_t j = 0; j < j_count; ++j) {
    report.refresh_counts.push_back(outcomes[j].refreshed);
    report.optimizer_iterations += outcomes[j].optimizer_iterations;
    report.evaluations += outcomes[j].evaluations;
    report.failed_particles += outcomes[j].failed ? 1 : 0;
    if (ens.arm_pool) {
      for (auto& arm : outcomes[j].new_arms) {
        ens.arm_pool->append(std::move(arm));
        ++report.arms_added;
      }
    }
  }
  return report;
}

void finish_report(const ParticleEnsemble& ens, StepReport& report) {
  report.cluster_counts.clear();
  for (const auto& p : ens.particles) report.cluster_counts.push_back(p.num_clusters());
}

}  // namespace

void EngineConfig::validate() const {
  if (particles < 1) throw InputError("config: particles must be >= 1");
  if (!(alpha > 0.0)) throw InputError("config: alpha must be positive");
  if (minibatch < 0) throw InputError("config: minibatch must be >= 0");
  if (!(resample_threshold >= 0.0 && resample_threshold <= 1.0)) {
    throw InputError("config: resample threshold must lie in [0, 1]");
  }
  if (threads < 1) throw InputError("config: threads must be >= 1");
  if (optimizer.max_iters < 1) throw InputError("config: optimizer max_iters must be >= 1");
  if (prior) prior->validate();
}

Eigen::VectorXd ParticleEnsemble::log_weights() const {
  Eigen::VectorXd w(particles.size());
  for (std::size_t j = 0; j < particles.size(); ++j) {
    w[static_cast<Eigen::Index>(j)] = particles[j].log_weight;
  }
  return w;
}

void normalize_log_weights(ParticleEnsemble& ens) {
  const double total = log_sum_exp(ens.log_weights());
  if (!std::isfinite(total)) {
    throw NumericalError("every particle failed; the ensemble has no finite weight");
  }
  for (auto& p : ens.particles) p.log_weight -= total;
}

double effective_sample_size(const Eigen::VectorXd& log_weights) {
  const double sum_sq = (2.0 * log_weights.array()).exp().sum();
  return 1.0 / sum_sq;
}

std::vector<int> systematic_resample_indices(const Eigen::VectorXd& weights, double u) {
  const auto j_count = weights.size();
  std::vector<int> idx(static_cast<std::size_t>(j_count));
  const double total = weights.sum();
  double cumulative = weights[0] / total;
  Eigen::Index src = 0;
  for (Eigen::Index i = 0; i < j_count; ++i) {
    const double target = (static_cast<double>(i) + u) / static_cast<double>(j_count);
    while (target >= cumulative && src < j_count - 1) {
      ++src;
      cumulative += weights[src] / total;
    }
    // Never select a zero-weight particle, even when rounding lands on its interval.
    Eigen::Index pick = src;
    while (weights[pick] <= 0.0 && pick > 0) --pick;
    idx[static_cast<std::size_t>(i)] = static_cast<int>(pick);
  }
  return idx;
}

void resample(ParticleEnsemble& ens) {
  const auto step = static_cast<std::uint64_t>(ens.step_counter);
  RandomStream rng(ens.master_seed, kResampleStream, step);
  const Eigen::VectorXd w = ens.log_weights().array().exp();
  const auto idx = systematic_resample_indices(w, rng.uniform());
  const double log_uniform = -std::log(static_cast<double>(ens.particles.size()));
  std::vector<Particle> next;
  next.reserve(ens.particles.size());
  for (std::size_t slot = 0; slot < idx.size(); ++slot) {
    Particle child = ens.particles[static_cast<std::size_t>(idx[slot])];
    child.stream_key = derive_key(child.stream_key, step, slot);
    child.log_weight = log_uniform;
    next.push_back(std::move(child));
  }
  ens.particles = std::move(next);
}

ParticleEnsemble init_ensemble(const Dataset& first_batch, const EngineConfig& config,
                               std::optional<ArmPool> pool) {
  config.validate();
  if (first_batch.empty()) throw InputError("init_ensemble: empty first batch");
  if (pool && pool->empty()) throw InputError("init_ensemble: empty arm pool");

  ParticleEnsemble ens;
  ens.config = config;
  ens.master_seed = config.seed;
  ens.prior = config.prior ? *config.prior : default_niw_prior(first_batch.inputs);
  ens.prior.validate();
  if (ens.prior.dim() != first_batch.dim()) {
    throw InputError("init_ensemble: prior dimension does not match the data");
  }
  ens.base_theta = default_hyperparams(first_batch.inputs, first_batch.outputs);
  ens.arm_pool = std::move(pool);
  ens.history.push_back(first_batch);
  ens.particles.reserve(static_cast<std::size_t>(config.particles));
  for (int j = 0; j < config.particles; ++j) {
    ens.particles.emplace_back(first_batch.dim(), static_cast<std::uint64_t>(j));
  }

  StepReport report = advance_all(ens, first_batch, 0);
  normalize_log_weights(ens);
  report.ess = effective_sample_size(ens.log_weights());
  ens.step_counter = 1;
  finish_report(ens, report);
  ens.last_report = report;
  return ens;
}

StepReport step(ParticleEnsemble& ens, const Dataset& batch) {
  if (ens.step_counter < 1 || ens.particles.empty()) {
    throw StateError("step: the ensemble is not initialized");
  }
  if (batch.empty()) throw InputError("step: empty batch");
  if (batch.dim() != ens.dim()) throw InputError("step: batch dimension mismatch");

  const int batch_id = ens.step_counter;
  ens.history.push_back(batch);
  StepReport report = advance_all(ens, batch, batch_id);

  normalize_log_weights(ens);
  const double j_count = static_cast<double>(ens.particles.size());
  report.ess = effective_sample_size(ens.log_weights());
  if (report.ess < ens.config.resample_threshold * j_count) {
    resample(ens);
    report.resampled = true;
  }
  normalize_log_weights(ens);
  ++ens.step_counter;
  finish_report(ens, report);
  ens.last_report = report;
  return report;
}

MixturePrediction ensemble_predict(const ParticleEnsemble& ens, PointsRef test) {
  if (ens.particles.empty() || ens.step_counter < 1) {
    throw StateError("ensemble_predict: the ensemble is not initialized");
  }
  const std::size_t j_count = ens.particles.size();
  std::vector<MixturePrediction> parts(j_count);
  parallel_for(j_count, ens.config.threads, [&](std::size_t j) {
    const auto& p = ens.particles[j];
    if (p.log_weight == kNegInf) return;
    parts[j] = particle_predict(p, test, ens.prior, ens.config.alpha, ens.base_theta);
  });

  // Synchronization: concatenate components in particle order.
  Eigen::Index cols = 0;
  for (const auto& part : parts) cols += part.log_weights.cols();
  const Eigen::Index m = test.rows();
  MixturePrediction out{Eigen::MatrixXd(m, cols), Eigen::MatrixXd(m, cols),
                        Eigen::MatrixXd(m, cols)};
  Eigen::Index c = 0;
  for (std::size_t j = 0; j < j_count; ++j) {
    const auto& part = parts[j];
    const Eigen::Index k = part.log_weights.cols();
    if (k == 0) continue;
    out.log_weights.middleCols(c, k) = part.log_weights.array() + ens.particles[j].log_weight;
    out.means.middleCols(c, k) = part.means;
    out.variances.middleCols(c, k) = part.variances;
    c += k;
  }
  return out;
}

Score score_prediction(const MixturePrediction& pred, VectorRef y) {
  if (y.size() == 0 || y.size() != pred.num_points()) {
    throw InputError("score: test outputs do not match the prediction");
  }
  const Eigen::VectorXd mean = pred.mean();
  Score s;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    s.pred_ll += pred.log_density(i, y[i]);
  }
  s.pred_mse = (mean - y).squaredNorm() / static_cast<double>(y.size());
  return s;
}

Score score(const ParticleEnsemble& ens, const Dataset& test) {
  if (test.empty()) throw InputError("score: empty test set");
  return score_prediction(ensemble_predict(ens, test.inputs), test.outputs);
}

}  // namespace ogpmoe
