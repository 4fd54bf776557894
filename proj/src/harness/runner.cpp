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

#include "ogpmoe/harness/runner.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/random_stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace ogpmoe::harness {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kSplitStream = 0x53504C4954ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

MixturePrediction predict_single(const Particle& p, PointsRef x, const NIWPrior& prior,
                                 double alpha, const KernelHyperparams& base_theta) {
  MixturePrediction pred = particle_predict(p, x, prior, alpha, base_theta);
  pred.log_weights.array() += p.log_weight;
  return pred;
}

}  // namespace

nlohmann::json prior_to_json(const NIWPrior& p) {
  nlohmann::json psi = nlohmann::json::array();
  for (Eigen::Index r = 0; r < p.psi.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < p.psi.cols(); ++c) row.push_back(p.psi(r, c));
    psi.push_back(row);
  }
  return {{"mu0", std::vector<double>(p.mu0.data(), p.mu0.data() + p.mu0.size())},
          {"lambda", p.lambda},
          {"psi", psi},
          {"nu", p.nu}};
}

NIWPrior prior_from_json(const nlohmann::json& j) {
  NIWPrior p;
  const auto mu0 = j.at("mu0").get<std::vector<double>>();
  const auto d = static_cast<Eigen::Index>(mu0.size());
  p.mu0 = Eigen::Map<const Eigen::VectorXd>(mu0.data(), d);
  p.lambda = j.at("lambda").get<double>();
  p.nu = j.at("nu").get<double>();
  const auto& psi = j.at("psi");
  if (!psi.is_array() || static_cast<Eigen::Index>(psi.size()) != d) {
    throw InputError("prior: psi has the wrong shape");
  }
  p.psi.resize(d, d);
  for (Eigen::Index r = 0; r < d; ++r) {
    const auto row = psi.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != d) throw InputError("prior: psi has the wrong shape");
    for (Eigen::Index c = 0; c < d; ++c) p.psi(r, c) = row[static_cast<std::size_t>(c)];
  }
  return p;
}

void StreamPlan::validate() const {
  if (train_blocks < 1) throw InputError("stream plan: at least one training block is required");
  if (test_blocks < 0) throw InputError("stream plan: test_blocks must be >= 0");
}

nlohmann::json config_to_json(const EngineConfig& c) {
  nlohmann::json j = {
      {"particles", c.particles},
      {"alpha", c.alpha},
      {"minibatch", c.minibatch},
      {"resample_threshold", c.resample_threshold},
      {"seed", c.seed},
      {"run_id", c.run_id},
      {"optimizer",
       {{"max_iters", c.optimizer.max_iters},
        {"grad_tol", c.optimizer.grad_tol},
        {"lower_bound", c.optimizer.lower_bound},
        {"upper_bound", c.optimizer.upper_bound},
        {"max_step", c.optimizer.max_step}}},
      {"warm", {{"allow_new_arm", c.warm.allow_new_arm}, {"refine", c.warm.refine}}},
  };
  j["prior"] = c.prior ? prior_to_json(*c.prior) : nlohmann::json(nullptr);
  return j;
}

EngineConfig config_from_json(const nlohmann::json& j) {
  EngineConfig c;
  c.particles = j.at("particles").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.minibatch = j.at("minibatch").get<int>();
  c.resample_threshold = j.at("resample_threshold").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.run_id = j.at("run_id").get<std::string>();
  const auto& o = j.at("optimizer");
  c.optimizer.max_iters = o.at("max_iters").get<int>();
  c.optimizer.grad_tol = o.at("grad_tol").get<double>();
  c.optimizer.lower_bound = o.at("lower_bound").get<double>();
  c.optimizer.upper_bound = o.at("upper_bound").get<double>();
  c.optimizer.max_step = o.at("max_step").get<double>();
  const auto& w = j.at("warm");
  c.warm.allow_new_arm = w.at("allow_new_arm").get<bool>();
  c.warm.refine = w.at("refine").get<bool>();
  if (!j.at("prior").is_null()) c.prior = prior_from_json(j.at("prior"));
  return c;
}

Score metrics_from_predictions(const std::vector<PointPrediction>& predictions) {
  Score s;
  if (predictions.empty()) return s;
  double sq = 0.0;
  for (const auto& p : predictions) {
    s.pred_ll += p.log_density;
    sq += (p.mean - p.y) * (p.mean - p.y);
  }
  s.pred_mse = sq / static_cast<double>(predictions.size());
  return s;
}

std::vector<Dataset> split_blocks(const Dataset& data, int blocks) {
  const std::size_t n = data.size();
  const auto b = static_cast<std::size_t>(std::clamp<long>(blocks, 1, static_cast<long>(n)));
  std::vector<Dataset> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t len = n / b + (i < n % b ? 1 : 0);
    out.push_back(data.slice(begin, begin + len));
    begin += len;
  }
  return out;
}

Dataset order_training(const Dataset& train, const StreamPlan& plan, std::uint64_t seed) {
  if (plan.ordering == Ordering::kTimeOrdered) return train;
  std::vector<Eigen::Index> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng(seed, kShuffleStream, 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  Dataset out{PointMatrix(train.inputs.rows(), train.inputs.cols()),
              Eigen::VectorXd(train.outputs.size())};
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = train.inputs.row(order[i]);
    out.outputs[static_cast<Eigen::Index>(i)] = train.outputs[order[i]];
  }
  return out;
}

TrainTestSplit split_train_test(const Dataset& data, double test_fraction, bool random,
                                std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InputError("split: test fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n) throw InputError("split: leaves an empty train or test set");
  std::vector<bool> held(n, false);
  if (random) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    RandomStream rng(seed, kSplitStream, 0);
    for (std::size_t i = 0; i < n_test; ++i) {
      std::swap(order[i], order[i + rng.below(n - i)]);
      held[order[i]] = true;
    }
  } else {
    for (std::size_t i = n - n_test; i < n; ++i) held[i] = true;
  }
  TrainTestSplit out;
  const auto d = static_cast<Eigen::Index>(data.dim());
  out.train = {PointMatrix(static_cast<Eigen::Index>(n - n_test), d),
               Eigen::VectorXd(static_cast<Eigen::Index>(n - n_test))};
  out.test = {PointMatrix(static_cast<Eigen::Index>(n_test), d),
              Eigen::VectorXd(static_cast<Eigen::Index>(n_test))};
  Eigen::Index a = 0;
  Eigen::Index b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Dataset& dst = held[i] ? out.test : out.train;
    Eigen::Index& k = held[i] ? b : a;
    dst.inputs.row(k) = data.inputs.row(r);
    dst.outputs[k] = data.outputs[r];
    ++k;
  }
  return out;
}

void record_block(const MixturePrediction& pred, const Dataset& block, int block_id,
                  std::vector<PointPrediction>& out) {
  const Eigen::VectorXd mean = pred.mean();
  const Eigen::VectorXd var = pred.variance();
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(block.size()); ++i) {
    PointPrediction p;
    p.x = block.inputs.row(i).transpose();
    p.mean = mean[i];
    p.variance = var[i];
    p.y = block.outputs[i];
    p.log_density = pred.log_density(i, p.y);
    p.block = block_id;
    out.push_back(std::move(p));
  }
}

namespace {

RunRecord run_streamed(const std::string& command, const Dataset& train, const Dataset& test,
                       const StreamPlan& plan, const EngineConfig& config,
                       std::optional<ArmPool> pool, ParticleEnsemble* final_state) {
  plan.validate();
  config.validate();
  if (train.empty()) throw InputError("run: empty training set");
  if (test.empty()) throw InputError("run: empty test set");
  if (test.dim() != train.dim()) throw InputError("run: train/test dimension mismatch");

  RunRecord record;
  record.command = command;
  record.config = config_to_json(config);
  record.seed = config.seed;

  const auto t0 = Clock::now();
  const auto blocks = split_blocks(order_training(train, plan, config.seed), plan.train_blocks);
  ParticleEnsemble ens = init_ensemble(blocks.front(), config, std::move(pool));
  record.steps.push_back(ens.last_report);
  for (std::size_t b = 1; b < blocks.size(); ++b) record.steps.push_back(step(ens, blocks[b]));

  if (plan.test_blocks > 0) {
    const auto test_parts = split_blocks(test, plan.test_blocks);
    for (std::size_t b = 0; b < test_parts.size(); ++b) {
      record_block(ensemble_predict(ens, test_parts[b].inputs), test_parts[b],
                   static_cast<int>(b), record.predictions);
      record.steps.push_back(step(ens, test_parts[b]));
    }
  } else {
    record_block(ensemble_predict(ens, test.inputs), test, 0, record.predictions);
  }
  record.wall_time_seconds = seconds_since(t0);

  for (const auto& s : record.steps) record.optimizer_iterations += s.optimizer_iterations;
  record.metrics = metrics_from_predictions(record.predictions);
  record.completed = true;
  if (final_state) *final_state = std::move(ens);
  return record;
}

}  // namespace

RunRecord run_fit(const Dataset& train, const Dataset& test, const StreamPlan& plan,
                  const EngineConfig& config, ParticleEnsemble* final_state) {
  return run_streamed("fit", train, test, plan, config, std::nullopt, final_state);
}

RunRecord run_warmfit(const Dataset& train, const Dataset& test, const StreamPlan& plan,
                      const EngineConfig& config, const ArmPool& pool,
                      ParticleEnsemble* final_state) {
  if (pool.empty()) throw InputError("warm fit: the arm pool is empty");
  return run_streamed("warm-fit", train, test, plan, config, pool, final_state);
}

RunRecord run_track(const Dataset& data, double split_fraction, const EngineConfig& config,
                    ParticleEnsemble* final_state) {
  config.validate();
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw InputError("track: split fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) {
    throw InputError("track: the split leaves no training or no tracking points");
  }

  RunRecord record;
  record.command = "track";
  record.config = config_to_json(config);
  record.seed = config.seed;

  const auto t0 = Clock::now();
  ParticleEnsemble ens = init_ensemble(data.slice(0, n_train), config);
  record.steps.push_back(ens.last_report);
  for (std::size_t i = n_train; i < n; ++i) {
    const Dataset point = data.slice(i, i + 1);
    record_block(ensemble_predict(ens, point.inputs), point, static_cast<int>(i - n_train),
                 record.predictions);
    record.steps.push_back(step(ens, point));
  }
  record.wall_time_seconds = seconds_since(t0);
  for (const auto& s : record.steps) record.optimizer_iterations += s.optimizer_iterations;
  record.metrics = metrics_from_predictions(record.predictions);
  record.completed = true;
  if (final_state) *final_state = std::move(ens);
  return record;
}

RunRecord run_local_gp(const Dataset& train, const Dataset& test, const StreamPlan& plan,
                       const EngineConfig& config) {
  plan.validate();
  config.validate();
  if (train.empty() || test.empty()) throw InputError("local GP: empty train or test set");

  RunRecord record;
  record.command = "local-gp";
  record.config = config_to_json(config);
  record.seed = config.seed;

  const auto t0 = Clock::now();
  const auto blocks = split_blocks(order_training(train, plan, config.seed), plan.train_blocks);
  const NIWPrior prior = config.prior ? *config.prior : default_niw_prior(blocks.front().inputs);
  const KernelHyperparams base_theta =
      default_hyperparams(blocks.front().inputs, blocks.front().outputs);
  Particle p(train.dim(), 0);
  int batch_id = 0;

  auto absorb = [&](const Dataset& batch) {
    RandomStream rng(config.seed, p.stream_key, static_cast<std::uint64_t>(batch_id));
    assign_batch(p, batch, batch_id, config.alpha, prior, rng);
    const RefreshStats r = refresh_hyperparams(p, config.optimizer, config.minibatch, rng);
    log_weight_increment(p);
    p.log_weight = 0.0;  // a single hypothesis carries all the weight
    StepReport s;
    s.step = batch_id;
    s.batch_size = static_cast<int>(batch.size());
    s.ess = 1.0;
    s.cluster_counts = {p.num_clusters()};
    s.refresh_counts = {r.refreshed};
    s.optimizer_iterations = r.optimizer_iterations;
    s.evaluations = r.evaluations;
    record.steps.push_back(s);
    ++batch_id;
  };

  for (const auto& b : blocks) absorb(b);
  if (plan.test_blocks > 0) {
    const auto test_parts = split_blocks(test, plan.test_blocks);
    for (std::size_t b = 0; b < test_parts.size(); ++b) {
      record_block(predict_single(p, test_parts[b].inputs, prior, config.alpha, base_theta),
                   test_parts[b], static_cast<int>(b), record.predictions);
      absorb(test_parts[b]);
    }
  } else {
    record_block(predict_single(p, test.inputs, prior, config.alpha, base_theta), test, 0,
                 record.predictions);
  }
  record.wall_time_seconds = seconds_since(t0);
  for (const auto& s : record.steps) record.optimizer_iterations += s.optimizer_iterations;
  record.metrics = metrics_from_predictions(record.predictions);
  record.completed = true;
  return record;
}

}  // namespace ogpmoe::harness
