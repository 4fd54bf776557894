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

#include "ogpmoe/bandit_warmstart.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/smc_engine.hpp"

#include <limits>
#include <optional>

namespace ogpmoe {

void ArmPool::append(Arm arm) {
  arms.push_back(std::move(arm));
  ++version;
}

ArmPool harvest_arms(const ParticleEnsemble& ens, const std::string& run_id) {
  if (ens.step_counter < 1 || ens.particles.empty()) {
    throw StateError("harvest_arms: the ensemble has not been fitted");
  }
  std::size_t best = 0;
  for (std::size_t j = 1; j < ens.particles.size(); ++j) {
    if (ens.particles[j].log_weight > ens.particles[best].log_weight) best = j;
  }
  ArmPool pool;
  const auto& p = ens.particles[best];
  for (int k = 0; k < p.num_clusters(); ++k) {
    const auto& e = p.experts[static_cast<std::size_t>(k)];
    pool.append(Arm{e.theta, {run_id, static_cast<int>(best), k}, e.cached_lml});
  }
  return pool;
}

ArmSelection select_arm(const ArmPool& pool, const GPDataView& cluster_data) {
  if (pool.empty()) throw InputError("select_arm: empty arm pool");
  if (cluster_data.empty()) throw InputError("select_arm: no data");
  std::optional<ArmSelection> best;
  for (std::size_t i = 0; i < pool.arms.size(); ++i) {
    try {
      GPFit fit = fit_gp(cluster_data, pool.arms[i].theta);
      if (!best || fit.lml > best->reward) {
        const double reward = fit.lml;
        best = ArmSelection{i, reward, std::move(fit)};
      }
    } catch (const NumericalError&) {
    }
  }
  if (!best) throw NumericalError("select_arm: every arm failed to evaluate");
  return std::move(*best);
}

WarmRefreshResult warm_refresh(Particle& p, const ArmPool& pool, const WarmStartOptions& opts,
                               int minibatch, RandomStream& rng, const std::string& run_id,
                               int particle_index) {
  WarmRefreshResult out;
  for (std::size_t k = 0; k < p.experts.size(); ++k) {
    auto& e = p.experts[k];
    if (!e.dirty) continue;
    double temper = 1.0;
    const Dataset data = prepare_fitting_data(e, minibatch, rng, &temper);
    const GPDataView view(data.inputs, data.outputs, temper);

    ArmSelection sel = select_arm(pool, view);
    GPFit chosen = std::move(sel.fit);
    if (opts.refine) {
      OptimizeResult r = optimize_hyperparams(view, chosen.theta, opts.optimizer);
      out.optimizer_iterations += r.iterations;
      out.evaluations += r.evaluations;
      chosen = std::move(r.fit);
    }
    if (opts.allow_new_arm) {
      OptimizeResult fresh = optimize_hyperparams(
          view, default_hyperparams(data.inputs, data.outputs), opts.optimizer);
      out.optimizer_iterations += fresh.iterations;
      out.evaluations += fresh.evaluations;
      if (fresh.fit.lml > chosen.lml) {
        out.new_arms.push_back(Arm{fresh.fit.theta, {run_id, particle_index, static_cast<int>(k)},
                                   fresh.fit.lml});
        chosen = std::move(fresh.fit);
      }
    }
    adopt_fit(e, std::move(chosen));
    ++out.refreshed;
  }
  return out;
}

}  // namespace ogpmoe
