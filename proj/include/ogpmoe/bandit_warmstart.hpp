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

#include "ogpmoe/kernel_gp.hpp"
#include "ogpmoe/particle.hpp"

#include <string>
#include <vector>

namespace ogpmoe {

struct ParticleEnsemble;

struct ArmProvenance {
  std::string run_id;
  int particle = 0;
  int cluster = 0;

  bool operator==(const ArmProvenance&) const = default;
};

/// A candidate kernel configuration harvested from a fitted model.
struct Arm {
  KernelHyperparams theta;
  ArmProvenance provenance;
  double harvest_lml = 0.0;

  bool operator==(const Arm&) const = default;
};

struct ArmPool {
  std::vector<Arm> arms;
  int version = 0;  // incremented once per appended arm

  [[nodiscard]] bool empty() const { return arms.empty(); }
  void append(Arm arm);

  bool operator==(const ArmPool&) const = default;
};

/// Arms = the experts of the highest-weight particle (lowest index on ties).
/// Throws StateError if the ensemble has not absorbed any data.
ArmPool harvest_arms(const ParticleEnsemble& ens, const std::string& run_id);

struct ArmSelection {
  std::size_t index = 0;
  double reward = 0.0;  // tempered log marginal likelihood
  GPFit fit;
};

/// Evaluates every arm's marginal likelihood on the data and returns the best
/// (first in pool order on ties). No gradient steps are taken. Arms whose
/// factorization fails are skipped; NumericalError if all of them fail.
ArmSelection select_arm(const ArmPool& pool, const GPDataView& cluster_data);

struct WarmStartOptions {
  bool allow_new_arm = false;
  // Run the gradient optimizer from the selected arm afterwards.
  bool refine = false;
  OptimizerConfig optimizer;
};

struct WarmRefreshResult {
  int refreshed = 0;
  long optimizer_iterations = 0;
  long evaluations = 0;
  // Fresh configurations that beat every pooled arm; merged into the pool by
  // the caller at the end-of-batch synchronization point.
  std::vector<Arm> new_arms;
};

/// Replaces gradient optimization for each dirty expert with arm selection.
/// With allow_new_arm, one optimization from the data-driven default is run per
/// dirty expert and adopted (and proposed as a new arm) when it beats the best arm.
WarmRefreshResult warm_refresh(Particle& p, const ArmPool& pool, const WarmStartOptions& opts,
                               int minibatch, RandomStream& rng, const std::string& run_id = "",
                               int particle_index = 0);

}  // namespace ogpmoe
