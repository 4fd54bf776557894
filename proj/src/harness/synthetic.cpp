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

#include "ogpmoe/harness/synthetic.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/random_stream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace ogpmoe::harness {

namespace {

constexpr std::uint64_t kSyntheticStream = 0x53594E5448ULL;

Dataset sorted_by_input(const Dataset& d) {
  std::vector<Eigen::Index> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return d.inputs(a, 0) < d.inputs(b, 0); });
  Dataset out{PointMatrix(d.inputs.rows(), d.inputs.cols()), Eigen::VectorXd(d.outputs.size())};
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = d.inputs.row(order[i]);
    out.outputs[static_cast<Eigen::Index>(i)] = d.outputs[order[i]];
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_train < 1 || n_test < 1) throw InputError("synthetic: n_train and n_test must be >= 1");
  if (!(noise_sd >= 0.0)) throw InputError("synthetic: noise_sd must be >= 0");
  if (!(domain_hi > domain_lo)) throw InputError("synthetic: empty domain");
}

double regime_function(const SyntheticSpec& spec, double x) {
  const double freq = x < spec.breakpoint ? spec.slow_freq : spec.fast_freq;
  return std::sin(freq * std::numbers::pi * x);
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RandomStream rng(spec.seed, kSyntheticStream, 0);
  const int total = spec.n_train + spec.n_test;
  Dataset all{PointMatrix(total, 1), Eigen::VectorXd(total)};
  for (int i = 0; i < total; ++i) {
    const double x = spec.domain_lo + (spec.domain_hi - spec.domain_lo) * rng.uniform();
    const double noise = spec.noise_sd > 0.0 ? spec.noise_sd * rng.normal() : 0.0;
    all.inputs(i, 0) = x;
    all.outputs[i] = regime_function(spec, x) + noise;
  }
  SyntheticData out{all.slice(0, static_cast<std::size_t>(spec.n_train)),
                    all.slice(static_cast<std::size_t>(spec.n_train), static_cast<std::size_t>(total))};
  if (spec.time_ordered) {
    out.train = sorted_by_input(out.train);
    out.test = sorted_by_input(out.test);
  }
  return out;
}

}  // namespace ogpmoe::harness
