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

#include <cstdint>

namespace ogpmoe::harness {

/// Piecewise periodic regression problem: sin(slow_freq * pi * x) below the
/// breakpoint, sin(fast_freq * pi * x) above it, plus Gaussian noise.
struct SyntheticSpec {
  int n_train = 1000;
  int n_test = 100;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  double domain_lo = 0.0;
  double domain_hi = 10.0;
  double breakpoint = 5.0;
  double slow_freq = 0.6;
  double fast_freq = 4.0;
  // Sort each split by input, for streaming in time order.
  bool time_ordered = false;

  void validate() const;
};

double regime_function(const SyntheticSpec& spec, double x);

struct SyntheticData {
  Dataset train;
  Dataset test;
};

/// Inputs uniform on [domain_lo, domain_hi); deterministic per seed.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace ogpmoe::harness
