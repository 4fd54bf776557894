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

#include <cstdint>
#include <limits>

namespace ogpmoe {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Combines a parent key with two coordinates into a new, well-mixed key.
std::uint64_t derive_key(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0);

/// Counter-based random stream.
///
/// The n-th output is a pure function of (seed, stream, step, n), so streams
/// handed to different workers never depend on scheduling. Satisfies
/// UniformRandomBitGenerator; uniform() and normal() are implemented here
/// rather than through <random> distributions so that sequences are identical
/// across standard library implementations.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t step);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  /// Standard normal (Box-Muller, no cached second variate).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ogpmoe
