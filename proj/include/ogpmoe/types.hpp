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

#include <Eigen/Dense>

#include <cstddef>

namespace ogpmoe {

/// Points are stored one per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PointsRef = Eigen::Ref<const PointMatrix>;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// A set of (input, output) observations.
struct Dataset {
  PointMatrix inputs;
  Eigen::VectorXd outputs;

  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(outputs.size()); }
  [[nodiscard]] int dim() const { return static_cast<int>(inputs.cols()); }
  [[nodiscard]] bool empty() const { return outputs.size() == 0; }

  /// Rows [begin, end).
  [[nodiscard]] Dataset slice(std::size_t begin, std::size_t end) const;
};

inline Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  const auto b = static_cast<Eigen::Index>(begin);
  const auto n = static_cast<Eigen::Index>(end - begin);
  return Dataset{inputs.middleRows(b, n), outputs.segment(b, n)};
}

}  // namespace ogpmoe
