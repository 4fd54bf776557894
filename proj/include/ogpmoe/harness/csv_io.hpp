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

#include <string>
#include <vector>

namespace ogpmoe::harness {

/// Output standardization (population standard deviation).
struct Normalization {
  double mean = 0.0;
  double sd = 1.0;
  bool applied = false;

  [[nodiscard]] double forward(double y) const { return applied ? (y - mean) / sd : y; }
  [[nodiscard]] double inverse(double z) const { return applied ? z * sd + mean : z; }
};

struct CsvDataset {
  Dataset data;
  Normalization normalization;
  std::vector<std::string> header;  // empty when the file has none
};

/// Reads a numeric CSV: the first D columns are inputs, the last is the
/// output. A non-numeric first line is treated as a header. With `normalize`
/// the output column is standardized to zero mean and unit variance.
CsvDataset ingest_csv(const std::string& path, bool normalize);

/// Same as ingest_csv but from in-memory text; `source` names it in errors.
CsvDataset parse_csv(const std::string& text, bool normalize, const std::string& source = "<csv>");

/// Writes `x0..x{D-1},y` (or the given header) with round-trip precision.
void write_csv_dataset(const std::string& path, const Dataset& data,
                       const std::vector<std::string>& header = {});

}  // namespace ogpmoe::harness
