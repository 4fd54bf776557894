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

#include "ogpmoe/harness/csv_io.hpp"
#include "ogpmoe/harness/runner.hpp"

#include "json.hpp"

#include <string>

namespace ogpmoe::harness {

/// Shortest representation that round-trips exactly.
std::string format_double(double v);

/// Writes to `path`.tmp, then renames over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

/// metrics.json document; wall time and thread count live under "runtime".
/// Scores are on the model scale, with original-scale copies when normalized.
nlohmann::json metrics_json(const RunRecord& record, const Normalization& normalization,
                            int threads);

/// Predictions in the units of the input file (normalization undone).
std::string predictions_csv(const RunRecord& record, const Normalization& normalization);
std::string steps_csv(const RunRecord& record);

/// Writes metrics.json, predictions.csv and steps.csv into `dir` (created if needed).
void write_run_outputs(const std::string& dir, const RunRecord& record,
                       const Normalization& normalization, int threads);

}  // namespace ogpmoe::harness
