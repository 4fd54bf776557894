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

#include "ogpmoe/bandit_warmstart.hpp"
#include "ogpmoe/smc_engine.hpp"

#include "json.hpp"

#include <string>

namespace ogpmoe::harness {

inline constexpr int kModelFormatVersion = 1;
inline constexpr int kArmPoolFormatVersion = 1;

/// Line-oriented model file. The first line is "ogpmoe-model <version>";
/// every following line is "@<section> <json>", ending with a checksum line
/// covering all preceding bytes.
/// `metadata`, when not null, is stored in an optional "metadata" section.
std::string serialize_model(const ParticleEnsemble& ens,
                            const nlohmann::json& metadata = nullptr);

/// Rebuilds an ensemble whose next step is bitwise identical to the saved one.
/// Throws InputError on unsupported versions, missing or truncated sections,
/// schema violations and checksum mismatches.
ParticleEnsemble deserialize_model(const std::string& text, nlohmann::json* metadata = nullptr);

void save_model(const ParticleEnsemble& ens, const std::string& path,
                const nlohmann::json& metadata = nullptr);
ParticleEnsemble load_model(const std::string& path, nlohmann::json* metadata = nullptr);

std::string serialize_arm_pool(const ArmPool& pool);
ArmPool deserialize_arm_pool(const std::string& text);
void save_arm_pool(const ArmPool& pool, const std::string& path);
ArmPool load_arm_pool(const std::string& path);

}  // namespace ogpmoe::harness
