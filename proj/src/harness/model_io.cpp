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

#include "ogpmoe/harness/model_io.hpp"

#include "ogpmoe/errors.hpp"
#include "ogpmoe/harness/outputs.hpp"
#include "ogpmoe/harness/runner.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ogpmoe::harness {

namespace {

using nlohmann::json;

constexpr const char* kModelMagic = "ogpmoe-model";
constexpr const char* kArmMagic = "ogpmoe-arms";
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Weights of failed particles are -inf, which JSON cannot carry.
json weight_to_json(double w) { return w == kNegInf ? json(nullptr) : json(w); }
double weight_from_json(const json& j) { return j.is_null() ? kNegInf : j.get<double>(); }

json theta_to_json(const KernelHyperparams& t) {
  return json::array({t.log_lengthscale, t.log_signal_var, t.log_noise_var});
}

KernelHyperparams theta_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw InputError("kernel hyperparameters must have three entries");
  return KernelHyperparams{v[0], v[1], v[2]};
}

json dataset_to_json(const Dataset& d) {
  json x = json::array();
  for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) {
    x.push_back(std::vector<double>(d.inputs.row(i).data(), d.inputs.row(i).data() + d.dim()));
  }
  return {{"x", x}, {"y", std::vector<double>(d.outputs.data(), d.outputs.data() + d.size())}};
}

Dataset dataset_from_json(const json& j, int dim) {
  const auto& x = j.at("x");
  const auto y = j.at("y").get<std::vector<double>>();
  if (!x.is_array() || x.size() != y.size()) throw InputError("batch x/y lengths differ");
  Dataset d{PointMatrix(static_cast<Eigen::Index>(y.size()), dim),
            Eigen::VectorXd(static_cast<Eigen::Index>(y.size()))};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto row = x[i].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != dim) throw InputError("batch row has the wrong dimension");
    for (int c = 0; c < dim; ++c) d.inputs(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
    d.outputs[static_cast<Eigen::Index>(i)] = y[i];
  }
  return d;
}

json arm_to_json(const Arm& a) {
  return {{"theta", theta_to_json(a.theta)},
          {"run_id", a.provenance.run_id},
          {"particle", a.provenance.particle},
          {"cluster", a.provenance.cluster},
          {"harvest_lml", a.harvest_lml}};
}

Arm arm_from_json(const json& j) {
  Arm a;
  a.theta = theta_from_json(j.at("theta"));
  a.provenance.run_id = j.at("run_id").get<std::string>();
  a.provenance.particle = j.at("particle").get<int>();
  a.provenance.cluster = j.at("cluster").get<int>();
  a.harvest_lml = j.at("harvest_lml").get<double>();
  return a;
}

json pool_to_json(const ArmPool& pool) {
  json arms = json::array();
  for (const auto& a : pool.arms) arms.push_back(arm_to_json(a));
  return {{"version", pool.version}, {"arms", arms}};
}

ArmPool pool_from_json(const json& j) {
  ArmPool pool;
  pool.version = j.at("version").get<int>();
  for (const auto& a : j.at("arms")) pool.arms.push_back(arm_from_json(a));
  return pool;
}

json report_to_json(const StepReport& r) {
  return {{"step", r.step},
          {"batch_size", r.batch_size},
          {"ess", r.ess},
          {"resampled", r.resampled},
          {"cluster_counts", r.cluster_counts},
          {"refresh_counts", r.refresh_counts},
          {"optimizer_iterations", r.optimizer_iterations},
          {"evaluations", r.evaluations},
          {"failed_particles", r.failed_particles},
          {"arms_added", r.arms_added}};
}

StepReport report_from_json(const json& j) {
  StepReport r;
  r.step = j.at("step").get<int>();
  r.batch_size = j.at("batch_size").get<int>();
  r.ess = j.at("ess").get<double>();
  r.resampled = j.at("resampled").get<bool>();
  r.cluster_counts = j.at("cluster_counts").get<std::vector<int>>();
  r.refresh_counts = j.at("refresh_counts").get<std::vector<int>>();
  r.optimizer_iterations = j.at("optimizer_iterations").get<long>();
  r.evaluations = j.at("evaluations").get<long>();
  r.failed_particles = j.at("failed_particles").get<int>();
  r.arms_added = j.at("arms_added").get<int>();
  return r;
}

json curvature_to_json(const std::optional<Eigen::Matrix3d>& h) {
  if (!h) return nullptr;
  return std::vector<double>(h->data(), h->data() + 9);
}

std::optional<Eigen::Matrix3d> curvature_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 9) throw InputError("curvature must have nine entries");
  return Eigen::Matrix3d(Eigen::Map<const Eigen::Matrix3d>(v.data()));
}

json particle_to_json(const Particle& p) {
  json log = json::array();
  for (const auto& r : p.assignment_log) log.push_back({r.batch_id, r.point_index, r.cluster_id});
  json experts = json::array();
  for (const auto& e : p.experts) {
    experts.push_back({{"theta", theta_to_json(e.theta)},
                       {"cached_lml", e.cached_lml},
                       {"dirty", e.dirty},
                       {"fitted", e.fitted},
                       {"subsample", e.subsample},
                       {"curvature", curvature_to_json(e.curvature)}});
  }
  return {{"stream_key", p.stream_key},
          {"log_weight", weight_to_json(p.log_weight)},
          {"previous_total_lml", p.previous_total_lml},
          {"assignments", log},
          {"experts", experts}};
}

Particle particle_from_json(const json& j, int dim, const std::vector<Dataset>& history) {
  Particle p(dim, j.at("stream_key").get<std::uint64_t>());
  std::vector<AssignmentRecord> log;
  for (const auto& r : j.at("assignments")) {
    const auto v = r.get<std::vector<int>>();
    if (v.size() != 3) throw InputError("assignment records must have three entries");
    log.push_back({v[0], v[1], v[2]});
  }
  replay_assignments(p, history, log);
  const auto& experts = j.at("experts");
  if (!experts.is_array() || static_cast<int>(experts.size()) != p.num_clusters()) {
    throw InputError("expert count does not match the assignment log");
  }
  for (std::size_t k = 0; k < experts.size(); ++k) {
    const auto& ej = experts[k];
    ExpertState& e = p.experts[k];
    e.theta = theta_from_json(ej.at("theta"));
    e.dirty = ej.at("dirty").get<bool>();
    e.fitted = ej.at("fitted").get<bool>();
    e.subsample = ej.at("subsample").get<std::vector<int>>();
    e.curvature = curvature_from_json(ej.at("curvature"));
    for (int idx : e.subsample) {
      if (idx < 0 || idx >= e.size()) throw InputError("subsample index out of range");
    }
    if (!e.dirty) {
      double temper = 1.0;
      const Dataset data = e.fitting_data(&temper);
      GPFit fit = fit_gp(GPDataView(data.inputs, data.outputs, temper), e.theta);
      e.fit = std::make_shared<const GPFit>(std::move(fit));
    }
    // The stored value is authoritative for the next weight increment.
    e.cached_lml = ej.at("cached_lml").get<double>();
  }
  p.log_weight = weight_from_json(j.at("log_weight"));
  p.previous_total_lml = j.at("previous_total_lml").get<double>();
  return p;
}

struct Sectioned {
  int version = 0;
  std::map<std::string, std::string> sections;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_sectioned(const std::string& magic, int version,
                            const std::vector<std::pair<std::string, json>>& sections) {
  std::string out = magic + " " + std::to_string(version) + "\n";
  for (const auto& [name, body] : sections) out += "@" + name + " " + body.dump() + "\n";
  out += "@checksum " + hex64(fnv1a64(out)) + "\n";
  return out;
}

Sectioned read_sectioned(const std::string& text, const std::string& magic, int supported,
                         const std::vector<std::string>& required) {
  Sectioned s;
  const auto first_nl = text.find('\n');
  const std::string header = text.substr(0, first_nl);
  const std::string prefix = magic + " ";
  if (header.rfind(prefix, 0) != 0) {
    throw InputError("not a " + magic + " file (bad header)");
  }
  try {
    s.version = std::stoi(header.substr(prefix.size()));
  } catch (const std::exception&) {
    throw InputError("unreadable format version in header '" + header + "'");
  }
  if (s.version != supported) {
    throw InputError("unsupported " + magic + " format version " + std::to_string(s.version) +
                     " (this build reads version " + std::to_string(supported) + ")");
  }

  std::optional<std::string> checksum;
  std::size_t checksum_offset = 0;
  std::size_t pos = first_nl == std::string::npos ? text.size() : first_nl + 1;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    const bool complete = nl != std::string::npos;
    if (!complete) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    if (line.empty() || line[0] != '@') throw InputError("malformed line in " + magic + " file");
    const auto space = line.find(' ');
    const std::string name = line.substr(1, space == std::string::npos ? std::string::npos : space - 1);
    const std::string body = space == std::string::npos ? "" : line.substr(space + 1);
    if (name == "checksum") {
      checksum = body;
      checksum_offset = pos;
      break;
    }
    // A line cut short by truncation is treated as absent.
    if (complete) s.sections[name] = body;
    pos = nl + 1;
  }
  for (const auto& name : required) {
    if (!s.sections.contains(name)) {
      throw InputError(magic + " file is truncated or incomplete: missing section '" + name + "'");
    }
  }
  if (!checksum) throw InputError(magic + " file is truncated: missing section 'checksum'");
  if (*checksum != hex64(fnv1a64(std::string_view(text).substr(0, checksum_offset)))) {
    throw InputError(magic + " file checksum mismatch");
  }
  return s;
}

json parse_section(const Sectioned& s, const std::string& name) {
  try {
    return json::parse(s.sections.at(name));
  } catch (const json::exception& e) {
    throw InputError("section '" + name + "' is not valid JSON: " + e.what());
  }
}

template <typename Fn>
auto schema_guard(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw InputError(what + ": schema violation: " + e.what());
  }
}

}  // namespace

std::string serialize_model(const ParticleEnsemble& ens, const json& metadata) {
  if (ens.step_counter < 1) throw StateError("serialize_model: the ensemble is not initialized");
  json ensemble = {{"step_counter", ens.step_counter},
                   {"master_seed", ens.master_seed},
                   {"dim", ens.dim()},
                   {"prior", prior_to_json(ens.prior)},
                   {"base_theta", theta_to_json(ens.base_theta)},
                   {"last_report", report_to_json(ens.last_report)}};
  json history = json::array();
  for (const auto& b : ens.history) history.push_back(dataset_to_json(b));
  json particles = json::array();
  for (const auto& p : ens.particles) particles.push_back(particle_to_json(p));

  std::vector<std::pair<std::string, json>> sections = {
      {"config", config_to_json(ens.config)},
      {"ensemble", ensemble},
      {"history", history},
      {"particles", particles}};
  if (ens.arm_pool) sections.emplace_back("arm_pool", pool_to_json(*ens.arm_pool));
  if (!metadata.is_null()) sections.emplace_back("metadata", metadata);
  return write_sectioned(kModelMagic, kModelFormatVersion, sections);
}

ParticleEnsemble deserialize_model(const std::string& text, json* metadata) {
  const Sectioned s =
      read_sectioned(text, kModelMagic, kModelFormatVersion, {"config", "ensemble", "history", "particles"});
  return schema_guard("model", [&] {
    ParticleEnsemble ens;
    ens.config = config_from_json(parse_section(s, "config"));
    const json e = parse_section(s, "ensemble");
    ens.step_counter = e.at("step_counter").get<int>();
    ens.master_seed = e.at("master_seed").get<std::uint64_t>();
    const int dim = e.at("dim").get<int>();
    ens.prior = prior_from_json(e.at("prior"));
    if (ens.prior.dim() != dim) throw InputError("model: prior dimension mismatch");
    ens.base_theta = theta_from_json(e.at("base_theta"));
    ens.last_report = report_from_json(e.at("last_report"));
    for (const auto& b : parse_section(s, "history")) ens.history.push_back(dataset_from_json(b, dim));
    if (static_cast<int>(ens.history.size()) != ens.step_counter) {
      throw InputError("model: history length does not match the step counter");
    }
    for (const auto& p : parse_section(s, "particles")) {
      ens.particles.push_back(particle_from_json(p, dim, ens.history));
    }
    if (static_cast<int>(ens.particles.size()) != ens.config.particles) {
      throw InputError("model: particle count does not match the config");
    }
    if (s.sections.contains("arm_pool")) ens.arm_pool = pool_from_json(parse_section(s, "arm_pool"));
    ens.config.validate();
    if (metadata) {
      *metadata = s.sections.contains("metadata") ? parse_section(s, "metadata") : json(nullptr);
    }
    return ens;
  });
}

void save_model(const ParticleEnsemble& ens, const std::string& path, const json& metadata) {
  write_file_atomic(path, serialize_model(ens, metadata));
}

ParticleEnsemble load_model(const std::string& path, json* metadata) {
  return deserialize_model(read_file(path), metadata);
}

std::string serialize_arm_pool(const ArmPool& pool) {
  return write_sectioned(kArmMagic, kArmPoolFormatVersion, {{"pool", pool_to_json(pool)}});
}

ArmPool deserialize_arm_pool(const std::string& text) {
  const Sectioned s = read_sectioned(text, kArmMagic, kArmPoolFormatVersion, {"pool"});
  return schema_guard("arm pool", [&] {
    ArmPool pool = pool_from_json(parse_section(s, "pool"));
    for (const auto& a : pool.arms) {
      if (!a.theta.finite()) throw InputError("arm pool: non-finite hyperparameters");
    }
    return pool;
  });
}

void save_arm_pool(const ArmPool& pool, const std::string& path) {
  write_file_atomic(path, serialize_arm_pool(pool));
}

ArmPool load_arm_pool(const std::string& path) {
  return deserialize_arm_pool(read_file(path));
}

}  // namespace ogpmoe::harness
