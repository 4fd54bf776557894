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

#include "ogpmoe/harness/outputs.hpp"

#include "ogpmoe/errors.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ogpmoe::harness {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + tmp + "' for writing");
    out << contents;
    out.flush();
    if (!out) throw InputError("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, target);
}

nlohmann::json metrics_json(const RunRecord& record, const Normalization& normalization,
                            int threads) {
  long evaluations = 0;
  int resamples = 0;
  int failed = 0;
  for (const auto& s : record.steps) {
    evaluations += s.evaluations;
    resamples += s.resampled ? 1 : 0;
    failed = std::max(failed, s.failed_particles);
  }
  nlohmann::json j;
  j["command"] = record.command;
  j["completed"] = record.completed;
  j["seed"] = record.seed;
  j["config"] = record.config;
  j["n_predictions"] = record.predictions.size();
  j["pred_ll"] = record.metrics.pred_ll;
  j["pred_mse"] = record.metrics.pred_mse;
  j["steps"] = record.steps.size();
  j["resamples"] = resamples;
  j["max_failed_particles"] = failed;
  j["optimizer_iterations"] = record.optimizer_iterations;
  j["likelihood_evaluations"] = evaluations;
  if (!record.steps.empty()) j["final_cluster_counts"] = record.steps.back().cluster_counts;
  if (normalization.applied) {
    const double n = static_cast<double>(record.predictions.size());
    j["original_scale"] = {
        {"pred_ll", record.metrics.pred_ll - n * std::log(normalization.sd)},
        {"pred_mse", record.metrics.pred_mse * normalization.sd * normalization.sd}};
  }
  j["normalization"] = {{"applied", normalization.applied},
                        {"mean", normalization.mean},
                        {"sd", normalization.sd}};
  j["runtime"] = {{"wall_time_seconds", record.wall_time_seconds}, {"threads", threads}};
  return j;
}

std::string predictions_csv(const RunRecord& record, const Normalization& normalization) {
  const double log_sd = normalization.applied ? std::log(normalization.sd) : 0.0;
  const double sd2 = normalization.applied ? normalization.sd * normalization.sd : 1.0;
  std::ostringstream os;
  const Eigen::Index d = record.predictions.empty() ? 0 : record.predictions.front().x.size();
  for (Eigen::Index i = 0; i < d; ++i) os << 'x' << i << ',';
  os << "mean,var,y,log_density,block\n";
  for (const auto& p : record.predictions) {
    for (Eigen::Index i = 0; i < p.x.size(); ++i) os << format_double(p.x[i]) << ',';
    os << format_double(normalization.inverse(p.mean)) << ',' << format_double(p.variance * sd2)
       << ',' << format_double(normalization.inverse(p.y)) << ','
       << format_double(p.log_density - log_sd) << ',' << p.block << '\n';
  }
  return os.str();
}

std::string steps_csv(const RunRecord& record) {
  std::ostringstream os;
  os << "step,batch_size,ess,resampled,mean_clusters,max_clusters,refreshed,"
        "optimizer_iterations,evaluations,failed_particles,arms_added\n";
  for (const auto& s : record.steps) {
    double mean_k = 0.0;
    int max_k = 0;
    for (int k : s.cluster_counts) {
      mean_k += k;
      max_k = std::max(max_k, k);
    }
    if (!s.cluster_counts.empty()) mean_k /= static_cast<double>(s.cluster_counts.size());
    int refreshed = 0;
    for (int r : s.refresh_counts) refreshed += r;
    os << s.step << ',' << s.batch_size << ',' << format_double(s.ess) << ','
       << (s.resampled ? 1 : 0) << ',' << format_double(mean_k) << ',' << max_k << ','
       << refreshed << ',' << s.optimizer_iterations << ',' << s.evaluations << ','
       << s.failed_particles << ',' << s.arms_added << '\n';
  }
  return os.str();
}

void write_run_outputs(const std::string& dir, const RunRecord& record,
                       const Normalization& normalization, int threads) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_file_atomic((base / "metrics.json").string(),
                    metrics_json(record, normalization, threads).dump(2) + "\n");
  write_file_atomic((base / "predictions.csv").string(), predictions_csv(record, normalization));
  write_file_atomic((base / "steps.csv").string(), steps_csv(record));
}

}  // namespace ogpmoe::harness
