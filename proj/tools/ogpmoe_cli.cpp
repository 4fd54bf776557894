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

#include "ogpmoe/bandit_warmstart.hpp"
#include "ogpmoe/errors.hpp"
#include "ogpmoe/harness/csv_io.hpp"
#include "ogpmoe/harness/model_io.hpp"
#include "ogpmoe/harness/outputs.hpp"
#include "ogpmoe/harness/runner.hpp"
#include "ogpmoe/harness/synthetic.hpp"
#include "ogpmoe/smc_engine.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace ogpmoe;
using namespace ogpmoe::harness;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct Options {
  // engine
  int particles = 16;
  double alpha = 2.0;
  int minibatch = 0;
  std::uint64_t seed = 1;
  int threads = 1;
  double resample_threshold = 0.5;
  bool allow_new_arm = false;
  bool refine = false;
  std::string run_id = "run";
  // stream
  int blocks = 1;
  int test_blocks = 5;
  std::string order = "time";
  // data
  std::string train;
  std::string test;
  std::string data;
  std::string split = "tail";
  double test_fraction = 0.1;
  double split_fraction = 0.5;
  bool normalize = false;
  // artifacts
  std::string out;
  std::string model_in;
  std::string model_out;
  std::string arms_in;
  std::string arms_out;
  // synth
  int n_train = 1000;
  int n_test = 100;
  double noise_sd = 1.0;
  bool time_ordered = false;
};

void require(const std::string& value, const std::string& flag, const std::string& command) {
  if (value.empty()) throw InputError(command + ": " + flag + " is required");
}

EngineConfig engine_config(const Options& o) {
  EngineConfig c;
  c.particles = o.particles;
  c.alpha = o.alpha;
  c.minibatch = o.minibatch;
  c.seed = o.seed;
  c.threads = o.threads;
  c.resample_threshold = o.resample_threshold;
  c.warm.allow_new_arm = o.allow_new_arm;
  c.warm.refine = o.refine;
  c.run_id = o.run_id;
  c.validate();
  return c;
}

StreamPlan stream_plan(const Options& o) {
  StreamPlan p;
  p.train_blocks = o.blocks;
  p.test_blocks = o.test_blocks;
  p.ordering = o.order == "shuffled" ? Ordering::kShuffled : Ordering::kTimeOrdered;
  p.validate();
  return p;
}

void apply_normalization(Dataset& d, const Normalization& n) {
  for (Eigen::Index i = 0; i < d.outputs.size(); ++i) d.outputs[i] = n.forward(d.outputs[i]);
}

struct Inputs {
  Dataset train;
  Dataset test;
  Normalization normalization;
};

// Either --train/--test files, or one --data file split by --split.
// Normalization is always estimated on the training part.
Inputs load_train_test(const Options& o, const std::string& command) {
  Inputs in;
  if (!o.data.empty()) {
    const CsvDataset all = ingest_csv(o.data, false);
    TrainTestSplit s = split_train_test(all.data, o.test_fraction, o.split == "random", o.seed);
    in.train = std::move(s.train);
    in.test = std::move(s.test);
  } else {
    require(o.train, "--train (or --data)", command);
    require(o.test, "--test (or --data)", command);
    in.train = ingest_csv(o.train, false).data;
    in.test = ingest_csv(o.test, false).data;
  }
  if (o.normalize) {
    const double mean = in.train.outputs.mean();
    const double sd =
        std::sqrt((in.train.outputs.array() - mean).square().mean());
    if (!(sd > 0.0)) throw InputError(command + ": training outputs have zero variance");
    in.normalization = {mean, sd, true};
    apply_normalization(in.train, in.normalization);
    apply_normalization(in.test, in.normalization);
  }
  return in;
}

nlohmann::json normalization_json(const Normalization& n) {
  return {{"applied", n.applied}, {"mean", n.mean}, {"sd", n.sd}};
}

Normalization normalization_from(const nlohmann::json& meta) {
  Normalization n;
  if (meta.is_object() && meta.contains("normalization")) {
    const auto& j = meta.at("normalization");
    n.applied = j.at("applied").get<bool>();
    n.mean = j.at("mean").get<double>();
    n.sd = j.at("sd").get<double>();
  }
  return n;
}

void finish_run(const Options& o, const RunRecord& record, const Normalization& norm,
                const ParticleEnsemble& ens) {
  if (!o.out.empty()) write_run_outputs(o.out, record, norm, o.threads);
  if (!o.model_out.empty()) {
    save_model(ens, o.model_out, {{"normalization", normalization_json(norm)}});
  }
  std::cout << record.command << ": pred_ll=" << format_double(record.metrics.pred_ll)
            << " pred_mse=" << format_double(record.metrics.pred_mse)
            << " points=" << record.predictions.size()
            << " wall_time=" << record.wall_time_seconds << "s\n";
}

void cmd_synth(const Options& o) {
  require(o.out, "--out", "synth");
  SyntheticSpec spec;
  spec.n_train = o.n_train;
  spec.n_test = o.n_test;
  spec.noise_sd = o.noise_sd;
  spec.seed = o.seed;
  spec.time_ordered = o.time_ordered;
  const SyntheticData d = generate_synthetic(spec);
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  write_csv_dataset((dir / "train.csv").string(), d.train, {"x", "y"});
  write_csv_dataset((dir / "test.csv").string(), d.test, {"x", "y"});
  std::cout << "synth: wrote " << d.train.size() << " train and " << d.test.size()
            << " test points to " << o.out << "\n";
}

void cmd_fit(const Options& o, bool warm) {
  const std::string command = warm ? "warm-fit" : "fit";
  Inputs in = load_train_test(o, command);
  const EngineConfig config = engine_config(o);
  ParticleEnsemble ens;
  RunRecord record;
  if (warm) {
    require(o.arms_in, "--arms-in", command);
    const ArmPool pool = load_arm_pool(o.arms_in);
    record = run_warmfit(in.train, in.test, stream_plan(o), config, pool, &ens);
    if (!o.arms_out.empty()) save_arm_pool(*ens.arm_pool, o.arms_out);
  } else {
    record = run_fit(in.train, in.test, stream_plan(o), config, &ens);
  }
  finish_run(o, record, in.normalization, ens);
}

void cmd_track(const Options& o) {
  require(o.data, "--data", "track");
  const CsvDataset csv = ingest_csv(o.data, o.normalize);
  ParticleEnsemble ens;
  const RunRecord record = run_track(csv.data, o.split_fraction, engine_config(o), &ens);
  finish_run(o, record, csv.normalization, ens);
}

void cmd_harvest(const Options& o) {
  require(o.model_in, "--model-in", "harvest-arms");
  require(o.arms_out, "--arms-out", "harvest-arms");
  const ParticleEnsemble ens = load_model(o.model_in);
  const ArmPool pool = harvest_arms(ens, o.run_id);
  save_arm_pool(pool, o.arms_out);
  std::cout << "harvest-arms: " << pool.arms.size() << " arms written to " << o.arms_out << "\n";
}

void cmd_score(const Options& o) {
  require(o.model_in, "--model-in", "score");
  require(o.test, "--test", "score");
  nlohmann::json meta;
  ParticleEnsemble ens = load_model(o.model_in, &meta);
  ens.config.threads = o.threads;
  const Normalization norm = normalization_from(meta);
  Dataset test = ingest_csv(o.test, false).data;
  apply_normalization(test, norm);
  if (test.dim() != ens.dim()) throw InputError("score: test dimension does not match the model");

  RunRecord record;
  record.command = "score";
  record.config = config_to_json(ens.config);
  record.seed = ens.master_seed;
  record_block(ensemble_predict(ens, test.inputs), test, 0, record.predictions);
  record.metrics = metrics_from_predictions(record.predictions);
  record.completed = true;
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    const std::filesystem::path dir(o.out);
    write_file_atomic((dir / "metrics.json").string(),
                      metrics_json(record, norm, o.threads).dump(2) + "\n");
    write_file_atomic((dir / "predictions.csv").string(), predictions_csv(record, norm));
  }
  std::cout << "score: pred_ll=" << format_double(record.metrics.pred_ll)
            << " pred_mse=" << format_double(record.metrics.pred_mse) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online mixture of Gaussian process experts"};
  app.set_config("--config", "", "key=value file supplying any flag; the command line wins");
  app.require_subcommand(1);
  Options o;

  app.add_option("--particles", o.particles, "Number of particles J")->capture_default_str();
  app.add_option("--alpha", o.alpha, "CRP concentration")->capture_default_str();
  app.add_option("--blocks", o.blocks, "Training blocks; the first initializes")->capture_default_str();
  app.add_option("--test-blocks", o.test_blocks,
                 "Test blocks predicted then absorbed (0: predict once)")->capture_default_str();
  app.add_option("--minibatch", o.minibatch, "Per-cluster subsample size (0: off)")->capture_default_str();
  app.add_option("--seed", o.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads")->capture_default_str();
  app.add_option("--resample-threshold", o.resample_threshold,
                 "Resample when ESS < threshold * J")->capture_default_str();
  app.add_flag("--allow-new-arm", o.allow_new_arm, "Warm fit may add optimized arms to the pool");
  app.add_flag("--refine", o.refine, "Warm fit runs the optimizer from the selected arm");
  app.add_option("--run-id", o.run_id, "Identifier recorded in arm provenance")->capture_default_str();
  app.add_option("--order", o.order, "Training stream order")
      ->check(CLI::IsMember({"time", "shuffled"}))->capture_default_str();
  app.add_option("--train", o.train, "Training CSV");
  app.add_option("--test", o.test, "Test CSV");
  app.add_option("--data", o.data, "Single CSV (track, or fit with --split)");
  app.add_option("--split", o.split, "Hold-out selection for --data")
      ->check(CLI::IsMember({"random", "tail"}))->capture_default_str();
  app.add_option("--test-fraction", o.test_fraction, "Held-out fraction for --data")->capture_default_str();
  app.add_option("--split-fraction", o.split_fraction, "Training fraction for track")->capture_default_str();
  app.add_flag("--normalize", o.normalize, "Standardize the output column");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--model-in", o.model_in, "Model file to read");
  app.add_option("--model-out", o.model_out, "Model file to write");
  app.add_option("--arms-in", o.arms_in, "Arm-pool file to read");
  app.add_option("--arms-out", o.arms_out, "Arm-pool file to write");
  app.add_option("--n-train", o.n_train, "synth: training points")->capture_default_str();
  app.add_option("--n-test", o.n_test, "synth: test points")->capture_default_str();
  app.add_option("--noise-sd", o.noise_sd, "synth: noise standard deviation")->capture_default_str();
  app.add_flag("--time-ordered", o.time_ordered, "synth: sort each split by x");

  auto* synth = app.add_subcommand("synth", "Generate the piecewise synthetic dataset");
  auto* fit = app.add_subcommand("fit", "Cold fit, then predict-and-absorb the test blocks");
  auto* track = app.add_subcommand("track", "One-step-ahead tracking of a time series");
  auto* harvest = app.add_subcommand("harvest-arms", "Extract an arm pool from a model");
  auto* warm = app.add_subcommand("warm-fit", "Fit with arm selection instead of optimization");
  auto* score = app.add_subcommand("score", "Score a saved model on a test set");
  for (auto* sub : {synth, fit, track, harvest, warm, score}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*synth) cmd_synth(o);
    else if (*fit) cmd_fit(o, false);
    else if (*track) cmd_track(o);
    else if (*harvest) cmd_harvest(o);
    else if (*warm) cmd_fit(o, true);
    else if (*score) cmd_score(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
