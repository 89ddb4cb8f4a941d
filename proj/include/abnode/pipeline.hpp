#pragma once

#include "abnode/studies.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace abnode {

/// Every knob of a run, parsed from a sectioned key-value file:
/// [general] [data] [train] [sindy] [eval] [study].
struct RunConfig {
  std::string path;  // source file, empty for defaults
  std::uint64_t seed = 20240601;
  int jobs = 1;
  std::string out;           // run directory, empty = caller decides
  std::string truth_params;  // empty = built-in parameter set
  GeneratorConfig gen;
  std::vector<ModelKind> models = comparison_models();
  FitOptions fit;
  std::size_t eval_max_samples = 0;
  std::vector<int> series_configs;
  std::vector<ModelKind> study_models = comparison_models();
  bool truth_row = true;
  RobustnessOptions robustness;
  TimestepOptions timestep;

  /// Re-derives the seeds that follow `seed` (dataset and training).
  void apply_seed(std::uint64_t s);
};

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_run_config(const std::string& path);
/// Canonical text of the resolved configuration.
std::string format_run_config(const RunConfig& cfg);

PhysParams resolve_truth(const RunConfig& cfg);

std::string checkpoint_path(const std::string& run_dir, ModelKind kind, int config_id);

/// Simulates the corpus and writes it to dataset_dir.
Dataset run_generate(const RunConfig& cfg, const std::string& dataset_dir);

/// Trains `kind` on every configuration of the dataset and writes
/// models/<kind>/cNNN.ckpt (+ .report). Configurations whose training
/// diverges get a .failed marker; the call then throws NonFinite after all
/// other configurations are done.
void run_train(const RunConfig& cfg, const std::string& dataset_dir, ModelKind kind, const std::string& run_dir);

/// Per-configuration test losses of one trained model: eval/<kind>/.
void run_eval(const RunConfig& cfg, const std::string& dataset_dir, ModelKind kind, const std::string& run_dir);

/// heatmap | generalization | robustness | timestep; tables under
/// studies/<name>/. Throws MissingArtifact for absent checkpoints.
StudyResult run_study(const RunConfig& cfg, const std::string& dataset_dir, const std::string& study,
                      const std::string& run_dir);

std::vector<std::string> study_names();

struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string version;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
  int exit_code = 0;
  std::string message;
};

std::string format_manifest(const RunManifest& m);

}  // namespace abnode
