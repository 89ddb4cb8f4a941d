#include "abnode_c.h"

#include "abnode/kvfile.hpp"
#include "abnode/pipeline.hpp"

#include <cstring>
#include <exception>
#include <memory>
#include <string>

struct abnode_config {
  abnode::RunConfig cfg;
  std::string models;
};

struct abnode_dataset {
  abnode::Dataset data;
};

struct abnode_model {
  abnode::Model model;
  std::unique_ptr<abnode::BlimpField> field;
  Eigen::VectorXd params;
};

namespace {

using abnode::Error;
using abnode::ErrorCode;

thread_local std::string g_error;
thread_local std::string g_error_kind;

enum class Stage { kGeneral, kGenerate, kTrain, kEvaluate };

abnode_status status_for(ErrorCode code, Stage stage) {
  switch (code) {
    case ErrorCode::kConfig: return ABNODE_ERR_CONFIG;
    case ErrorCode::kMissingArtifact:
    case ErrorCode::kIo: return ABNODE_ERR_MISSING_ARTIFACT;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kLengthMismatch: return ABNODE_ERR_INVALID_ARGUMENT;
    case ErrorCode::kGridTooSmall:
    case ErrorCode::kSequenceTooShort:
    case ErrorCode::kEmptyData:
    case ErrorCode::kWrongTrialCount:
      return stage == Stage::kGenerate ? ABNODE_ERR_SIMULATION : ABNODE_ERR_DATA;
    case ErrorCode::kNonFinite:
    case ErrorCode::kUnstable:
    case ErrorCode::kGimbalLock:
    case ErrorCode::kSingularMass:
    case ErrorCode::kIllConditioned:
    case ErrorCode::kEmptyLibrary:
      if (stage == Stage::kGenerate) return ABNODE_ERR_SIMULATION;
      if (stage == Stage::kTrain) return ABNODE_ERR_TRAINING;
      return stage == Stage::kEvaluate ? ABNODE_ERR_TRAINING : ABNODE_ERR_SIMULATION;
    default: return ABNODE_ERR_INTERNAL;
  }
}

template <class Fn>
abnode_status guarded(Stage stage, Fn&& fn) {
  g_error.clear();
  g_error_kind.clear();
  try {
    fn();
    return ABNODE_OK;
  } catch (const Error& e) {
    g_error = e.what();
    g_error_kind = abnode::error_name(e.code());
    return status_for(e.code(), stage);
  } catch (const std::exception& e) {
    g_error = e.what();
    g_error_kind = "Internal";
    return ABNODE_ERR_INTERNAL;
  } catch (...) {
    g_error = "unknown failure";
    g_error_kind = "Internal";
    return ABNODE_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

void refresh_models(abnode_config* c) {
  c->models.clear();
  for (std::size_t i = 0; i < c->cfg.models.size(); ++i) {
    c->models += (i ? "," : "") + std::string(abnode::model_name(c->cfg.models[i]));
  }
}

}  // namespace

extern "C" {

const char* abnode_version(void) { return abnode::kVersion; }
const char* abnode_last_error(void) { return g_error.c_str(); }
const char* abnode_last_error_kind(void) { return g_error_kind.c_str(); }

abnode_status abnode_config_load(const char* path, abnode_config** out) {
  return guarded(Stage::kGeneral, [&] {
    need(out, "out");
    *out = nullptr;
    auto c = std::make_unique<abnode_config>();
    if (path) c->cfg = abnode::load_run_config(path);
    refresh_models(c.get());
    *out = c.release();
  });
}

abnode_status abnode_config_parse(const char* text, abnode_config** out) {
  return guarded(Stage::kGeneral, [&] {
    need(text, "text");
    need(out, "out");
    *out = nullptr;
    auto c = std::make_unique<abnode_config>();
    c->cfg = abnode::parse_run_config(text);
    refresh_models(c.get());
    *out = c.release();
  });
}

void abnode_config_free(abnode_config* cfg) { delete cfg; }

abnode_status abnode_config_set_seed(abnode_config* cfg, uint64_t seed) {
  return guarded(Stage::kGeneral, [&] {
    need(cfg, "config");
    cfg->cfg.apply_seed(seed);
  });
}

abnode_status abnode_config_set_jobs(abnode_config* cfg, int jobs) {
  return guarded(Stage::kGeneral, [&] {
    need(cfg, "config");
    if (jobs < 1) throw Error(ErrorCode::kConfig, "jobs must be >= 1");
    cfg->cfg.jobs = jobs;
  });
}

abnode_status abnode_config_seed(const abnode_config* cfg, uint64_t* seed) {
  return guarded(Stage::kGeneral, [&] {
    need(cfg, "config");
    need(seed, "seed");
    *seed = cfg->cfg.seed;
  });
}

abnode_status abnode_config_jobs(const abnode_config* cfg, int* jobs) {
  return guarded(Stage::kGeneral, [&] {
    need(cfg, "config");
    need(jobs, "jobs");
    *jobs = cfg->cfg.jobs;
  });
}

const char* abnode_config_out(const abnode_config* cfg) { return cfg ? cfg->cfg.out.c_str() : ""; }
const char* abnode_config_models(const abnode_config* cfg) { return cfg ? cfg->models.c_str() : ""; }

abnode_status abnode_config_format(const abnode_config* cfg, char** text) {
  return guarded(Stage::kGeneral, [&] {
    need(cfg, "config");
    need(text, "text");
    const std::string s = abnode::format_run_config(cfg->cfg);
    *text = new char[s.size() + 1];
    std::memcpy(*text, s.c_str(), s.size() + 1);
  });
}

void abnode_string_free(char* s) { delete[] s; }

abnode_status abnode_generate(const abnode_config* cfg, const char* dataset_dir) {
  return guarded(Stage::kGenerate, [&] {
    need(cfg, "config");
    need(dataset_dir, "dataset_dir");
    abnode::run_generate(cfg->cfg, dataset_dir);
  });
}

abnode_status abnode_train(const abnode_config* cfg, const char* dataset_dir, const char* model,
                           const char* run_dir) {
  return guarded(Stage::kTrain, [&] {
    need(cfg, "config");
    need(dataset_dir, "dataset_dir");
    need(model, "model");
    need(run_dir, "run_dir");
    abnode::run_train(cfg->cfg, dataset_dir, abnode::parse_model(model), run_dir);
  });
}

abnode_status abnode_eval(const abnode_config* cfg, const char* dataset_dir, const char* model,
                          const char* run_dir) {
  return guarded(Stage::kEvaluate, [&] {
    need(cfg, "config");
    need(dataset_dir, "dataset_dir");
    need(model, "model");
    need(run_dir, "run_dir");
    abnode::run_eval(cfg->cfg, dataset_dir, abnode::parse_model(model), run_dir);
  });
}

abnode_status abnode_study(const abnode_config* cfg, const char* dataset_dir, const char* study,
                           const char* run_dir) {
  return guarded(Stage::kEvaluate, [&] {
    need(cfg, "config");
    need(dataset_dir, "dataset_dir");
    need(study, "study");
    need(run_dir, "run_dir");
    abnode::run_study(cfg->cfg, dataset_dir, study, run_dir);
  });
}

abnode_status abnode_dataset_load(const char* dir, abnode_dataset** out) {
  return guarded(Stage::kGeneral, [&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    auto d = std::make_unique<abnode_dataset>();
    d->data = abnode::load_dataset(dir);
    *out = d.release();
  });
}

void abnode_dataset_free(abnode_dataset* data) { delete data; }

size_t abnode_dataset_config_count(const abnode_dataset* data) { return data ? data->data.configs.size() : 0; }

size_t abnode_dataset_trajectory_count(const abnode_dataset* data) {
  return data ? data->data.trajectories.size() : 0;
}

abnode_status abnode_model_load(const char* checkpoint, abnode_model** out) {
  return guarded(Stage::kGeneral, [&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = nullptr;
    auto m = std::make_unique<abnode_model>();
    m->model = abnode::load_checkpoint(checkpoint);
    m->field = m->model.field();
    m->params = m->model.flat_params();
    *out = m.release();
  });
}

void abnode_model_free(abnode_model* model) { delete model; }

const char* abnode_model_kind(const abnode_model* model) {
  return model ? abnode::model_name(model->model.kind) : "";
}

abnode_status abnode_model_derivative(const abnode_model* model, const double* x, const double* u, double* out) {
  return guarded(Stage::kGeneral, [&] {
    need(model, "model");
    need(x, "x");
    need(u, "u");
    need(out, "out");
    const abnode::StateVec xs = Eigen::Map<const abnode::StateVec>(x);
    const abnode::ControlVec us = Eigen::Map<const abnode::ControlVec>(u);
    const abnode::StateVec d =
        model->field->eval(xs, us, {model->params.data(), static_cast<std::size_t>(model->params.size())});
    Eigen::Map<abnode::StateVec> dst(out);
    dst = d;
  });
}

abnode_status abnode_model_rollout(const abnode_model* model, const double* x0, const double* controls,
                                   size_t n_steps, double dt, double* out) {
  return guarded(Stage::kGeneral, [&] {
    need(model, "model");
    need(x0, "x0");
    need(out, "out");
    if (n_steps > 0) need(controls, "controls");
    std::vector<abnode::ControlVec> u(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i) u[i] = Eigen::Map<const abnode::ControlVec>(controls + 5 * i);
    const auto r = abnode::rollout(*model->field,
                                   {model->params.data(), static_cast<std::size_t>(model->params.size())},
                                   Eigen::Map<const abnode::StateVec>(x0), u, abnode::uniform_steps(dt, n_steps));
    for (std::size_t i = 0; i < r.states.size(); ++i) Eigen::Map<abnode::StateVec>(out + 18 * i) = r.states[i];
  });
}

abnode_status abnode_manifest_write(const char* path, const abnode_manifest* manifest) {
  return guarded(Stage::kGeneral, [&] {
    need(path, "path");
    need(manifest, "manifest");
    abnode::RunManifest m;
    m.command = manifest->command ? manifest->command : "";
    m.config_path = manifest->config_path ? manifest->config_path : "";
    m.seed = manifest->seed;
    m.jobs = manifest->jobs;
    m.version = abnode::kVersion;
    if (manifest->inputs) m.inputs = abnode::split(manifest->inputs, ',');
    if (manifest->outputs) m.outputs = abnode::split(manifest->outputs, ',');
    m.wall_seconds = manifest->wall_seconds;
    m.exit_code = manifest->exit_code;
    m.message = manifest->message ? manifest->message : "";
    abnode::write_file_atomic(path, abnode::format_manifest(m));
  });
}

}  // extern "C"
