// abnode command-line front end: generate | train | eval | study.
#include "abnode_c.h"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  long long seed = -1;
  int jobs = 0;
  std::string out;
  std::string dataset;
  std::vector<std::string> models;
  std::vector<std::string> studies;
  std::string eval_model;
};

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::vector<std::string> split_models(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s + ",") {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (c != ' ') {
      item += c;
    }
  }
  return out;
}

class Command {
 public:
  Command(std::string name, const Options& opt) : name_(std::move(name)), opt_(opt), start_(Clock::now()) {}
  ~Command() { abnode_config_free(cfg_); }

  // Loads the config, applies overrides and resolves the run directory.
  int setup() {
    run_dir_ = opt_.out;
    const abnode_status st = abnode_config_load(opt_.config.empty() ? nullptr : opt_.config.c_str(), &cfg_);
    if (st == ABNODE_OK) {
      if (run_dir_.empty()) run_dir_ = abnode_config_out(cfg_);
      if (opt_.seed >= 0) abnode_config_set_seed(cfg_, static_cast<uint64_t>(opt_.seed));
      if (opt_.jobs > 0 && abnode_config_set_jobs(cfg_, opt_.jobs) != ABNODE_OK) return fail(ABNODE_ERR_CONFIG);
    }
    if (run_dir_.empty()) {
      const char* env = std::getenv("ABNODE_OUT");
      run_dir_ = env && *env ? env : "abnode_run";
    }
    dataset_ = opt_.dataset.empty() ? (fs::path(run_dir_) / "dataset").string() : opt_.dataset;
    if (st != ABNODE_OK) return fail(st);
    return 0;
  }

  const abnode_config* cfg() const { return cfg_; }
  const std::string& run_dir() const { return run_dir_; }
  const std::string& dataset() const { return dataset_; }
  void input(const std::string& p) { inputs_.push_back(p); }
  void output(const std::string& p) { outputs_.push_back(p); }

  int fail(abnode_status st) {
    message_ = abnode_last_error();
    std::cerr << "abnode " << name_ << ": error: " << message_ << "\n";
    return static_cast<int>(st);
  }

  int finish(int code, const std::string& tag = "") {
    uint64_t seed = 0;
    int jobs = 1;
    if (cfg_) {
      abnode_config_seed(cfg_, &seed);
      abnode_config_jobs(cfg_, &jobs);
    }
    const double wall = std::chrono::duration<double>(Clock::now() - start_).count();
    const std::string in = join(inputs_);
    const std::string out = join(outputs_);
    const std::string config = opt_.config.empty() ? "<defaults>" : opt_.config;
    const abnode_manifest m{name_.c_str(), config.c_str(), seed,        jobs,
                            in.c_str(),    out.c_str(),    wall,        code,
                            message_.c_str()};
    const std::string file = name_ + (tag.empty() ? "" : "_" + tag) + ".manifest";
    const std::string path = (fs::path(run_dir_) / "manifests" / file).string();
    if (abnode_manifest_write(path.c_str(), &m) != ABNODE_OK) {
      std::cerr << "abnode " << name_ << ": warning: manifest not written: " << abnode_last_error() << "\n";
    }
    return code;
  }

  // Writes the resolved configuration next to the outputs.
  void save_resolved() {
    char* text = nullptr;
    if (abnode_config_format(cfg_, &text) != ABNODE_OK) return;
    const fs::path p = fs::path(run_dir_) / "resolved.cfg";
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (FILE* f = std::fopen((p.string() + ".tmp").c_str(), "wb")) {
      std::fputs(text, f);
      std::fclose(f);
      fs::rename(p.string() + ".tmp", p, ec);
    }
    abnode_string_free(text);
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::string name_;
  const Options& opt_;
  Clock::time_point start_;
  abnode_config* cfg_ = nullptr;
  std::string run_dir_;
  std::string dataset_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::string message_;
};

int cmd_generate(const Options& opt) {
  Command c("generate", opt);
  if (int rc = c.setup()) return c.finish(rc);
  c.save_resolved();
  c.output(c.dataset());
  const abnode_status st = abnode_generate(c.cfg(), c.dataset().c_str());
  if (st != ABNODE_OK) return c.finish(c.fail(st));
  abnode_dataset* d = nullptr;
  if (abnode_dataset_load(c.dataset().c_str(), &d) == ABNODE_OK) {
    std::cout << "generated " << abnode_dataset_trajectory_count(d) << " trajectories over "
              << abnode_dataset_config_count(d) << " configurations in " << c.dataset() << "\n";
    abnode_dataset_free(d);
  }
  return c.finish(0);
}

int cmd_train(const Options& opt) {
  Command c("train", opt);
  const std::string tag = opt.models.empty() ? "" : join(opt.models);
  if (int rc = c.setup()) return c.finish(rc, tag);
  std::vector<std::string> models = opt.models;
  if (models.empty()) models = split_models(abnode_config_models(c.cfg()));
  c.input(c.dataset());
  int rc = 0;
  for (const auto& m : models) {
    c.output((fs::path(c.run_dir()) / "models" / m).string());
    const abnode_status st = abnode_train(c.cfg(), c.dataset().c_str(), m.c_str(), c.run_dir().c_str());
    if (st != ABNODE_OK) {
      rc = c.fail(st);
      if (st != ABNODE_ERR_TRAINING) break;
    } else {
      std::cout << "trained " << m << "\n";
    }
  }
  return c.finish(rc, tag.empty() ? "all" : tag);
}

int cmd_eval(const Options& opt) {
  Command c("eval", opt);
  if (int rc = c.setup()) return c.finish(rc, opt.eval_model);
  c.input(c.dataset());
  c.input((fs::path(c.run_dir()) / "models" / opt.eval_model).string());
  c.output((fs::path(c.run_dir()) / "eval" / opt.eval_model).string());
  const abnode_status st = abnode_eval(c.cfg(), c.dataset().c_str(), opt.eval_model.c_str(), c.run_dir().c_str());
  if (st != ABNODE_OK) return c.finish(c.fail(st), opt.eval_model);
  std::cout << "evaluated " << opt.eval_model << "\n";
  return c.finish(0, opt.eval_model);
}

int cmd_study(const Options& opt) {
  Command c("study", opt);
  std::vector<std::string> studies = opt.studies;
  if (studies.size() == 1 && studies[0] == "all") studies = {"heatmap", "generalization", "robustness", "timestep"};
  const std::string tag = join(studies);
  if (int rc = c.setup()) return c.finish(rc, tag);
  c.input(c.dataset());
  c.input((fs::path(c.run_dir()) / "models").string());
  for (const auto& s : studies) {
    c.output((fs::path(c.run_dir()) / "studies" / s).string());
    const abnode_status st = abnode_study(c.cfg(), c.dataset().c_str(), s.c_str(), c.run_dir().c_str());
    if (st != ABNODE_OK) return c.finish(c.fail(st), tag);
    std::cout << "study " << s << " written\n";
  }
  return c.finish(0, tag);
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  CLI::App app{"Hybrid first-principle / neural ODE blimp models: data generation, training and studies"};
  app.set_version_flag("--version", std::string(abnode_version()));
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config,-c", opt.config, "Run configuration file");
  app.add_option("--seed", opt.seed, "Override the configured seed")->check(CLI::NonNegativeNumber);
  app.add_option("--jobs,-j", opt.jobs, "Parallel jobs")->check(CLI::PositiveNumber);
  app.add_option("--out,-o", opt.out, "Run directory (default: config, then $ABNODE_OUT, then ./abnode_run)");
  app.add_option("--dataset", opt.dataset, "Dataset directory (default: <run>/dataset)");

  auto* gen = app.add_subcommand("generate", "Simulate the synthetic flight corpus");
  auto* train = app.add_subcommand("train", "Train models on every configuration");
  train->add_option("models", opt.models, "fp, sindyc, node, knode, bnode, abnode (default: config list)");
  auto* eval = app.add_subcommand("eval", "Evaluate one trained model on the test trials");
  eval->add_option("model", opt.eval_model, "Model name")->required();
  auto* study = app.add_subcommand("study", "Run evaluation studies");
  study->add_option("names", opt.studies, "heatmap, generalization, robustness, timestep or all")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ABNODE_ERR_CONFIG;
  }
  if (gen->parsed()) return cmd_generate(opt);
  if (train->parsed()) return cmd_train(opt);
  if (eval->parsed()) return cmd_eval(opt);
  if (study->parsed()) return cmd_study(opt);
  return ABNODE_ERR_CONFIG;
}
