#include "abnode/pipeline.hpp"

#include "abnode/kvfile.hpp"
#include "abnode/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace fs = std::filesystem;

namespace abnode {

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "general.seed", "general.jobs", "general.out",
      "data.truth_params", "data.split_seed", "data.trials", "data.substeps", "data.launch_speed",
      "data.gondola_z", "data.jitter_pos", "data.jitter_yaw_deg", "data.spiral_samples", "data.linear_samples",
      "data.eta_perturbation", "data.residual_cv", "data.residual_cw", "data.noise_pos", "data.noise_euler_deg",
      "data.noise_vel", "data.noise_omega_deg", "data.displacements", "data.configs",
      "train.models", "train.n1", "train.n2", "train.node_epochs", "train.lr_eta", "train.lr_theta",
      "train.beta1", "train.beta2", "train.eps", "train.output_gain", "train.clip", "train.clip_norm",
      "train.relative_eta", "train.eta_scale_floor", "train.max_samples", "train.seed",
      "sindy.threshold", "sindy.ridge", "sindy.max_iterations", "sindy.max_condition",
      "eval.max_samples", "eval.series_configs",
      "study.models", "study.truth_row", "study.levels", "study.robust_delta", "study.strides", "study.cycle",
      "study.horizons"};
  return keys;
}

std::vector<ModelKind> parse_models(const KvDocument& doc, const std::string& key, std::vector<ModelKind> fallback,
                                    bool allow_truth) {
  if (!doc.has(key)) return fallback;
  std::vector<ModelKind> out;
  for (const auto& name : doc.get_list(key, {})) {
    ModelKind k;
    try {
      k = parse_model(name);
    } catch (const Error&) {
      throw Error(ErrorCode::kConfig, doc.origin() + ": key '" + key + "': unknown model '" + name + "'");
    }
    if (k == ModelKind::kTruth && !allow_truth) {
      throw Error(ErrorCode::kConfig, doc.origin() + ": key '" + key + "': truth is not a trainable model");
    }
    out.push_back(k);
  }
  if (out.empty()) throw Error(ErrorCode::kConfig, doc.origin() + ": key '" + key + "' lists no models");
  return out;
}

std::vector<int> get_ints(const KvDocument& doc, const std::string& key, std::vector<int> fallback) {
  if (!doc.has(key)) return fallback;
  std::vector<int> out;
  for (double d : doc.get_doubles(key, {})) {
    if (d != std::floor(d)) throw Error(ErrorCode::kConfig, doc.origin() + ": key '" + key + "' needs integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

std::size_t get_count(const KvDocument& doc, const std::string& key, std::size_t fallback) {
  const long v = doc.get_int(key, static_cast<long>(fallback));
  if (v < 0) throw Error(ErrorCode::kConfig, doc.origin() + ": key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

void require(bool ok, const KvDocument& doc, const std::string& key, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, doc.origin() + ": key '" + key + "' " + what);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::string join_models(const std::vector<ModelKind>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::string(model_name(v[i]));
  return out;
}

std::string config_tag(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%03d", id);
  return buf;
}

bool recoverable(ErrorCode code) {
  return code == ErrorCode::kNonFinite || code == ErrorCode::kUnstable || code == ErrorCode::kGimbalLock ||
         code == ErrorCode::kSingularMass;
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  gen.seed = s;
  fit.train.seed = s;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  const KvDocument doc = KvDocument::parse(text, origin);
  const auto unknown = doc.unknown_keys(known_keys());
  if (!unknown.empty()) throw Error(ErrorCode::kConfig, origin + ": unknown key '" + unknown.front() + "'");

  RunConfig c;
  c.path = origin;
  const long seed = doc.get_int("general.seed", static_cast<long>(c.seed));
  require(seed >= 0, doc, "general.seed", "must be >= 0");
  c.apply_seed(static_cast<std::uint64_t>(seed));
  c.jobs = static_cast<int>(doc.get_int("general.jobs", c.jobs));
  require(c.jobs >= 1, doc, "general.jobs", "must be >= 1");
  c.out = doc.get_string("general.out", "");

  GeneratorConfig& g = c.gen;
  c.truth_params = doc.get_string("data.truth_params", "");
  g.split_seed = static_cast<std::uint64_t>(doc.get_int("data.split_seed", static_cast<long>(g.split_seed)));
  g.trials = static_cast<int>(doc.get_int("data.trials", g.trials));
  require(g.trials == 4, doc, "data.trials", "must be 4 (3 train + 1 test per configuration)");
  g.substeps = static_cast<int>(doc.get_int("data.substeps", g.substeps));
  require(g.substeps >= 1, doc, "data.substeps", "must be >= 1");
  g.launch_speed = doc.get_double("data.launch_speed", g.launch_speed);
  g.gondola_z = doc.get_double("data.gondola_z", g.gondola_z);
  g.jitter_pos = doc.get_double("data.jitter_pos", g.jitter_pos);
  g.jitter_yaw = doc.get_double("data.jitter_yaw_deg", g.jitter_yaw / kDeg) * kDeg;
  for (const char* key : {"data.spiral_samples", "data.linear_samples"}) {
    if (!doc.has(key)) continue;
    const auto v = get_ints(doc, key, {});
    require(v.size() == 2 && v[0] >= 2 && v[1] >= v[0], doc, key, "must be 'min, max' with 2 <= min <= max");
    auto& lo = std::string(key) == "data.spiral_samples" ? g.spiral_min_samples : g.linear_min_samples;
    auto& hi = std::string(key) == "data.spiral_samples" ? g.spiral_max_samples : g.linear_max_samples;
    lo = static_cast<std::size_t>(v[0]);
    hi = static_cast<std::size_t>(v[1]);
  }
  g.eta_perturbation = doc.get_double("data.eta_perturbation", g.eta_perturbation);
  require(g.eta_perturbation >= 0.0 && g.eta_perturbation < 1.0, doc, "data.eta_perturbation", "must be in [0, 1)");
  g.residual.c_v = doc.get_double("data.residual_cv", g.residual.c_v);
  g.residual.c_w = doc.get_double("data.residual_cw", g.residual.c_w);
  g.noise.sigma_pos = doc.get_double("data.noise_pos", g.noise.sigma_pos);
  g.noise.sigma_euler = doc.get_double("data.noise_euler_deg", g.noise.sigma_euler / kDeg) * kDeg;
  g.noise.sigma_vel = doc.get_double("data.noise_vel", g.noise.sigma_vel);
  g.noise.sigma_omega = doc.get_double("data.noise_omega_deg", g.noise.sigma_omega / kDeg) * kDeg;
  for (const char* key : {"data.residual_cv", "data.residual_cw", "data.noise_pos", "data.noise_euler_deg",
                          "data.noise_vel", "data.noise_omega_deg", "data.jitter_pos", "data.jitter_yaw_deg"}) {
    require(doc.get_double(key, 0.0) >= 0.0, doc, key, "must be >= 0");
  }
  g.displacements = doc.get_doubles("data.displacements", g.displacements);
  require(!g.displacements.empty(), doc, "data.displacements", "lists no displacements");
  for (double d : g.displacements) {
    require(d >= -1.0 && d <= 4.0, doc, "data.displacements",
            "has " + format_double(d) + " cm, outside the gondola travel [-1, 4] cm");
  }
  g.config_ids = get_ints(doc, "data.configs", {});

  TrainConfig& t = c.fit.train;
  c.models = parse_models(doc, "train.models", c.models, false);
  t.n1 = static_cast<int>(doc.get_int("train.n1", t.n1));
  t.n2 = static_cast<int>(doc.get_int("train.n2", t.n2));
  t.node_epochs = static_cast<int>(doc.get_int("train.node_epochs", t.node_epochs));
  require(t.n1 >= 0, doc, "train.n1", "must be >= 0");
  require(t.n2 >= 0, doc, "train.n2", "must be >= 0");
  require(t.node_epochs >= 0, doc, "train.node_epochs", "must be >= 0");
  t.lr_eta = doc.get_double("train.lr_eta", t.lr_eta);
  t.lr_theta = doc.get_double("train.lr_theta", t.lr_theta);
  require(t.lr_eta > 0.0, doc, "train.lr_eta", "must be > 0");
  require(t.lr_theta > 0.0, doc, "train.lr_theta", "must be > 0");
  t.beta1 = doc.get_double("train.beta1", t.beta1);
  t.beta2 = doc.get_double("train.beta2", t.beta2);
  t.eps = doc.get_double("train.eps", t.eps);
  t.output_gain = doc.get_double("train.output_gain", t.output_gain);
  t.clip = doc.get_bool("train.clip", t.clip);
  t.clip_norm = doc.get_double("train.clip_norm", t.clip_norm);
  t.relative_eta = doc.get_bool("train.relative_eta", t.relative_eta);
  t.eta_scale_floor = doc.get_double("train.eta_scale_floor", t.eta_scale_floor);
  t.max_samples = get_count(doc, "train.max_samples", t.max_samples);
  if (doc.has("train.seed")) t.seed = static_cast<std::uint64_t>(doc.get_int("train.seed", 0));

  SindyOptions& s = c.fit.sindy;
  s.threshold = doc.get_double("sindy.threshold", s.threshold);
  s.ridge = doc.get_double("sindy.ridge", s.ridge);
  s.max_iterations = static_cast<int>(doc.get_int("sindy.max_iterations", s.max_iterations));
  s.max_condition = doc.get_double("sindy.max_condition", s.max_condition);
  require(s.threshold >= 0.0, doc, "sindy.threshold", "must be >= 0");
  require(s.ridge >= 0.0, doc, "sindy.ridge", "must be >= 0");

  c.eval_max_samples = get_count(doc, "eval.max_samples", c.eval_max_samples);
  c.series_configs = get_ints(doc, "eval.series_configs", c.series_configs);

  c.study_models = parse_models(doc, "study.models", c.study_models, false);
  c.truth_row = doc.get_bool("study.truth_row", c.truth_row);
  c.robustness.levels = doc.get_doubles("study.levels", c.robustness.levels);
  for (double l : c.robustness.levels) require(l >= 0.0, doc, "study.levels", "must be >= 0");
  c.robustness.delta_rx_cm = doc.get_double("study.robust_delta", c.robustness.delta_rx_cm);
  c.timestep.strides = get_ints(doc, "study.strides", c.timestep.strides);
  c.timestep.cycle = get_ints(doc, "study.cycle", c.timestep.cycle);
  c.timestep.horizons_s = doc.get_doubles("study.horizons", c.timestep.horizons_s);
  for (int v : c.timestep.strides) require(v >= 1, doc, "study.strides", "must be >= 1");
  for (int v : c.timestep.cycle) require(v >= 1, doc, "study.cycle", "must be >= 1");
  for (double h : c.timestep.horizons_s) require(h > 0.0, doc, "study.horizons", "must be > 0");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::kConfig, "cannot open config file '" + path + "'");
  }
  return parse_run_config(text, path);
}

std::string format_run_config(const RunConfig& c) {
  const GeneratorConfig& g = c.gen;
  const TrainConfig& t = c.fit.train;
  std::ostringstream os;
  os << "[general]\nseed = " << c.seed << "\njobs = " << c.jobs << "\n";
  if (!c.out.empty()) os << "out = " << c.out << "\n";
  os << "\n[data]\n";
  if (!c.truth_params.empty()) os << "truth_params = " << c.truth_params << "\n";
  os << "split_seed = " << g.split_seed << "\ntrials = " << g.trials << "\nsubsteps = " << g.substeps
     << "\nlaunch_speed = " << format_double(g.launch_speed) << "\ngondola_z = " << format_double(g.gondola_z)
     << "\njitter_pos = " << format_double(g.jitter_pos)
     << "\njitter_yaw_deg = " << format_double(g.jitter_yaw / kDeg) << "\nspiral_samples = "
     << g.spiral_min_samples << ", " << g.spiral_max_samples << "\nlinear_samples = " << g.linear_min_samples
     << ", " << g.linear_max_samples << "\neta_perturbation = " << format_double(g.eta_perturbation)
     << "\nresidual_cv = " << format_double(g.residual.c_v) << "\nresidual_cw = " << format_double(g.residual.c_w)
     << "\nnoise_pos = " << format_double(g.noise.sigma_pos)
     << "\nnoise_euler_deg = " << format_double(g.noise.sigma_euler / kDeg)
     << "\nnoise_vel = " << format_double(g.noise.sigma_vel)
     << "\nnoise_omega_deg = " << format_double(g.noise.sigma_omega / kDeg)
     << "\ndisplacements = " << join(g.displacements) << "\n";
  if (!g.config_ids.empty()) os << "configs = " << join(g.config_ids) << "\n";
  os << "\n[train]\nmodels = " << join_models(c.models) << "\nn1 = " << t.n1 << "\nn2 = " << t.n2
     << "\nnode_epochs = " << t.node_epochs << "\nlr_eta = " << format_double(t.lr_eta)
     << "\nlr_theta = " << format_double(t.lr_theta) << "\nbeta1 = " << format_double(t.beta1)
     << "\nbeta2 = " << format_double(t.beta2) << "\neps = " << format_double(t.eps)
     << "\noutput_gain = " << format_double(t.output_gain) << "\nclip = " << (t.clip ? "true" : "false")
     << "\nclip_norm = " << format_double(t.clip_norm) << "\nrelative_eta = " << (t.relative_eta ? "true" : "false")
     << "\neta_scale_floor = " << format_double(t.eta_scale_floor) << "\nmax_samples = " << t.max_samples
     << "\nseed = " << t.seed << "\n";
  const SindyOptions& s = c.fit.sindy;
  os << "\n[sindy]\nthreshold = " << format_double(s.threshold) << "\nridge = " << format_double(s.ridge)
     << "\nmax_iterations = " << s.max_iterations << "\nmax_condition = " << format_double(s.max_condition) << "\n";
  os << "\n[eval]\nmax_samples = " << c.eval_max_samples << "\n";
  if (!c.series_configs.empty()) os << "series_configs = " << join(c.series_configs) << "\n";
  os << "\n[study]\nmodels = " << join_models(c.study_models) << "\ntruth_row = " << (c.truth_row ? "true" : "false")
     << "\nlevels = " << join(c.robustness.levels) << "\nrobust_delta = " << format_double(c.robustness.delta_rx_cm)
     << "\nstrides = " << join(c.timestep.strides) << "\ncycle = " << join(c.timestep.cycle)
     << "\nhorizons = " << join(c.timestep.horizons_s) << "\n";
  return os.str();
}

PhysParams resolve_truth(const RunConfig& cfg) {
  if (cfg.truth_params.empty()) return default_truth_params();
  fs::path p(cfg.truth_params);
  if (p.is_relative() && !cfg.path.empty() && cfg.path != "<string>") {
    const fs::path beside = fs::path(cfg.path).parent_path() / p;
    if (fs::exists(beside)) p = beside;
  }
  std::string text;
  try {
    text = read_file(p.string());
  } catch (const Error&) {
    throw Error(ErrorCode::kConfig, "key 'data.truth_params': cannot open '" + p.string() + "'");
  }
  return parse_phys_params(text, p.string());
}

std::string checkpoint_path(const std::string& run_dir, ModelKind kind, int config_id) {
  return (fs::path(run_dir) / "models" / model_name(kind) / (config_tag(config_id) + ".ckpt")).string();
}

namespace {

std::string failed_marker(const std::string& ckpt) { return ckpt.substr(0, ckpt.size() - 5) + ".failed"; }

Model load_trained(const std::string& run_dir, ModelKind kind, int config_id) {
  const std::string path = checkpoint_path(run_dir, kind, config_id);
  const std::string marker = failed_marker(path);
  if (fs::exists(marker)) throw Error(ErrorCode::kNonFinite, trim(read_file(marker)));
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kMissingArtifact, "no " + std::string(model_name(kind)) + " checkpoint for config " +
                                                 std::to_string(config_id) + " at '" + path + "'");
  }
  return load_checkpoint(path);
}

}  // namespace

Dataset run_generate(const RunConfig& cfg, const std::string& dataset_dir) {
  const PhysParams truth = resolve_truth(cfg);
  Dataset data = generate_dataset(cfg.gen, truth, cfg.jobs);
  save_dataset(data, dataset_dir);
  return data;
}

void run_train(const RunConfig& cfg, const std::string& dataset_dir, ModelKind kind, const std::string& run_dir) {
  if (kind == ModelKind::kTruth) throw Error(ErrorCode::kConfig, "truth is not a trainable model");
  const Dataset data = load_dataset(dataset_dir);
  FitOptions fit = cfg.fit;
  fit.train.jobs = 1;
  std::vector<std::string> failures(data.configs.size());
  parallel_for(data.configs.size(), cfg.jobs, [&](std::size_t i) {
    const int id = data.configs[i].id;
    const std::string ckpt = checkpoint_path(run_dir, kind, id);
    const std::string marker = failed_marker(ckpt);
    const std::string report = ckpt.substr(0, ckpt.size() - 5) + ".report";
    try {
      const FitResult r = fit_model(kind, data.select(id, Role::kTrain), data.eta0, fit);
      save_checkpoint(ckpt, r.model);
      if (r.report) write_file_atomic(report, format_train_report(*r.report));
      fs::remove(marker);
    } catch (const Error& e) {
      if (!recoverable(e.code()) && e.code() != ErrorCode::kIllConditioned) throw;
      failures[i] = "config " + std::to_string(id) + ": " + e.what();
      write_file_atomic(marker, failures[i] + "\n");
      fs::remove(ckpt);
    }
  });
  std::size_t n_failed = 0;
  std::string first;
  for (const auto& f : failures) {
    if (f.empty()) continue;
    if (first.empty()) first = f;
    ++n_failed;
  }
  if (n_failed > 0) {
    throw Error(ErrorCode::kNonFinite, std::string(model_name(kind)) + " training diverged on " +
                                           std::to_string(n_failed) + " of " + std::to_string(data.configs.size()) +
                                           " configurations (" + first + ")");
  }
}

void run_eval(const RunConfig& cfg, const std::string& dataset_dir, ModelKind kind, const std::string& run_dir) {
  const Dataset data = load_dataset(dataset_dir);
  const fs::path dir = fs::path(run_dir) / "eval" / model_name(kind);
  struct Row {
    double loss = 0.0;
    std::string status = "ok";
    std::string series;
  };
  std::vector<Row> rows(data.configs.size());
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t i) {
    const int id = data.configs[i].id;
    try {
      const Model m = kind == ModelKind::kTruth ? truth_model(data.truth, cfg.gen.residual)
                                                : load_trained(run_dir, kind, id);
      const auto test = data.select(id, Role::kTest);
      if (test.empty()) throw Error(ErrorCode::kEmptyData, "config " + std::to_string(id) + " has no test trial");
      const Evaluation ev = evaluate_model(m, *test.front(), config_weights(data, id), 1, cfg.eval_max_samples);
      rows[i].loss = ev.loss;
      if (std::count(cfg.series_configs.begin(), cfg.series_configs.end(), id)) {
        rows[i].series = format_series(ev.times, ev.mse);
      }
    } catch (const Error& e) {
      if (!recoverable(e.code())) throw;
      rows[i].status = "failed";
      rows[i].loss = std::numeric_limits<double>::quiet_NaN();
    }
  });
  std::ostringstream os;
  os << "config,loss,status\n";
  std::vector<double> ok;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int id = data.configs[i].id;
    os << id << "," << (rows[i].status == "ok" ? format_double(rows[i].loss) : "nan") << "," << rows[i].status
       << "\n";
    if (rows[i].status == "ok") ok.push_back(rows[i].loss);
    if (!rows[i].series.empty()) write_file_atomic((dir / ("series_" + config_tag(id) + ".dat")).string(), rows[i].series);
  }
  write_file_atomic((dir / "losses.csv").string(), os.str());
  if (!ok.empty()) {
    const Summary s = summarize(ok);
    std::ostringstream sum;
    sum << "count,failed,mean,median,q1,q3,iqr,stddev,min,max\n"
        << s.count << "," << rows.size() - ok.size() << "," << format_double(s.mean) << "," << format_double(s.median)
        << "," << format_double(s.q1) << "," << format_double(s.q3) << "," << format_double(s.iqr) << ","
        << format_double(s.stddev) << "," << format_double(s.min) << "," << format_double(s.max) << "\n";
    write_file_atomic((dir / "summary.csv").string(), sum.str());
  }
}

std::vector<std::string> study_names() { return {"heatmap", "generalization", "robustness", "timestep"}; }

StudyResult run_study(const RunConfig& cfg, const std::string& dataset_dir, const std::string& study,
                      const std::string& run_dir) {
  const auto names = study_names();
  if (std::find(names.begin(), names.end(), study) == names.end()) {
    throw Error(ErrorCode::kConfig, "unknown study '" + study + "' (heatmap, generalization, robustness, timestep)");
  }
  const Dataset data = load_dataset(dataset_dir);
  StudyOptions opt;
  opt.jobs = cfg.jobs;
  opt.eval_max_samples = cfg.eval_max_samples;
  opt.series_configs = cfg.series_configs;
  const ModelSource source = [&](ModelKind k, int id) { return load_trained(run_dir, k, id); };

  StudyResult r;
  if (study == "heatmap") {
    r = heatmap_study(data, cfg.study_models, source, opt, cfg.truth_row);
  } else if (study == "generalization") {
    r = generalization_study(data, cfg.study_models, source, opt);
  } else if (study == "robustness") {
    RobustnessOptions ro = cfg.robustness;
    ro.fit = cfg.fit;
    ro.fit.train.jobs = 1;
    r = robustness_study(data, ro, opt);
  } else {
    r = timestep_study(data, source, cfg.timestep, opt);
  }
  const fs::path dir = fs::path(run_dir) / "studies" / study;
  for (const auto& t : r.tables) write_file_atomic((dir / t.name).string(), t.text);
  return r;
}

std::string format_manifest(const RunManifest& m) {
  std::ostringstream os;
  os << "command = " << m.command << "\n";
  os << "config = " << m.config_path << "\n";
  os << "seed = " << m.seed << "\n";
  os << "jobs = " << m.jobs << "\n";
  os << "version = " << m.version << "\n";
  os << "inputs = ";
  for (std::size_t i = 0; i < m.inputs.size(); ++i) os << (i ? ", " : "") << m.inputs[i];
  os << "\noutputs = ";
  for (std::size_t i = 0; i < m.outputs.size(); ++i) os << (i ? ", " : "") << m.outputs[i];
  os << "\nwall_seconds = " << format_double(m.wall_seconds) << "\n";
  os << "exit_code = " << m.exit_code << "\n";
  os << "status = " << (m.exit_code == 0 ? "ok" : "failed") << "\n";
  if (!m.message.empty()) {
    std::string msg = m.message;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), '#', ' ');
    os << "message = " << msg << "\n";
  }
  return os.str();
}

}  // namespace abnode
