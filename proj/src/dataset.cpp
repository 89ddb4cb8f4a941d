#include "abnode/dataset.hpp"

#include "abnode/kvfile.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace abnode {

const char* motion_kind_name(MotionKind k) { return k == MotionKind::kSpiral ? "spiral" : "linear"; }

const char* role_name(Role r) {
  switch (r) {
    case Role::kTrain: return "train";
    case Role::kTest: return "test";
    case Role::kUnassigned: break;
  }
  return "unassigned";
}

namespace {

MotionKind parse_kind(const std::string& s) {
  if (s == "spiral") return MotionKind::kSpiral;
  if (s == "linear") return MotionKind::kLinear;
  throw Error(ErrorCode::kConfig, "unknown motion kind '" + s + "'");
}

Role parse_role(const std::string& s) {
  if (s == "train") return Role::kTrain;
  if (s == "test") return Role::kTest;
  if (s == "unassigned") return Role::kUnassigned;
  throw Error(ErrorCode::kConfig, "unknown role '" + s + "'");
}

std::uint64_t parse_u64(const std::string& s) { return std::stoull(s); }

}  // namespace

ControlVec MotionConfig::control() const {
  ControlVec u = ControlVec::Zero();
  u[ux::kLeft] = f_left_gf * kGramForce;
  u[ux::kRight] = f_right_gf * kGramForce;
  return u;
}

std::string MotionConfig::label() const {
  std::ostringstream os;
  os << motion_kind_name(kind) << "(" << format_double(delta_rx_cm) << "cm," << format_double(f_left_gf)
     << "gf," << format_double(f_right_gf) << "gf)";
  return os.str();
}

const MotionConfig& Dataset::config(int id) const {
  for (const auto& c : configs) {
    if (c.id == id) return c;
  }
  throw Error(ErrorCode::kMissingArtifact, "no configuration with id " + std::to_string(id));
}

std::vector<const Trajectory*> Dataset::select(int config_id, Role role) const {
  std::vector<const Trajectory*> out;
  for (const auto& t : trajectories) {
    if (t.config_id == config_id && t.role == role) out.push_back(&t);
  }
  return out;
}

std::vector<const Trajectory*> Dataset::of_config(int config_id) const {
  std::vector<const Trajectory*> out;
  for (const auto& t : trajectories) {
    if (t.config_id == config_id) out.push_back(&t);
  }
  return out;
}

std::string params_hash(const PhysParams& params) {
  const std::string doc = format_phys_params(params);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : doc) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> state_channel_names() {
  return {"p_x",    "p_y",    "p_z",    "roll",    "pitch",   "yaw",
          "u",      "v",      "w",      "p",       "q",       "r",
          "rbar_x", "rbar_y", "rbar_z", "rbard_x", "rbard_y", "rbard_z"};
}

std::string trajectory_filename(int config_id, int trial) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "c%03d_t%d.csv", config_id, trial);
  return buf;
}

std::string format_trajectory(const Trajectory& traj) {
  const Provenance& p = traj.provenance;
  std::ostringstream os;
  os << "# abnode trajectory v1\n";
  os << "# config_id = " << traj.config_id << "\n";
  os << "# trial = " << traj.trial << "\n";
  os << "# dt = " << format_double(traj.dt) << "\n";
  os << "# seed = " << p.seed << "\n";
  os << "# samples = " << p.samples << "\n";
  os << "# substeps = " << p.substeps << "\n";
  os << "# truth_hash = " << p.truth_hash << "\n";
  os << "# kind = " << motion_kind_name(p.kind) << "\n";
  os << "# delta_rx_cm = " << format_double(p.delta_rx_cm) << "\n";
  os << "# f_left_gf = " << format_double(p.f_left_gf) << "\n";
  os << "# f_right_gf = " << format_double(p.f_right_gf) << "\n";
  os << "# residual_cv = " << format_double(p.residual_cv) << "\n";
  os << "# residual_cw = " << format_double(p.residual_cw) << "\n";
  os << "# sigma_pos = " << format_double(p.sigma_pos) << "\n";
  os << "# sigma_euler = " << format_double(p.sigma_euler) << "\n";
  os << "# sigma_vel = " << format_double(p.sigma_vel) << "\n";
  os << "# sigma_omega = " << format_double(p.sigma_omega) << "\n";
  os << "# launch_speed = " << format_double(p.launch_speed) << "\n";
  os << "# gondola_x0 = " << format_double(p.gondola_x0) << "\n";
  os << "# gondola_z = " << format_double(p.gondola_z) << "\n";
  os << "# jitter_pos = " << format_double(p.jitter_pos) << "\n";
  os << "# jitter_yaw = " << format_double(p.jitter_yaw) << "\n";
  os << "t";
  for (const auto& n : state_channel_names()) os << "," << n;
  os << ",F_l,F_r,Fbar_x,Fbar_y,Fbar_z\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    os << format_double(traj.t[i]);
    for (int j = 0; j < kStateDim; ++j) os << "," << format_double(traj.states[i][j]);
    for (int j = 0; j < kControlDim; ++j) os << "," << format_double(traj.controls[i][j]);
    os << "\n";
  }
  return os.str();
}

Trajectory parse_trajectory(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, header_block;
  Trajectory traj;
  bool saw_header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      if (body.find('=') != std::string::npos) header_block += body + "\n";
      continue;
    }
    if (!saw_header) {
      if (split(line, ',').size() != 1 + kStateDim + kControlDim) {
        throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": bad column header");
      }
      saw_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 1 + kStateDim + kControlDim) {
      throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": expected " +
                                          std::to_string(1 + kStateDim + kControlDim) + " columns");
    }
    std::vector<double> vals(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      try {
        vals[k] = std::stod(cells[k]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": bad number '" + cells[k] + "'");
      }
    }
    traj.t.push_back(vals[0]);
    traj.states.push_back(Eigen::Map<const StateVec>(vals.data() + 1));
    traj.controls.push_back(Eigen::Map<const ControlVec>(vals.data() + 1 + kStateDim));
  }
  const KvDocument doc = KvDocument::parse(header_block, origin);
  Provenance& p = traj.provenance;
  traj.config_id = static_cast<int>(doc.get_int("config_id", 0));
  traj.trial = static_cast<int>(doc.get_int("trial", 0));
  traj.dt = doc.get_double("dt", 1.0 / 60.0);
  p.config_id = traj.config_id;
  p.trial = traj.trial;
  p.seed = parse_u64(doc.get_string("seed", "0"));
  p.samples = static_cast<std::size_t>(doc.get_int("samples", static_cast<long>(traj.states.size())));
  p.substeps = static_cast<int>(doc.get_int("substeps", 10));
  p.truth_hash = doc.get_string("truth_hash", "");
  p.kind = parse_kind(doc.get_string("kind", "spiral"));
  p.delta_rx_cm = doc.get_double("delta_rx_cm", 0.0);
  p.f_left_gf = doc.get_double("f_left_gf", 0.0);
  p.f_right_gf = doc.get_double("f_right_gf", 0.0);
  p.residual_cv = doc.get_double("residual_cv", 0.0);
  p.residual_cw = doc.get_double("residual_cw", 0.0);
  p.sigma_pos = doc.get_double("sigma_pos", 0.0);
  p.sigma_euler = doc.get_double("sigma_euler", 0.0);
  p.sigma_vel = doc.get_double("sigma_vel", 0.0);
  p.sigma_omega = doc.get_double("sigma_omega", 0.0);
  p.launch_speed = doc.get_double("launch_speed", 0.0);
  p.gondola_x0 = doc.get_double("gondola_x0", 0.0);
  p.gondola_z = doc.get_double("gondola_z", 0.0);
  p.jitter_pos = doc.get_double("jitter_pos", 0.0);
  p.jitter_yaw = doc.get_double("jitter_yaw", 0.0);
  if (traj.states.size() != p.samples) {
    throw Error(ErrorCode::kLengthMismatch, origin + ": sample count does not match the provenance block");
  }
  return traj;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "traj");
  save_phys_params((fs::path(dir) / "truth.params").string(), data.truth);
  save_phys_params((fs::path(dir) / "eta0.params").string(), data.eta0);

  std::ostringstream idx;
  idx << "# abnode dataset index v1\n";
  idx << "seed = " << data.seed << "\n";
  idx << "split_seed = " << data.split_seed << "\n";
  idx << "truth_hash = " << params_hash(data.truth) << "\n";
  idx << "configs = " << data.configs.size() << "\n";
  idx << "trajectories = " << data.trajectories.size() << "\n";
  for (const auto& c : data.configs) {
    idx << "\n[config." << c.id << "]\n";
    idx << "kind = " << motion_kind_name(c.kind) << "\n";
    idx << "delta_rx_cm = " << format_double(c.delta_rx_cm) << "\n";
    idx << "f_left_gf = " << format_double(c.f_left_gf) << "\n";
    idx << "f_right_gf = " << format_double(c.f_right_gf) << "\n";
    idx << "trials = " << c.trials << "\n";
    idx << "grid_row = " << c.grid_row << "\n";
    idx << "grid_col = " << c.grid_col << "\n";
    idx << "named = " << (c.named ? "true" : "false") << "\n";
  }
  for (std::size_t k = 0; k < data.trajectories.size(); ++k) {
    const Trajectory& t = data.trajectories[k];
    idx << "\n[trajectory." << k << "]\n";
    idx << "file = traj/" << trajectory_filename(t.config_id, t.trial) << "\n";
    idx << "config_id = " << t.config_id << "\n";
    idx << "trial = " << t.trial << "\n";
    idx << "role = " << role_name(t.role) << "\n";
    idx << "seed = " << t.provenance.seed << "\n";
    idx << "samples = " << t.size() << "\n";
    write_file_atomic((fs::path(dir) / "traj" / trajectory_filename(t.config_id, t.trial)).string(),
                      format_trajectory(t));
  }
  write_file_atomic((fs::path(dir) / "index.txt").string(), idx.str());
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path index = fs::path(dir) / "index.txt";
  if (!fs::exists(index)) {
    throw Error(ErrorCode::kMissingArtifact, "no dataset index at '" + index.string() + "'");
  }
  const KvDocument doc = KvDocument::load(index.string());
  Dataset data;
  data.seed = parse_u64(doc.get_string("seed"));
  data.split_seed = parse_u64(doc.get_string("split_seed"));
  data.truth = load_phys_params((fs::path(dir) / "truth.params").string());
  data.eta0 = load_phys_params((fs::path(dir) / "eta0.params").string());

  const long n_configs = doc.get_int("configs", 0);
  const long n_traj = doc.get_int("trajectories", 0);
  std::vector<int> ids;
  for (const auto& key : doc.keys()) {
    if (key.rfind("config.", 0) == 0 && key.size() > 5 && key.substr(key.size() - 5) == ".kind") {
      ids.push_back(std::stoi(key.substr(7, key.size() - 12)));
    }
  }
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    const std::string s = "config." + std::to_string(id) + ".";
    MotionConfig c;
    c.id = id;
    c.kind = parse_kind(doc.get_string(s + "kind"));
    c.delta_rx_cm = doc.get_double(s + "delta_rx_cm");
    c.f_left_gf = doc.get_double(s + "f_left_gf");
    c.f_right_gf = doc.get_double(s + "f_right_gf");
    c.trials = static_cast<int>(doc.get_int(s + "trials", 4));
    c.grid_row = static_cast<int>(doc.get_int(s + "grid_row", -1));
    c.grid_col = static_cast<int>(doc.get_int(s + "grid_col", -1));
    c.named = doc.get_bool(s + "named", true);
    data.configs.push_back(c);
  }
  if (static_cast<long>(data.configs.size()) != n_configs) {
    throw Error(ErrorCode::kConfig, index.string() + ": config count mismatch");
  }
  for (long k = 0; k < n_traj; ++k) {
    const std::string s = "trajectory." + std::to_string(k) + ".";
    const std::string file = (fs::path(dir) / doc.get_string(s + "file")).string();
    Trajectory t = parse_trajectory(read_file(file), file);
    t.role = parse_role(doc.get_string(s + "role"));
    data.trajectories.push_back(std::move(t));
  }
  return data;
}

}  // namespace abnode
