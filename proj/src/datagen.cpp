#include "abnode/datagen.hpp"

#include "abnode/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace abnode {

std::vector<double> grid_displacements() { return {-1.0, 0.0, 1.0, 2.0, 3.0, 4.0}; }

std::vector<std::pair<double, double>> grid_thrusts() {
  return {{1.2, 5.4}, {1.6, 5.5}, {1.2, 6.1}, {1.7, 6.1}, {1.7, 5.4}, {1.4, 5.8}};
}

bool grid_cell_feasible(double delta_rx_cm, int col) {
  const bool extreme = delta_rx_cm <= -1.0 || delta_rx_cm >= 4.0;
  return !(extreme && col >= 3);
}

std::vector<MotionConfig> config_grid(const std::vector<double>& displacements) {
  std::vector<MotionConfig> out;
  const auto& disp = displacements;
  const auto thrust = grid_thrusts();
  int id = 0;
  for (int r = 0; r < static_cast<int>(disp.size()); ++r) {
    for (int c = 0; c < static_cast<int>(thrust.size()); ++c) {
      if (!grid_cell_feasible(disp[r], c)) continue;
      MotionConfig m;
      m.id = id++;
      m.delta_rx_cm = disp[r];
      m.f_left_gf = thrust[c].first;
      m.f_right_gf = thrust[c].second;
      m.kind = MotionKind::kSpiral;
      m.grid_row = r;
      m.grid_col = c;
      out.push_back(m);
    }
  }
  for (double d : disp) {
    if (d >= 4.0) continue;
    MotionConfig m;
    m.id = id++;
    m.delta_rx_cm = d;
    m.f_left_gf = kLinearThrustGf;
    m.f_right_gf = kLinearThrustGf;
    m.kind = MotionKind::kLinear;
    out.push_back(m);
  }
  return out;
}

DynamicsResidual planted_residual(const ResidualSpec& spec) {
  return [spec](const StateVec& x, const ControlVec&) {
    Eigen::Matrix<double, 6, 1> r;
    const Vec3 v = x.segment<3>(sx::kVel);
    const Vec3 w = x.segment<3>(sx::kOmega);
    r.head<3>() = -spec.c_v * v.norm() * v;
    r.tail<3>() = -spec.c_w * w.norm() * w;
    return r;
  };
}

StateVec truth_derivative(const StateVec& x, const ControlVec& u, const PhysParams& truth,
                          const ResidualSpec& spec) {
  StateVec d = f_phy(x, u, truth);
  d.segment<6>(sx::kVel) += planted_residual(spec)(x, u);
  return d;
}

std::uint64_t trial_seed(std::uint64_t dataset_seed, int config_id, int trial) {
  // splitmix64 over the packed identifiers
  std::uint64_t z = dataset_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(config_id) * 64 +
                                                             static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

bool in_envelope(const StateVec& x) {
  if (!x.allFinite()) return false;
  if (std::abs(x[sx::kEuler]) > 1.2 || std::abs(x[sx::kEuler + 1]) > 1.2) return false;
  return x.segment<3>(sx::kVel).norm() < 5.0 && x.segment<3>(sx::kOmega).norm() < 10.0;
}

}  // namespace

Trajectory simulate_trial(const Provenance& prov, const PhysParams& truth) {
  if (prov.samples < 1 || prov.substeps < 1) {
    throw Error(ErrorCode::kInvalidArgument, "trajectory needs at least one sample and one substep");
  }
  std::mt19937_64 rng(prov.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  MotionConfig cfg;
  cfg.f_left_gf = prov.f_left_gf;
  cfg.f_right_gf = prov.f_right_gf;
  const ControlVec u = cfg.control();

  RigidState s0;
  s0.p = Vec3(prov.jitter_pos * unit(rng), prov.jitter_pos * unit(rng), 0.0);
  s0.e = Vec3(0.0, 0.0, prov.jitter_yaw * unit(rng));
  s0.v_b = Vec3(prov.launch_speed, 0.0, 0.0);
  s0.r_bar = Vec3(prov.gondola_x0, 0.0, prov.gondola_z);

  const ResidualSpec res{prov.residual_cv, prov.residual_cw};
  const double dt = 1.0 / 60.0;
  const double h = dt / prov.substeps;
  auto deriv = [&](const StateVec& x) { return truth_derivative(x, u, truth, res); };

  Trajectory traj;
  traj.config_id = prov.config_id;
  traj.trial = prov.trial;
  traj.dt = dt;
  traj.provenance = prov;
  traj.states.reserve(prov.samples);
  StateVec x = s0.to_vector();
  for (std::size_t i = 0; i < prov.samples; ++i) {
    if (!in_envelope(x)) {
      throw Error(ErrorCode::kUnstable, "config " + std::to_string(prov.config_id) + " trial " +
                                            std::to_string(prov.trial) + " left the flight envelope at sample " +
                                            std::to_string(i));
    }
    traj.t.push_back(dt * static_cast<double>(i));
    traj.states.push_back(x);
    traj.controls.push_back(u);
    if (i + 1 == prov.samples) break;
    try {
      for (int k = 0; k < prov.substeps; ++k) {
        const StateVec k1 = deriv(x);
        const StateVec k2 = deriv(x + 0.5 * h * k1);
        const StateVec k3 = deriv(x + 0.5 * h * k2);
        const StateVec k4 = deriv(x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::kUnstable, "config " + std::to_string(prov.config_id) + " trial " +
                                            std::to_string(prov.trial) + " failed at sample " +
                                            std::to_string(i) + ": " + e.what());
    }
  }

  for (auto& xs : traj.states) {
    for (int j = 0; j < 3; ++j) xs[sx::kPos + j] += prov.sigma_pos * gauss(rng);
    for (int j = 0; j < 3; ++j) xs[sx::kEuler + j] += prov.sigma_euler * gauss(rng);
    for (int j = 0; j < 3; ++j) xs[sx::kVel + j] += prov.sigma_vel * gauss(rng);
    for (int j = 0; j < 3; ++j) xs[sx::kOmega + j] += prov.sigma_omega * gauss(rng);
  }
  return traj;
}

std::vector<Trajectory> simulate_truth(const MotionConfig& config, const PhysParams& truth,
                                       const GeneratorConfig& gen) {
  const std::string hash = params_hash(truth);
  std::vector<Trajectory> out;
  for (int trial = 0; trial < config.trials; ++trial) {
    Provenance p;
    p.config_id = config.id;
    p.trial = trial;
    p.seed = trial_seed(gen.seed, config.id, trial);
    std::mt19937_64 len_rng(p.seed ^ 0x5bd1e995ULL);
    const bool spiral = config.kind == MotionKind::kSpiral;
    std::uniform_int_distribution<std::size_t> len(spiral ? gen.spiral_min_samples : gen.linear_min_samples,
                                                   spiral ? gen.spiral_max_samples : gen.linear_max_samples);
    p.samples = len(len_rng);
    p.substeps = gen.substeps;
    p.truth_hash = hash;
    p.residual_cv = gen.residual.c_v;
    p.residual_cw = gen.residual.c_w;
    p.sigma_pos = gen.noise.sigma_pos;
    p.sigma_euler = gen.noise.sigma_euler;
    p.sigma_vel = gen.noise.sigma_vel;
    p.sigma_omega = gen.noise.sigma_omega;
    p.launch_speed = gen.launch_speed;
    p.gondola_x0 = config.delta_rx_cm * 0.01;
    p.gondola_z = gen.gondola_z;
    p.jitter_pos = gen.jitter_pos;
    p.jitter_yaw = gen.jitter_yaw;
    p.delta_rx_cm = config.delta_rx_cm;
    p.f_left_gf = config.f_left_gf;
    p.f_right_gf = config.f_right_gf;
    p.kind = config.kind;
    out.push_back(simulate_trial(p, truth));
  }
  return out;
}

void split_dataset(Dataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& c : data.configs) {
    std::vector<Trajectory*> trials;
    for (auto& t : data.trajectories) {
      if (t.config_id == c.id) trials.push_back(&t);
    }
    if (trials.size() != 4) {
      throw Error(ErrorCode::kWrongTrialCount, "config " + std::to_string(c.id) + " has " +
                                                   std::to_string(trials.size()) + " trials, expected 4");
    }
    std::uniform_int_distribution<int> pick(0, 3);
    const int test = pick(rng);
    for (int k = 0; k < 4; ++k) trials[k]->role = k == test ? Role::kTest : Role::kTrain;
  }
  data.split_seed = seed;
}

EtaVec perturb_eta(const EtaVec& eta_true, double frac, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  EtaVec out;
  for (int i = 0; i < kEtaDim; ++i) out[i] = eta_true[i] * (1.0 + frac * unit(rng));
  return out;
}

Dataset generate_dataset(const GeneratorConfig& gen, const PhysParams& truth, int jobs) {
  truth.validate();
  Dataset data;
  data.seed = gen.seed;
  data.truth = truth;
  for (const auto& c : config_grid(gen.displacements)) {
    if (gen.config_ids.empty() ||
        std::find(gen.config_ids.begin(), gen.config_ids.end(), c.id) != gen.config_ids.end()) {
      MotionConfig copy = c;
      copy.trials = gen.trials;
      data.configs.push_back(copy);
    }
  }
  if (gen.config_ids.size() > 0 && data.configs.size() != gen.config_ids.size()) {
    throw Error(ErrorCode::kConfig, "config_ids names a configuration outside the grid");
  }
  std::vector<std::vector<Trajectory>> per(data.configs.size());
  parallel_for(data.configs.size(), jobs,
               [&](std::size_t i) { per[i] = simulate_truth(data.configs[i], truth, gen); });
  for (auto& group : per) {
    for (auto& t : group) data.trajectories.push_back(std::move(t));
  }
  split_dataset(data, gen.split_seed);
  data.eta0 = truth;
  data.eta0.eta = perturb_eta(truth.eta, gen.eta_perturbation, gen.seed ^ 0xe7a0ULL);
  return data;
}

}  // namespace abnode
