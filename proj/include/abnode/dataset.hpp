#pragma once

#include "abnode/dynamics.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace abnode {

enum class MotionKind { kSpiral, kLinear };
enum class Role { kUnassigned, kTrain, kTest };

const char* motion_kind_name(MotionKind k);
const char* role_name(Role r);

/// One flight configuration: gondola displacement and propeller thrusts.
struct MotionConfig {
  int id = 0;
  double delta_rx_cm = 0.0;
  double f_left_gf = 0.0;
  double f_right_gf = 0.0;
  MotionKind kind = MotionKind::kSpiral;
  int trials = 4;
  // Position on the displacement x thrust grid (spiral configs); -1 for linear.
  int grid_row = -1;
  int grid_col = -1;
  // false when the thrust pair was interpolated rather than taken from the
  // named experiment set.
  bool named = true;

  ControlVec control() const;
  std::string label() const;
};

/// Recorded generator inputs sufficient to re-simulate one trajectory.
struct Provenance {
  int config_id = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  int substeps = 10;
  std::string truth_hash;
  double residual_cv = 0.0;
  double residual_cw = 0.0;
  double sigma_pos = 0.0;
  double sigma_euler = 0.0;
  double sigma_vel = 0.0;
  double sigma_omega = 0.0;
  double launch_speed = 0.0;
  double gondola_x0 = 0.0;
  double gondola_z = 0.0;
  double jitter_pos = 0.0;
  double jitter_yaw = 0.0;
  double delta_rx_cm = 0.0;
  double f_left_gf = 0.0;
  double f_right_gf = 0.0;
  MotionKind kind = MotionKind::kSpiral;
};

struct Trajectory {
  int config_id = 0;
  int trial = 0;
  Role role = Role::kUnassigned;
  double dt = 1.0 / 60.0;
  std::vector<double> t;
  std::vector<StateVec> states;
  std::vector<ControlVec> controls;
  Provenance provenance;

  std::size_t size() const { return states.size(); }
  double duration() const { return states.empty() ? 0.0 : dt * static_cast<double>(states.size() - 1); }
};

struct Dataset {
  std::vector<MotionConfig> configs;
  std::vector<Trajectory> trajectories;
  PhysParams truth;
  PhysParams eta0;  // constants plus the perturbed initial eta
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;

  const MotionConfig& config(int id) const;
  std::vector<const Trajectory*> select(int config_id, Role role) const;
  std::vector<const Trajectory*> of_config(int config_id) const;
};

/// Stable FNV-1a hash of the parameter document, hex encoded.
std::string params_hash(const PhysParams& params);

// Trajectory files: '#' provenance block, header row, comma-separated SI values.
std::string format_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(const std::string& text, const std::string& origin = "<string>");

/// Writes index.txt, truth.params, eta0.params and traj/*.csv under dir.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

std::string trajectory_filename(int config_id, int trial);
std::vector<std::string> state_channel_names();

}  // namespace abnode
