#pragma once

#include "abnode/dataset.hpp"
#include "abnode/field.hpp"

#include <cstdint>
#include <vector>

namespace abnode {

/// Quadratic damping added to the truth dynamics:
///   dv = -c_v |v_b| v_b,  dw = -c_w |omega_b| omega_b.
struct ResidualSpec {
  double c_v = 0.05;
  double c_w = 0.02;
};

/// Zero-mean Gaussian measurement noise, per channel group.
struct NoiseSpec {
  double sigma_pos = 0.76e-3;                    // m
  double sigma_euler = 0.1 * 3.14159265358979323846 / 180.0;  // rad
  double sigma_vel = 5e-3;                       // m/s
  double sigma_omega = 0.5 * 3.14159265358979323846 / 180.0;  // rad/s

  static NoiseSpec none() { return {0.0, 0.0, 0.0, 0.0}; }
};

/// Gondola displacements (cm) and thrust pairs (gf) of the spiral grid.
std::vector<double> grid_displacements();
std::vector<std::pair<double, double>> grid_thrusts();

struct GeneratorConfig {
  std::uint64_t seed = 20240601;
  std::uint64_t split_seed = 7;
  int trials = 4;
  int substeps = 10;
  double dt = 1.0 / 60.0;
  double launch_speed = 0.3;   // m/s along body x
  double gondola_z = 0.12;     // m below the body origin
  double jitter_pos = 0.05;    // m, uniform half-width
  double jitter_yaw = 5.0 * 3.14159265358979323846 / 180.0;
  std::size_t spiral_min_samples = 1200;
  std::size_t spiral_max_samples = 2860;
  std::size_t linear_min_samples = 400;
  std::size_t linear_max_samples = 536;
  double eta_perturbation = 0.3;  // relative half-width of the eta0 draw
  ResidualSpec residual;
  NoiseSpec noise;
  std::vector<double> displacements = grid_displacements();
  std::vector<int> config_ids;  // empty: whole grid
};

inline constexpr double kLinearThrustGf = 2.05;

/// Whether a displacement / thrust-column pair produces a stable spiral.
bool grid_cell_feasible(double delta_rx_cm, int col);

/// Spiral configurations row-major over the feasible (displacement x thrust)
/// cells, then one linear configuration per displacement below 4 cm. The
/// default displacements give 30 spiral (ids 0..29) and 5 linear (30..34).
std::vector<MotionConfig> config_grid(const std::vector<double>& displacements = grid_displacements());

DynamicsResidual planted_residual(const ResidualSpec& spec);

/// Truth field f_phy(eta_true) + planted residual.
StateVec truth_derivative(const StateVec& x, const ControlVec& u, const PhysParams& truth,
                          const ResidualSpec& spec);

std::uint64_t trial_seed(std::uint64_t dataset_seed, int config_id, int trial);

/// Re-simulates one trajectory from its provenance block. Throws Unstable
/// if the state leaves the flight envelope before the horizon.
Trajectory simulate_trial(const Provenance& prov, const PhysParams& truth);

/// All trials of one configuration.
std::vector<Trajectory> simulate_truth(const MotionConfig& config, const PhysParams& truth,
                                       const GeneratorConfig& gen);

/// Per configuration, marks one uniformly chosen trial as test and the rest
/// as train. Throws WrongTrialCount unless every configuration has 4 trials.
void split_dataset(Dataset& data, std::uint64_t seed);

/// eta_true * (1 + U(-frac, frac)) per coefficient.
EtaVec perturb_eta(const EtaVec& eta_true, double frac, std::uint64_t seed);

Dataset generate_dataset(const GeneratorConfig& gen, const PhysParams& truth, int jobs = 1);

}  // namespace abnode
