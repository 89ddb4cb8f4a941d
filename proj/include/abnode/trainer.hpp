#pragma once

#include "abnode/dataset.hpp"
#include "abnode/integrator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace abnode {

/// One open-loop training/evaluation sequence: anchor, held controls,
/// per-step sizes and the reference states (steps.size() + 1 of them).
struct Sequence {
  std::vector<ControlVec> controls;
  std::vector<double> steps;
  std::vector<StateVec> reference;

  const StateVec& x0() const { return reference.front(); }
};

/// Takes every `stride`-th sample of the first `max_samples` samples
/// (0 = all). Controls are held over each coarse step.
Sequence make_sequence(const Trajectory& traj, std::size_t max_samples = 0, std::size_t stride = 1);

/// Repeating cycle of integer strides, e.g. {1, 2, 3}, over the first
/// `max_samples` samples.
Sequence make_cycle_sequence(const Trajectory& traj, const std::vector<int>& cycle,
                             std::size_t max_samples = 0);

/// W_jj = 1 / (max_j - min_j) over all samples; 1 for constant channels.
Weights weight_matrix(std::span<const Trajectory* const> train);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  explicit AdamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// Bias-corrected Adam update; increments state.t before use.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  int n1 = 10;
  int n2 = 10;
  int node_epochs = 100;
  double lr_eta = 0.08;
  double lr_theta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  double output_gain = 0.01;  // multiplier on the Xavier output-layer weights
  bool clip = true;
  double clip_norm = 100.0;
  // eta is optimized in units of |eta0| (per coefficient, floored).
  bool relative_eta = true;
  double eta_scale_floor = 1e-3;
  std::size_t max_samples = 0;  // training horizon in samples; 0 = full
  int jobs = 1;
};

/// Full-batch objective over several sequences sharing one weight matrix.
struct Objective {
  const VectorField* field = nullptr;
  std::vector<Sequence> sequences;
  Weights w = Weights::Ones();

  /// Mean over sequences of the rollout loss.
  double loss(std::span<const double> params, int jobs = 1) const;
  /// Mean loss and mean gradient; per-sequence work may run in parallel but
  /// the reduction order is fixed.
  LossGradient loss_gradient(std::span<const double> params, GradRequest want, int jobs = 1) const;
};

/// Adam on the contiguous block params[offset, offset + count) of a
/// full-batch objective. With `scale` set, the optimizer works on
/// params / scale and the gradient is rescaled accordingly.
struct BlockOptions {
  std::size_t offset = 0;
  std::size_t count = 0;
  AdamConfig adam;
  bool clip = true;
  double clip_norm = 100.0;
  Eigen::VectorXd scale;
  GradRequest want;
  int jobs = 1;
  std::string label = "training";
};

/// Runs `epochs` full-batch updates; returns the loss seen at the start of
/// each epoch. `after_epoch` (optional) observes params after every update.
std::vector<double> optimize_block(const Objective& obj, Eigen::VectorXd& params, int epochs,
                                   const BlockOptions& opt,
                                   const std::function<void(const Eigen::VectorXd&)>& after_epoch = {});

/// Gated loss: b = true evaluates the first-principle rollout loss at eta
/// (theta unused); b = false evaluates the hybrid rollout loss at (eta, theta).
double physics_informed_loss(bool b, const EtaVec& eta, const Eigen::VectorXd& theta,
                             const PhysParams& constants, const NormalizationSpec& norm,
                             const std::vector<int>& dims, std::span<const Sequence> data,
                             const Weights& w);

struct TrainReport {
  std::string model;
  std::vector<double> phase1_loss;  // loss at the start of each phase-1 epoch
  std::vector<double> phase2_loss;
  double phase1_final = 0.0;  // loss after the last phase-1 update
  double phase2_final = 0.0;
  EtaVec eta_star = EtaVec::Zero();
  Eigen::VectorXd theta_star;
  std::vector<EtaVec> eta_history;       // eta after each epoch
  std::vector<std::uint64_t> theta_hashes;  // bitwise hash of theta after each epoch
  double wall_seconds = 0.0;
  std::string termination = "completed";
};

struct TrainInput {
  PhysParams eta0;  // constants plus the initial eta
  NormalizationSpec norm;
  std::vector<Sequence> sequences;
  Weights w = Weights::Ones();
  // Per-coefficient units for relative eta updates; defaults to |eta0|.
  std::optional<EtaVec> eta_scale;
};

/// FNV-1a over the raw bytes of a parameter vector.
std::uint64_t bit_hash(const Eigen::VectorXd& v);

/// Builds the standard training input from the train trajectories of one
/// configuration.
TrainInput make_train_input(std::span<const Trajectory* const> train, const PhysParams& eta0,
                            std::size_t max_samples = 0);

/// Two-phase training: n1 epochs on eta with the first-principle loss, then n2
/// epochs on theta with the hybrid loss at eta*. Throws NonFinite naming the
/// epoch on divergence.
TrainReport train_abnode(const TrainInput& in, const TrainConfig& cfg);
/// train_abnode with n1 = 0.
TrainReport train_bnode(const TrainInput& in, const TrainConfig& cfg);
/// 12-output residual on (p, e, v_b, omega_b) over the full f_phy; eta frozen.
TrainReport train_knode(const TrainInput& in, const TrainConfig& cfg);
/// Pure network on (p, e, v_b, omega_b); cfg.node_epochs epochs.
TrainReport train_node(const TrainInput& in, const TrainConfig& cfg);

}  // namespace abnode
