#pragma once

#include "abnode/field.hpp"
#include "abnode/loss.hpp"

#include <span>
#include <vector>

namespace abnode {

struct Rollout {
  std::vector<double> times;
  std::vector<StateVec> states;
  double h = 0.0;  // nominal step; see `steps` for mixed schedules
  std::vector<double> steps;
};

/// Classical fourth-order Runge-Kutta step with the control held over the step.
/// Throws NonFinite if any stage evaluates to NaN/Inf.
StateVec rk4_step(const VectorField& field, const StateVec& x, const ControlVec& u, double h,
                  std::span<const double> params);

/// Open-loop rollout of n_samples states (n_samples - 1 steps) from x0 with a
/// uniform step. controls[i] is held over step i.
Rollout rollout(const VectorField& field, std::span<const double> params, const StateVec& x0,
                std::span<const ControlVec> controls, double h, std::size_t n_samples);

/// Rollout with an explicit per-step schedule (steps.size() + 1 samples).
Rollout rollout(const VectorField& field, std::span<const double> params, const StateVec& x0,
                std::span<const ControlVec> controls, std::span<const double> steps);

/// Uniform schedule helper.
std::vector<double> uniform_steps(double h, std::size_t n_steps);

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d params
  StateVec grad_x0 = StateVec::Zero();
};

/// Weighted-MSE loss of the open-loop rollout against `reference` (anchored
/// at x0) and its exact gradient, obtained by reverse-mode differentiation
/// through every RK4 stage (discrete adjoint).
LossGradient rollout_gradient(const VectorField& field, std::span<const double> params,
                              const StateVec& x0, std::span<const ControlVec> controls,
                              std::span<const double> steps, std::span<const StateVec> reference,
                              const Weights& w, GradRequest want = {});

struct ParamGradient {
  EtaVec d_eta = EtaVec::Zero();
  Eigen::VectorXd d_theta;
};

/// Splits a flat [eta | theta] gradient.
ParamGradient split_gradient(const Eigen::VectorXd& grad);

}  // namespace abnode
