#include "abnode/integrator.hpp"

#include <array>

namespace abnode {

namespace {

struct StageStates {
  std::array<StateVec, 4> s;
};

void check_stage(const StateVec& k, int stage) {
  if (!k.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "RK4 stage " + std::to_string(stage) + " is not finite");
  }
}

StateVec rk4_step_recording(const VectorField& field, const StateVec& x, const ControlVec& u,
                            double h, std::span<const double> params, StageStates* rec) {
  const StateVec k1 = field.eval(x, u, params);
  check_stage(k1, 1);
  const StateVec s2 = x + 0.5 * h * k1;
  const StateVec k2 = field.eval(s2, u, params);
  check_stage(k2, 2);
  const StateVec s3 = x + 0.5 * h * k2;
  const StateVec k3 = field.eval(s3, u, params);
  check_stage(k3, 3);
  const StateVec s4 = x + h * k3;
  const StateVec k4 = field.eval(s4, u, params);
  check_stage(k4, 4);
  if (rec) rec->s = {x, s2, s3, s4};
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

StateVec rk4_step(const VectorField& field, const StateVec& x, const ControlVec& u, double h,
                  std::span<const double> params) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step size must be positive");
  return rk4_step_recording(field, x, u, h, params, nullptr);
}

std::vector<double> uniform_steps(double h, std::size_t n_steps) {
  return std::vector<double>(n_steps, h);
}

Rollout rollout(const VectorField& field, std::span<const double> params, const StateVec& x0,
                std::span<const ControlVec> controls, double h, std::size_t n_samples) {
  if (n_samples == 0) throw Error(ErrorCode::kInvalidArgument, "rollout needs at least one sample");
  const auto steps = uniform_steps(h, n_samples - 1);
  Rollout r = rollout(field, params, x0, controls, steps);
  r.h = h;
  return r;
}

Rollout rollout(const VectorField& field, std::span<const double> params, const StateVec& x0,
                std::span<const ControlVec> controls, std::span<const double> steps) {
  if (controls.size() < steps.size()) {
    throw Error(ErrorCode::kLengthMismatch, "fewer controls than steps");
  }
  Rollout r;
  r.steps.assign(steps.begin(), steps.end());
  r.h = steps.empty() ? 0.0 : steps.front();
  r.states.reserve(steps.size() + 1);
  r.times.reserve(steps.size() + 1);
  r.states.push_back(x0);
  r.times.push_back(0.0);
  double t = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step size must be positive");
    try {
      r.states.push_back(rk4_step_recording(field, r.states.back(), controls[i], steps[i], params, nullptr));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      throw Error(ErrorCode::kNonFinite, "rollout diverged at step " + std::to_string(i) + " (" + e.what() + ")");
    }
    t += steps[i];
    r.times.push_back(t);
  }
  return r;
}

LossGradient rollout_gradient(const VectorField& field, std::span<const double> params,
                              const StateVec& x0, std::span<const ControlVec> controls,
                              std::span<const double> steps, std::span<const StateVec> reference,
                              const Weights& w, GradRequest want) {
  const std::size_t n = reference.size();
  if (n == 0 || steps.size() + 1 != n) {
    throw Error(ErrorCode::kDimensionMismatch, "reference length must equal steps + 1");
  }
  if (controls.size() < steps.size()) throw Error(ErrorCode::kLengthMismatch, "fewer controls than steps");
  if (params.size() != field.param_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has wrong length");
  }

  LossGradient out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  if (n < 2) return out;

  // Forward sweep, recording stage states.
  std::vector<StateVec> states(n);
  std::vector<StageStates> stages(n - 1);
  states[0] = x0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    try {
      states[i + 1] = rk4_step_recording(field, states[i], controls[i], steps[i], params, &stages[i]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      throw Error(ErrorCode::kNonFinite, "rollout diverged at step " + std::to_string(i));
    }
  }
  out.loss = weighted_mse(states, reference, w);

  const double coef = 2.0 / (kStateDim * static_cast<double>(n - 1));
  const StateVec w2 = w.cwiseProduct(w);
  std::span<double> grad_p{out.grad.data(), static_cast<std::size_t>(out.grad.size())};

  // Reverse sweep.
  StateVec lambda = StateVec::Zero();
  for (std::size_t i = n - 1; i-- > 0;) {
    lambda += coef * w2.cwiseProduct(states[i + 1] - reference[i + 1]);
    const double h = steps[i];
    const ControlVec& u = controls[i];
    const auto& s = stages[i].s;

    StateVec gk4 = (h / 6.0) * lambda;
    StateVec gk3 = (h / 3.0) * lambda;
    StateVec gk2 = (h / 3.0) * lambda;
    StateVec gk1 = (h / 6.0) * lambda;
    StateVec gx = lambda;
    StateVec gs;

    gs.setZero();
    field.vjp(s[3], u, params, gk4, gs, grad_p, want);
    gx += gs;
    gk3 += h * gs;

    gs.setZero();
    field.vjp(s[2], u, params, gk3, gs, grad_p, want);
    gx += gs;
    gk2 += 0.5 * h * gs;

    gs.setZero();
    field.vjp(s[1], u, params, gk2, gs, grad_p, want);
    gx += gs;
    gk1 += 0.5 * h * gs;

    gs.setZero();
    field.vjp(s[0], u, params, gk1, gs, grad_p, want);
    gx += gs;

    lambda = gx;
  }
  out.grad_x0 = lambda;
  if (!out.grad.allFinite()) throw Error(ErrorCode::kNonFinite, "gradient is not finite");
  return out;
}

ParamGradient split_gradient(const Eigen::VectorXd& grad) {
  if (grad.size() < kEtaDim) throw Error(ErrorCode::kDimensionMismatch, "gradient shorter than eta");
  ParamGradient g;
  g.d_eta = grad.head<kEtaDim>();
  g.d_theta = grad.tail(grad.size() - kEtaDim);
  return g;
}

}  // namespace abnode
