#include "abnode/integrator.hpp"
#include "abnode/trainer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <random>

using namespace abnode;

namespace {

// xdot = A x with A fixed.
class LinearField final : public VectorField {
 public:
  explicit LinearField(Eigen::Matrix<double, kStateDim, kStateDim> a) : a_(std::move(a)) {}
  std::size_t param_count() const override { return 0; }
  StateVec eval(const StateVec& x, const ControlVec&, std::span<const double>) const override { return a_ * x; }
  void vjp(const StateVec&, const ControlVec&, std::span<const double>, const StateVec& adj, StateVec& gx,
           std::span<double>, GradRequest) const override {
    gx += a_.transpose() * adj;
  }

 private:
  Eigen::Matrix<double, kStateDim, kStateDim> a_;
};

// xdot_0 = -eta * x_0, other components frozen.
class DecayField final : public VectorField {
 public:
  std::size_t param_count() const override { return 1; }
  StateVec eval(const StateVec& x, const ControlVec&, std::span<const double> p) const override {
    StateVec d = StateVec::Zero();
    d[0] = -p[0] * x[0];
    return d;
  }
  void vjp(const StateVec& x, const ControlVec&, std::span<const double> p, const StateVec& adj, StateVec& gx,
           std::span<double> gp, GradRequest) const override {
    gx[0] += -p[0] * adj[0];
    gp[0] += -x[0] * adj[0];
  }
};

// xdot_0 = log(x_0): NaN for negative x_0.
class BlowUp final : public VectorField {
 public:
  std::size_t param_count() const override { return 0; }
  StateVec eval(const StateVec& x, const ControlVec&, std::span<const double>) const override {
    StateVec d = StateVec::Zero();
    d[0] = std::log(x[0]);
    return d;
  }
  void vjp(const StateVec&, const ControlVec&, std::span<const double>, const StateVec&, StateVec&,
           std::span<double>, GradRequest) const override {}
};

Eigen::Matrix<double, kStateDim, kStateDim> random_stable(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Eigen::Matrix<double, kStateDim, kStateDim> a;
  for (int i = 0; i < kStateDim; ++i)
    for (int j = 0; j < kStateDim; ++j) a(i, j) = 0.3 * n01(rng);
  a -= 1.5 * Eigen::Matrix<double, kStateDim, kStateDim>::Identity();
  return a;
}

}  // namespace

TEST_CASE("single RK4 step on xdot = x") {
  const LinearField f(Eigen::Matrix<double, kStateDim, kStateDim>::Identity());
  StateVec x = StateVec::Ones();
  const StateVec y = rk4_step(f, x, ControlVec::Zero(), 1.0, {});
  // 1 + 1 + 1/2 + 1/6 + 1/24
  for (int i = 0; i < kStateDim; ++i) CHECK(y[i] == doctest::Approx(2.708333333333333).epsilon(1e-15));
}

TEST_CASE("zero field leaves the state unchanged") {
  const LinearField f(Eigen::Matrix<double, kStateDim, kStateDim>::Zero());
  StateVec x = StateVec::LinSpaced(-1.0, 1.0);
  CHECK(rk4_step(f, x, ControlVec::Zero(), 0.3, {}) == x);
  const std::vector<ControlVec> u(50, ControlVec::Zero());
  const Rollout r = rollout(f, {}, x, u, 0.1, 51);
  for (const auto& s : r.states) CHECK(s == x);
}

TEST_CASE("global error is fourth order") {
  const LinearField f(Eigen::Matrix<double, kStateDim, kStateDim>::Identity());
  auto err = [&](int n) {
    const std::vector<ControlVec> u(static_cast<std::size_t>(n), ControlVec::Zero());
    const Rollout r = rollout(f, {}, StateVec::Ones(), u, 1.0 / n, static_cast<std::size_t>(n) + 1);
    return std::abs(r.states.back()[0] - std::exp(1.0));
  };
  for (int n : {4, 8, 16, 32}) {
    const double ratio = err(n) / err(2 * n);
    CHECK(ratio >= 14.0);
    CHECK(ratio <= 18.0);
  }
}

TEST_CASE("linear rollout matches the matrix exponential") {
  const auto a = random_stable(3);
  const LinearField f(a);
  const StateVec x0 = StateVec::LinSpaced(0.5, -0.5);
  const std::vector<ControlVec> u(60, ControlVec::Zero());
  const Rollout r = rollout(f, {}, x0, u, 1.0 / 60.0, 61);
  REQUIRE(r.states.size() == 61);
  CHECK(r.states.front() == x0);
  const Eigen::Matrix<double, kStateDim, kStateDim> ea = a.exp();
  CHECK((r.states.back() - ea * x0).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(r.times.back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rollout of one sample holds only the initial state") {
  const LinearField f(Eigen::Matrix<double, kStateDim, kStateDim>::Identity());
  const Rollout r = rollout(f, {}, StateVec::Ones(), {}, 0.1, 1);
  REQUIRE(r.states.size() == 1);
  CHECK(r.states[0] == StateVec::Ones());
}

TEST_CASE("mixed-step schedules") {
  const LinearField f(random_stable(5));
  const StateVec x0 = StateVec::Ones();
  const std::vector<double> steps = {1.0 / 60, 2.0 / 60, 3.0 / 60, 1.0 / 60};
  const std::vector<ControlVec> u(steps.size(), ControlVec::Zero());
  const Rollout r = rollout(f, {}, x0, u, steps);
  REQUIRE(r.states.size() == 5);
  CHECK(r.times.back() == doctest::Approx(7.0 / 60));
  StateVec y = x0;
  for (double h : steps) y = rk4_step(f, y, ControlVec::Zero(), h, {});
  CHECK(r.states.back() == y);
}

TEST_CASE("non-finite stages are reported") {
  const BlowUp f;
  StateVec x = StateVec::Zero();
  x[0] = -1.0;
  CHECK_THROWS_AS(rk4_step(f, x, ControlVec::Zero(), 0.1, {}), Error);
  try {
    const std::vector<ControlVec> u(5, ControlVec::Zero());
    rollout(f, {}, x, u, 0.1, 6);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFinite);
  }
}

TEST_CASE("one-step gradient has the closed form") {
  const DecayField f;
  const double eta = 0.7, h = 0.25, x0v = 1.3, ref = 0.9;
  StateVec x0 = StateVec::Zero();
  x0[0] = x0v;
  std::vector<StateVec> reference(2, StateVec::Zero());
  reference[0] = x0;
  reference[1][0] = ref;
  Weights w = Weights::Ones();
  w[0] = 2.0;
  const std::vector<ControlVec> u(1, ControlVec::Zero());
  const std::vector<double> steps = {h};
  const double p[1] = {eta};
  const LossGradient lg = rollout_gradient(f, p, x0, u, steps, reference, w);
  const double z = -eta * h;
  const double P = 1 + z + z * z / 2 + z * z * z / 6 + z * z * z * z / 24;
  const double dP = 1 + z + z * z / 2 + z * z * z / 6;
  const double x1 = x0v * P;
  const double loss = w[0] * w[0] * (x1 - ref) * (x1 - ref) / kStateDim;
  const double grad = 2.0 * w[0] * w[0] * (x1 - ref) / kStateDim * x0v * dP * (-h);
  CHECK(lg.loss == doctest::Approx(loss).epsilon(1e-14));
  CHECK(std::abs(lg.grad[0] - grad) <= 1e-8 * std::abs(grad));
  // d loss / d x0 as well
  const double gx0 = 2.0 * w[0] * w[0] * (x1 - ref) / kStateDim * P;
  CHECK(std::abs(lg.grad_x0[0] - gx0) <= 1e-8 * std::abs(gx0));
}

TEST_CASE("gradient of a blimp rollout is deterministic and matches differences") {
  const Dataset data = generate_dataset(abnode::testing::small_generator({8}), default_truth_params());
  const auto train = abnode::testing::train_of(data, 8);
  Trajectory t = *train.front();
  t.states.resize(21);
  t.controls.resize(21);
  t.t.resize(21);
  const Sequence seq = make_sequence(t);
  BlimpField field(data.eta0, ResidualMode::kDynamics, {kNetInputDim, 6, 5, 6},
                   NormalizationSpec::fit(t.states, t.controls));
  const MlpParams theta = xavier_init(field.net_dims(), 9);
  Eigen::VectorXd p = pack_params(data.eta0.eta, theta.theta);
  const Weights w = weight_matrix(train);
  const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
  const LossGradient a = rollout_gradient(field, ps, seq.x0(), seq.controls, seq.steps, seq.reference, w);
  const LossGradient b = rollout_gradient(field, ps, seq.x0(), seq.controls, seq.steps, seq.reference, w);
  CHECK(bit_hash(a.grad) == bit_hash(b.grad));
  CHECK(a.loss == b.loss);

  auto loss_at = [&](const Eigen::VectorXd& q) {
    const Rollout r = rollout(field, {q.data(), static_cast<std::size_t>(q.size())}, seq.x0(), seq.controls, seq.steps);
    return weighted_mse(r.states, seq.reference, w);
  };
  CHECK(loss_at(p) == a.loss);
  for (Eigen::Index i = 0; i < p.size(); i += 7) {
    const double h = 1e-3 * std::max(1.0, std::abs(p[i]));
    const double keep = p[i];
    auto at = [&](double d) {
      p[i] = keep + d;
      return loss_at(p);
    };
    const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
    p[i] = keep;
    CHECK(std::abs(a.grad[i] - fd) <= 1e-4 * std::max({std::abs(fd), std::abs(a.grad[i]), 1e-8}));
  }

  // selective requests leave the other block at zero
  const LossGradient only_theta =
      rollout_gradient(field, ps, seq.x0(), seq.controls, seq.steps, seq.reference, w, GradRequest{false, true});
  CHECK(only_theta.grad.head(kEtaDim).norm() == 0.0);
  CHECK(only_theta.grad.tail(p.size() - kEtaDim) == a.grad.tail(p.size() - kEtaDim));
  const ParamGradient split = split_gradient(a.grad);
  CHECK(split.d_eta == a.grad.head(kEtaDim));
  CHECK(split.d_theta.size() == p.size() - kEtaDim);
}
