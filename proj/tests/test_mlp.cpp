#include "abnode/field.hpp"
#include "abnode/mlp.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace abnode;

namespace {

struct Sample {
  StateVec x;
  ControlVec u;
};

Sample random_sample(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  RigidState s;
  s.p = Vec3(U(rng), U(rng), U(rng));
  s.e = Vec3(0.3 * U(rng), 0.3 * U(rng), 3.0 * U(rng));
  s.v_b = Vec3(0.6 + 0.3 * U(rng), 0.2 * U(rng), 0.2 * U(rng));
  s.omega_b = Vec3(0.5 * U(rng), 0.5 * U(rng), 0.5 * U(rng));
  s.r_bar = Vec3(0.02 * U(rng), 0.0, 0.12);
  s.r_bar_dot = Vec3(0.01 * U(rng), 0.0, 0.0);
  ControlVec u;
  u << 0.03 + 0.02 * U(rng), 0.03 + 0.02 * U(rng), 0.001 * U(rng), 0.0, 0.0;
  return {s.to_vector(), u};
}

NormalizationSpec fitted(std::mt19937_64& rng) {
  std::vector<StateVec> xs;
  std::vector<ControlVec> us;
  for (int i = 0; i < 50; ++i) {
    const Sample s = random_sample(rng);
    xs.push_back(s.x);
    us.push_back(s.u);
  }
  return NormalizationSpec::fit(xs, us);
}

// Dense reference implementation of the column-major layout.
Eigen::VectorXd dense_forward(const Eigen::VectorXd& theta, const std::vector<int>& dims, Eigen::VectorXd a) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    const Eigen::MatrixXd W = Eigen::Map<const Eigen::MatrixXd>(theta.data() + off, out, in);
    off += static_cast<std::size_t>(in * out);
    const Eigen::VectorXd b = theta.segment(static_cast<Eigen::Index>(off), out);
    off += static_cast<std::size_t>(out);
    a = W * a + b;
    if (l + 2 < dims.size()) a = a.array().tanh();
  }
  return a;
}

}  // namespace

TEST_CASE("Xavier initialization") {
  const auto dims = default_dims(6);
  CHECK(dims == std::vector<int>{23, 256, 64, 6});
  CHECK(default_dims(12).back() == 12);
  const MlpParams a = xavier_init(dims, 7);
  const MlpParams b = xavier_init(dims, 7);
  CHECK(a.theta == b.theta);
  CHECK(a.theta != xavier_init(dims, 8).theta);
  CHECK(static_cast<std::size_t>(a.theta.size()) == MlpParams::count(dims));
  CHECK(MlpParams::count(dims) == 23 * 256 + 256 + 256 * 64 + 64 + 64 * 6 + 6);

  const double bound = std::sqrt(6.0 / (23 + 256));
  const auto w1 = a.theta.head(23 * 256);
  CHECK(w1.cwiseAbs().maxCoeff() <= bound);
  CHECK(w1.cwiseAbs().maxCoeff() > 0.95 * bound);
  CHECK(a.theta.segment(23 * 256, 256).norm() == 0.0);

  // mean of many entries within three standard errors of zero
  const MlpParams big = xavier_init({kNetInputDim, 4096, 6}, 3);
  const Eigen::VectorXd w = big.theta.head(kNetInputDim * 4096);
  const double b2 = std::sqrt(6.0 / (kNetInputDim + 4096));
  const double se = b2 / std::sqrt(3.0) / std::sqrt(static_cast<double>(w.size()));
  CHECK(w.size() > 90000);
  CHECK(std::abs(w.mean()) < 3.0 * se);
}

TEST_CASE("output gain scales only the last weight matrix") {
  const auto dims = default_dims(6);
  const MlpParams a = xavier_init(dims, 1);
  MlpParams b = a;
  scale_output_layer(b, 0.01);
  const Eigen::Index last = 64 * 6 + 6;
  CHECK(b.theta.head(b.theta.size() - last) == a.theta.head(a.theta.size() - last));
  CHECK((b.theta.segment(b.theta.size() - last, 64 * 6) - 0.01 * a.theta.segment(a.theta.size() - last, 64 * 6))
            .norm() < 1e-15);
}

TEST_CASE("normalization") {
  std::mt19937_64 rng(4);
  const NormalizationSpec n = fitted(rng);
  for (int c = 0; c < kNetInputDim; ++c) CHECK(n.hi(c) >= n.lo(c));
  // r_bar y/z and inactive controls never vary
  CHECK(n.is_constant(sx::kGondola + 1));
  CHECK(n.is_constant(kStateDim + 3));
  CHECK_FALSE(n.is_constant(sx::kVel));
  const Sample s = random_sample(rng);
  const NetInput z = n.apply(s.x, s.u);
  CHECK(z(sx::kGondola + 1) == 0.0);
  CHECK(z(kStateDim + 4) == 0.0);
  NetInput raw;
  raw << s.x, s.u;
  for (int c = 0; c < kNetInputDim; ++c) {
    if (!n.is_constant(c)) CHECK(z(c) == doctest::Approx((raw(c) - n.lo(c)) / (n.hi(c) - n.lo(c))).epsilon(1e-14));
  }
  // idempotence: a spec fitted on normalized data, applied to it, is the identity
  NormalizationSpec unit;
  unit.lo = NetInput::Zero();
  unit.hi = NetInput::Ones();
  CHECK((unit.apply(z) - z).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward pass matches dense algebra") {
  std::mt19937_64 rng(5);
  const NormalizationSpec n = fitted(rng);
  for (int out : {6, 12}) {
    const MlpParams p = xavier_init(default_dims(out), 11 + static_cast<std::uint64_t>(out));
    for (int t = 0; t < 20; ++t) {
      const Sample s = random_sample(rng);
      const Eigen::VectorXd got = nn_forward(s.x, s.u, p, n);
      const Eigen::VectorXd ref = dense_forward(p.theta, p.dims, n.apply(s.x, s.u));
      REQUIRE(got.size() == out);
      CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1e-12, ref.cwiseAbs().maxCoeff()));
    }
  }
  MlpParams zero = xavier_init(default_dims(6), 2);
  scale_output_layer(zero, 0.0);
  const Sample s = random_sample(rng);
  CHECK(nn_forward(s.x, s.u, zero, n).norm() == 0.0);

  MlpParams bad = zero;
  bad.theta.conservativeResize(bad.theta.size() - 1);
  CHECK_THROWS_AS(nn_forward(s.x, s.u, bad, n), Error);
}

TEST_CASE("backpropagation matches finite differences on a regression task") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  const std::vector<int> dims = {kNetInputDim, 16, 8, 6};
  MlpParams p = xavier_init(dims, 3);
  std::vector<Eigen::VectorXd> inputs, targets;
  for (int i = 0; i < 8; ++i) {
    inputs.push_back(Eigen::VectorXd::NullaryExpr(kNetInputDim, [&] { return n01(rng); }));
    targets.push_back(Eigen::VectorXd::NullaryExpr(6, [&] { return n01(rng); }));
  }
  MlpEvaluator net(dims);
  auto loss = [&](const Eigen::VectorXd& th) {
    double s = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      s += 0.5 * (net.forward({th.data(), static_cast<std::size_t>(th.size())}, inputs[i]) - targets[i]).squaredNorm();
    }
    return s;
  };
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p.theta.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::span<const double> th(p.theta.data(), static_cast<std::size_t>(p.theta.size()));
    const Eigen::VectorXd y = net.forward(th, inputs[i]);
    net.backward(th, y - targets[i], {grad.data(), static_cast<std::size_t>(grad.size())});
  }
  double worst = 0.0;
  for (Eigen::Index k = 0; k < p.theta.size(); ++k) {
    const double h = 1e-5;
    Eigen::VectorXd a = p.theta, b = p.theta;
    a[k] += h;
    b[k] -= h;
    const double fd = (loss(a) - loss(b)) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-3}));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("hybrid field adds the residual to the dynamics rows only") {
  std::mt19937_64 rng(8);
  const NormalizationSpec n = fitted(rng);
  const PhysParams c = default_truth_params();
  const BlimpField field(c, ResidualMode::kDynamics, default_dims(6), n);
  CHECK(field.param_count() == kEtaDim + MlpParams::count(default_dims(6)));
  const MlpParams th = xavier_init(default_dims(6), 12);
  const Eigen::VectorXd params = pack_params(c.eta, th.theta);
  for (int t = 0; t < 20; ++t) {
    const Sample s = random_sample(rng);
    const StateVec phys = f_phy(s.x, s.u, c);
    const StateVec hyb = field.eval(s.x, s.u, {params.data(), static_cast<std::size_t>(params.size())});
    CHECK(hyb.head<6>() == phys.head<6>());
    CHECK(hyb.tail<6>() == phys.tail<6>());
    const Eigen::VectorXd r = nn_forward(s.x, s.u, th, n);
    CHECK((hyb.segment<6>(sx::kVel) - phys.segment<6>(sx::kVel) - r).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(hybrid_field(s.x, s.u, c.eta, th, n, c) == hyb);
  }
  MlpParams zero = th;
  scale_output_layer(zero, 0.0);
  const Sample s = random_sample(rng);
  CHECK(hybrid_field(s.x, s.u, c.eta, zero, n, c) == f_phy(s.x, s.u, c));
}

TEST_CASE("residual modes") {
  std::mt19937_64 rng(9);
  const NormalizationSpec n = fitted(rng);
  const PhysParams c = default_truth_params();
  CHECK(residual_output_dim(ResidualMode::kNone) == 0);
  CHECK(residual_output_dim(ResidualMode::kDynamics) == 6);
  CHECK(residual_output_dim(ResidualMode::kFullModel) == 12);
  CHECK(residual_output_dim(ResidualMode::kPureNetwork) == 12);
  CHECK_THROWS_AS(BlimpField(c, ResidualMode::kDynamics, default_dims(12), n), Error);

  const MlpParams th = xavier_init(default_dims(12), 3);
  const Eigen::VectorXd params = pack_params(c.eta, th.theta);
  const std::span<const double> ps(params.data(), static_cast<std::size_t>(params.size()));
  const Sample s = random_sample(rng);
  const Eigen::VectorXd r = nn_forward(s.x, s.u, th, n);

  const BlimpField knode(c, ResidualMode::kFullModel, default_dims(12), n);
  const StateVec k = knode.eval(s.x, s.u, ps);
  const StateVec phys = f_phy(s.x, s.u, c);
  CHECK((k.head<12>() - phys.head<12>() - r).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(k.tail<6>() == phys.tail<6>());

  const BlimpField node(c, ResidualMode::kPureNetwork, default_dims(12), n);
  const StateVec d = node.eval(s.x, s.u, ps);
  CHECK((d.head<12>() - r).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(d.segment<3>(sx::kGondola) == s.x.segment<3>(sx::kGondolaVel));

  const BlimpField fp(c, ResidualMode::kNone);
  CHECK(fp.param_count() == static_cast<std::size_t>(kEtaDim));
  CHECK(fp.eval(s.x, s.u, {c.eta.data(), static_cast<std::size_t>(kEtaDim)}) == phys);
}
