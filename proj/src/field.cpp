#include "abnode/field.hpp"

namespace abnode {

int residual_output_dim(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::kNone: return 0;
    case ResidualMode::kDynamics: return 6;
    case ResidualMode::kFullModel:
    case ResidualMode::kPureNetwork: return 12;
  }
  return 0;
}

BlimpField::BlimpField(PhysParams constants, ResidualMode mode, std::vector<int> net_dims,
                       NormalizationSpec norm)
    : constants_(std::move(constants)), mode_(mode), dims_(std::move(net_dims)), norm_(norm) {
  if (mode_ == ResidualMode::kNone) {
    dims_.clear();
    return;
  }
  if (dims_.size() < 2 || dims_.front() != kNetInputDim || dims_.back() != residual_output_dim(mode_)) {
    throw Error(ErrorCode::kDimensionMismatch, "network layout does not match the residual mode");
  }
  theta_count_ = MlpParams::count(dims_);
}

std::size_t BlimpField::param_count() const { return kEtaDim + theta_count_; }

int BlimpField::residual_first_row() const {
  return mode_ == ResidualMode::kDynamics ? sx::kVel : sx::kPos;
}

StateVec BlimpField::eval(const StateVec& x, const ControlVec& u,
                          std::span<const double> params) const {
  if (params.size() != param_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has wrong length");
  }
  const Eigen::Map<const EtaVec> eta(params.data());
  StateVec out;
  if (mode_ == ResidualMode::kPureNetwork) {
    out.setZero();
    out.segment<3>(sx::kGondola) = x.segment<3>(sx::kGondolaVel);
    out.segment<3>(sx::kGondolaVel) = u.segment<3>(ux::kGondolaForce) / constants_.m_bar;
  } else {
    out = f_phy(x, u, constants_, eta);
  }
  if (mode_ != ResidualMode::kNone) {
    MlpEvaluator net(dims_);
    const Eigen::VectorXd z = norm_.apply(x, u);
    const Eigen::VectorXd& r = net.forward(params.subspan(kEtaDim), z);
    out.segment(residual_first_row(), r.size()) += r;
  }
  if (fixed_) out.segment<6>(sx::kVel) += fixed_(x, u);
  return out;
}

void BlimpField::vjp(const StateVec& x, const ControlVec& u, std::span<const double> params,
                     const StateVec& adj, StateVec& grad_x, std::span<double> grad_p,
                     GradRequest want) const {
  if (fixed_) {
    throw Error(ErrorCode::kInvalidArgument, "fields with a fixed residual term are not differentiable");
  }
  if (params.size() != param_count() || (!grad_p.empty() && grad_p.size() != param_count())) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has wrong length");
  }
  const Eigen::Map<const EtaVec> eta(params.data());
  if (mode_ == ResidualMode::kPureNetwork) {
    grad_x.segment<3>(sx::kGondolaVel) += adj.segment<3>(sx::kGondola);
  } else if (want.eta && !grad_p.empty()) {
    const PhysJacobian jac = f_phy_jacobian(x, u, constants_, eta);
    grad_x.noalias() += jac.dx.transpose() * adj;
    Eigen::Map<EtaVec> g_eta(grad_p.data());
    g_eta.noalias() += jac.deta.transpose() * adj;
  } else {
    StateVec value;
    Eigen::Matrix<double, kStateDim, kStateDim> dx;
    f_phy_state_jacobian(x, u, constants_, eta, value, dx);
    grad_x.noalias() += dx.transpose() * adj;
  }
  if (mode_ != ResidualMode::kNone) {
    MlpEvaluator net(dims_);
    const Eigen::VectorXd z = norm_.apply(x, u);
    const int rows = residual_output_dim(mode_);
    net.forward(params.subspan(kEtaDim), z);
    const Eigen::VectorXd out_adj = adj.segment(residual_first_row(), rows);
    std::span<double> g_theta =
        (want.theta && !grad_p.empty()) ? grad_p.subspan(kEtaDim) : std::span<double>{};
    const Eigen::VectorXd dz = net.backward(params.subspan(kEtaDim), out_adj, g_theta);
    const NetInput scale = norm_.scale();
    grad_x += dz.head<kStateDim>().cwiseProduct(scale.head<kStateDim>());
  }
}

Eigen::VectorXd pack_params(const EtaVec& eta, const Eigen::VectorXd& theta) {
  Eigen::VectorXd p(kEtaDim + theta.size());
  p << eta, theta;
  return p;
}

StateVec hybrid_field(const StateVec& x, const ControlVec& u, const EtaVec& eta,
                      const MlpParams& theta, const NormalizationSpec& norm,
                      const PhysParams& constants) {
  BlimpField field(constants, ResidualMode::kDynamics, theta.dims, norm);
  const Eigen::VectorXd p = pack_params(eta, theta.theta);
  return field.eval(x, u, {p.data(), static_cast<std::size_t>(p.size())});
}

}  // namespace abnode
