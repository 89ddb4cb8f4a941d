#pragma once

#include "abnode/dynamics.hpp"
#include "abnode/mlp.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>

namespace abnode {

struct GradRequest {
  bool eta = true;
  bool theta = true;
};

/// Parameterized vector field xdot = f(x, u; params) over the 18-dim state.
class VectorField {
 public:
  virtual ~VectorField() = default;

  virtual std::size_t param_count() const = 0;
  virtual StateVec eval(const StateVec& x, const ControlVec& u,
                        std::span<const double> params) const = 0;
  /// Vector-Jacobian product: grad_x += (df/dx)^T adj, grad_p += (df/dp)^T adj
  /// for the parameter blocks selected by `want`.
  virtual void vjp(const StateVec& x, const ControlVec& u, std::span<const double> params,
                   const StateVec& adj, StateVec& grad_x, std::span<double> grad_p,
                   GradRequest want) const = 0;
};

/// Where the network output enters the state derivative.
enum class ResidualMode {
  kNone,        // first-principle only
  kDynamics,    // 6 outputs on (v_b, omega_b) rows: BNODE / ABNODE
  kFullModel,   // 12 outputs on (p, e, v_b, omega_b) rows: KNODE
  kPureNetwork  // 12 outputs replace those rows entirely: NODE
};

int residual_output_dim(ResidualMode mode);

/// Fixed (non-trainable) additive term on the (v_b, omega_b) rows.
using DynamicsResidual = std::function<Eigen::Matrix<double, 6, 1>(const StateVec&, const ControlVec&)>;

/// Blimp field family behind every model in the comparison. Parameters are
/// laid out as [eta (19) | theta]; fields without a network have only eta.
class BlimpField final : public VectorField {
 public:
  BlimpField(PhysParams constants, ResidualMode mode, std::vector<int> net_dims = {},
             NormalizationSpec norm = {});

  void set_fixed_residual(DynamicsResidual residual) { fixed_ = std::move(residual); }

  std::size_t param_count() const override;
  std::size_t theta_count() const { return theta_count_; }
  ResidualMode mode() const { return mode_; }
  const PhysParams& constants() const { return constants_; }
  const NormalizationSpec& normalization() const { return norm_; }
  const std::vector<int>& net_dims() const { return dims_; }

  StateVec eval(const StateVec& x, const ControlVec& u,
                std::span<const double> params) const override;
  void vjp(const StateVec& x, const ControlVec& u, std::span<const double> params,
           const StateVec& adj, StateVec& grad_x, std::span<double> grad_p,
           GradRequest want) const override;

  /// Residual rows [first, first + count) of the network output.
  int residual_first_row() const;

 private:
  PhysParams constants_;
  ResidualMode mode_;
  std::vector<int> dims_;
  NormalizationSpec norm_;
  std::size_t theta_count_ = 0;
  DynamicsResidual fixed_;
};

/// Flat parameter vector [eta | theta].
Eigen::VectorXd pack_params(const EtaVec& eta, const Eigen::VectorXd& theta);

/// eval() of the hybrid BNODE/ABNODE field.
StateVec hybrid_field(const StateVec& x, const ControlVec& u, const EtaVec& eta,
                      const MlpParams& theta, const NormalizationSpec& norm,
                      const PhysParams& constants);

}  // namespace abnode
