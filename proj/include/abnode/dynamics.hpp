#pragma once

#include "abnode/core.hpp"

#include <string>

namespace abnode {

// Layout of the uncertain physical parameter vector (aerodynamic polynomial
// coefficients followed by the three rotational damping coefficients).
//   drag  C_F1 = c0 + c1 a^2 + c2 b^2 + c3 a^4
//   side  C_F2 = c0 b + c1 b^3
//   lift  C_F3 = c0 + c1 a + c2 a^3
//   roll  C_M1 = c0 b + c1 b^3
//   pitch C_M2 = c0 + c1 a + c2 a^3
//   yaw   C_M3 = c0 b + c1 b^3
inline constexpr int kEtaDim = 19;
using EtaVec = Eigen::Matrix<double, kEtaDim, 1>;

namespace eta_ix {
inline constexpr int kDrag = 0;
inline constexpr int kSide = 4;
inline constexpr int kLift = 6;
inline constexpr int kRoll = 9;
inline constexpr int kPitch = 11;
inline constexpr int kYaw = 14;
inline constexpr int kDamping = 16;
}  // namespace eta_ix

const char* eta_name(int index);

struct PhysParams {
  double m = 0.0;         // envelope-side mass, kg
  double m_bar = 0.0;     // gondola mass, kg
  double buoyancy = 0.0;  // N
  Mat3 inertia = Mat3::Identity();
  Vec3 r_env = Vec3::Zero();  // envelope-side centroid, body frame, m
  double rho = 1.225;
  double area = 0.0;  // reference area, m^2
  double g = 9.80665;
  EtaVec eta = EtaVec::Zero();
  double d_prop = 0.0;  // lateral propeller offset, m
  Eigen::Matrix<double, 6, 1> added_mass = Eigen::Matrix<double, 6, 1>::Zero();

  /// Throws Error(kConfig) naming the offending field.
  void validate() const;
};

struct WindState {
  double alpha = 0.0;
  double beta = 0.0;
  double speed = 0.0;
};

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

/// C_F1..C_F3 followed by C_M1..C_M3.
using AeroCoefficients = Eigen::Matrix<double, 6, 1>;

struct CoriolisRestoring {
  Vec3 f_tilde = Vec3::Zero();
  Vec3 t_tilde = Vec3::Zero();
};

struct GeneralizedMatrices {
  Eigen::Matrix<double, 9, 9> A;
  Eigen::Matrix<double, 9, 5> B;
  Eigen::Matrix<double, 6, 6> mass;  // coupled 6x6 mass matrix M_t
};

inline constexpr double kDefaultPitchMargin = 1e-3;
inline constexpr double kDefaultMinSpeed = 1e-6;

/// Body-to-inertial rotation for roll-pitch-yaw (ZYX) Euler angles.
Mat3 rotation_matrix(const Vec3& e);

/// Maps body angular velocity to Euler angle rates. Throws GimbalLock when
/// |pitch| >= pi/2 - margin.
Mat3 euler_rate_matrix(const Vec3& e, double margin = kDefaultPitchMargin);

WindState wind_angles(const Vec3& v_b, double v_min = kDefaultMinSpeed);

AeroCoefficients aero_coefficients(const WindState& w, const EtaVec& eta);

/// Velocity-frame to body-frame rotation; maps (V, 0, 0) onto v_b.
Mat3 velocity_to_body(double alpha, double beta);

Wrench aero_wrench(const Vec3& v_b, const Vec3& omega_b, const PhysParams& params);

CoriolisRestoring coriolis_restoring(const RigidState& x, const PhysParams& params,
                                     const Wrench& aero);

/// A = blockdiag(M_t^-1, 0_3); B = blockdiag(M_t^-1, I_3) * G where G maps
/// the five inputs onto the body wrench and the gondola acceleration.
/// Throws SingularMass when cond(M_t) > 1e12 or M_t is not positive-definite.
GeneralizedMatrices generalized_matrices(const RigidState& x, const PhysParams& params);

/// First-principle vector field.
StateVec f_phy(const StateVec& x, const ControlVec& u, const PhysParams& params);

/// Same field evaluated with an explicit parameter vector replacing params.eta.
StateVec f_phy(const StateVec& x, const ControlVec& u, const PhysParams& params,
               const EtaVec& eta);

struct PhysJacobian {
  StateVec value;
  Eigen::Matrix<double, kStateDim, kStateDim> dx;
  Eigen::Matrix<double, kStateDim, kEtaDim> deta;
};

/// Value and exact partial derivatives of f_phy w.r.t. state and eta.
PhysJacobian f_phy_jacobian(const StateVec& x, const ControlVec& u, const PhysParams& params,
                            const EtaVec& eta);

/// Value and derivative w.r.t. state only.
void f_phy_state_jacobian(const StateVec& x, const ControlVec& u, const PhysParams& params,
                          const EtaVec& eta, StateVec& value,
                          Eigen::Matrix<double, kStateDim, kStateDim>& dx);

// Parameter files: flat "key = value" lines, '#' comments.
PhysParams load_phys_params(const std::string& path);
/// validate = false skips PhysParams::validate (trained eta may leave the
/// admissible set).
PhysParams parse_phys_params(const std::string& text, const std::string& origin = "<string>",
                             bool validate = true);
std::string format_phys_params(const PhysParams& params);
void save_phys_params(const std::string& path, const PhysParams& params);

/// Synthetic RGBlimp-scale blimp used as ground truth by the data generator.
PhysParams default_truth_params();

}  // namespace abnode
