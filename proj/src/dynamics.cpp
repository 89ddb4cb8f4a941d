#include "abnode/dynamics.hpp"

#include "abnode/kvfile.hpp"
#include "dynamics_impl.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <fstream>
#include <sstream>

namespace abnode {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kGimbalLock: return "GimbalLock";
    case ErrorCode::kSingularMass: return "SingularMass";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyData: return "EmptyData";
    case ErrorCode::kIllConditioned: return "IllConditioned";
    case ErrorCode::kEmptyLibrary: return "EmptyLibrary";
    case ErrorCode::kWrongTrialCount: return "WrongTrialCount";
    case ErrorCode::kUnstable: return "Unstable";
    case ErrorCode::kGridTooSmall: return "GridTooSmall";
    case ErrorCode::kSequenceTooShort: return "SequenceTooShort";
    case ErrorCode::kZeroDenominator: return "ZeroDenominator";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

StateVec RigidState::to_vector() const {
  StateVec x;
  x << p, e, v_b, omega_b, r_bar, r_bar_dot;
  return x;
}

RigidState RigidState::from_vector(const StateVec& x) {
  RigidState s;
  s.p = x.segment<3>(sx::kPos);
  s.e = x.segment<3>(sx::kEuler);
  s.v_b = x.segment<3>(sx::kVel);
  s.omega_b = x.segment<3>(sx::kOmega);
  s.r_bar = x.segment<3>(sx::kGondola);
  s.r_bar_dot = x.segment<3>(sx::kGondolaVel);
  return s;
}

ControlVec ControlInput::to_vector() const {
  ControlVec u;
  u << f_left, f_right, f_bar;
  return u;
}

ControlInput ControlInput::from_vector(const ControlVec& u) {
  ControlInput c;
  c.f_left = u(ux::kLeft);
  c.f_right = u(ux::kRight);
  c.f_bar = u.segment<3>(ux::kGondolaForce);
  return c;
}

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.allFinite(); }

namespace {

constexpr std::array<const char*, kEtaDim> kEtaNames = {
    "drag_c0",  "drag_a2",  "drag_b2",  "drag_a4",    "side_b1",    "side_b3",   "lift_c0",
    "lift_a1",  "lift_a3",  "roll_b1",  "roll_b3",    "pitch_c0",   "pitch_a1",  "pitch_a3",
    "yaw_b1",   "yaw_b3",   "damping_k1", "damping_k2", "damping_k3"};

// Scalar keys of the parameter file, in output order.
struct ScalarField {
  const char* key;
  const char* unit;
  bool required;
};

constexpr std::array<ScalarField, 16> kScalarFields = {{
    {"m", "kg, envelope-side mass", true},
    {"m_bar", "kg, gondola mass", true},
    {"buoyancy", "N", true},
    {"inertia_xx", "kg m^2", true},
    {"inertia_yy", "kg m^2", true},
    {"inertia_zz", "kg m^2", true},
    {"inertia_xy", "kg m^2", false},
    {"inertia_xz", "kg m^2", false},
    {"inertia_yz", "kg m^2", false},
    {"r_env_x", "m, envelope-side centroid (body frame)", false},
    {"r_env_y", "m", false},
    {"r_env_z", "m", false},
    {"rho", "kg/m^3, air density", false},
    {"area", "m^2, aerodynamic reference area", true},
    {"g", "m/s^2", false},
    {"d_prop", "m, lateral propeller offset from gondola centroid", true},
}};

double* scalar_slot(PhysParams& p, const std::string& key) {
  if (key == "m") return &p.m;
  if (key == "m_bar") return &p.m_bar;
  if (key == "buoyancy") return &p.buoyancy;
  if (key == "inertia_xx") return &p.inertia(0, 0);
  if (key == "inertia_yy") return &p.inertia(1, 1);
  if (key == "inertia_zz") return &p.inertia(2, 2);
  if (key == "inertia_xy") return &p.inertia(0, 1);
  if (key == "inertia_xz") return &p.inertia(0, 2);
  if (key == "inertia_yz") return &p.inertia(1, 2);
  if (key == "r_env_x") return &p.r_env(0);
  if (key == "r_env_y") return &p.r_env(1);
  if (key == "r_env_z") return &p.r_env(2);
  if (key == "rho") return &p.rho;
  if (key == "area") return &p.area;
  if (key == "g") return &p.g;
  if (key == "d_prop") return &p.d_prop;
  return nullptr;
}

}  // namespace

const char* eta_name(int index) {
  if (index < 0 || index >= kEtaDim) return "?";
  return kEtaNames[static_cast<std::size_t>(index)];
}

void PhysParams::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw Error(ErrorCode::kConfig, "parameter '" + key + "' " + why);
  };
  auto finite = [&](const std::string& key, double v) {
    if (!std::isfinite(v)) fail(key, "is not finite");
  };
  finite("m", m);
  finite("m_bar", m_bar);
  finite("buoyancy", buoyancy);
  finite("rho", rho);
  finite("area", area);
  finite("g", g);
  finite("d_prop", d_prop);
  if (!(m > 0.0)) fail("m", "must be positive");
  if (!(m_bar > 0.0)) fail("m_bar", "must be positive");
  if (!(rho > 0.0)) fail("rho", "must be positive");
  if (!(area > 0.0)) fail("area", "must be positive");
  if (!inertia.allFinite()) fail("inertia", "has non-finite entries");
  if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * inertia.cwiseAbs().maxCoeff()) {
    fail("inertia", "must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(inertia);
  if (!(es.eigenvalues().minCoeff() > 0.0)) fail("inertia", "must be positive-definite");
  if (!r_env.allFinite()) fail("r_env", "has non-finite entries");
  for (int i = 0; i < kEtaDim; ++i) finite(eta_name(i), eta(i));
  for (int i = 0; i < 3; ++i) {
    if (eta(eta_ix::kDamping + i) > 0.0) {
      fail(eta_name(eta_ix::kDamping + i), "must be <= 0 (dissipative damping)");
    }
  }
  for (int i = 0; i < 6; ++i) {
    finite("added_mass_" + std::to_string(i + 1), added_mass(i));
    if (added_mass(i) < 0.0) fail("added_mass_" + std::to_string(i + 1), "must be >= 0");
  }
}

Mat3 rotation_matrix(const Vec3& e) { return detail::rotation_matrix<double>(e); }

Mat3 euler_rate_matrix(const Vec3& e, double margin) {
  return detail::euler_rate_matrix<double>(e, margin);
}

WindState wind_angles(const Vec3& v_b, double v_min) {
  const auto w = detail::wind_angles<double>(v_b, v_min);
  return {w.alpha, w.beta, w.speed};
}

AeroCoefficients aero_coefficients(const WindState& w, const EtaVec& eta) {
  return detail::aero_coefficients<double>(w.alpha, w.beta, eta);
}

Mat3 velocity_to_body(double alpha, double beta) {
  return detail::velocity_to_body<double>(alpha, beta);
}

Wrench aero_wrench(const Vec3& v_b, const Vec3& omega_b, const PhysParams& params) {
  Wrench w;
  detail::aero_wrench<double>(v_b, omega_b, params.eta, params, w.force, w.torque);
  return w;
}

CoriolisRestoring coriolis_restoring(const RigidState& x, const PhysParams& params,
                                     const Wrench& aero) {
  CoriolisRestoring out;
  detail::coriolis_restoring<double>(rotation_matrix(x.e), x.v_b, x.omega_b, x.r_bar, x.r_bar_dot,
                                     params, aero.force, aero.torque, out.f_tilde, out.t_tilde);
  return out;
}

GeneralizedMatrices generalized_matrices(const RigidState& x, const PhysParams& params) {
  GeneralizedMatrices gm;
  gm.mass = detail::mass_matrix<double>(x.r_bar, params);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(gm.mass);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw Error(ErrorCode::kSingularMass,
                "mass matrix condition number " + std::to_string(hi / lo) + " exceeds 1e12");
  }
  const Eigen::Matrix<double, 6, 6> m_inv = detail::spd_inverse<double>(gm.mass);
  gm.A.setZero();
  gm.A.topLeftCorner<6, 6>() = m_inv;
  const Eigen::Matrix<double, 9, 5> g = detail::input_map<double>(x.r_bar, params);
  gm.B.topRows<6>() = m_inv * g.topRows<6>();
  gm.B.bottomRows<3>() = g.bottomRows<3>();
  return gm;
}

StateVec f_phy(const StateVec& x, const ControlVec& u, const PhysParams& params) {
  return detail::f_phy<double>(x, u, params, params.eta);
}

StateVec f_phy(const StateVec& x, const ControlVec& u, const PhysParams& params,
               const EtaVec& eta) {
  return detail::f_phy<double>(x, u, params, eta);
}

PhysJacobian f_phy_jacobian(const StateVec& x, const ControlVec& u, const PhysParams& params,
                            const EtaVec& eta) {
  constexpr int kN = kStateDim + kEtaDim;
  using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, kN, 1>>;
  Eigen::Matrix<Ad, kStateDim, 1> xa;
  Eigen::Matrix<Ad, kEtaDim, 1> ea;
  for (int i = 0; i < kStateDim; ++i) xa(i) = Ad(x(i), kN, i);
  for (int i = 0; i < kEtaDim; ++i) ea(i) = Ad(eta(i), kN, kStateDim + i);
  const auto fa = detail::f_phy<Ad>(xa, u, params, ea);
  PhysJacobian out;
  for (int r = 0; r < kStateDim; ++r) {
    out.value(r) = fa(r).value();
    out.dx.row(r) = fa(r).derivatives().head<kStateDim>().transpose();
    out.deta.row(r) = fa(r).derivatives().tail<kEtaDim>().transpose();
  }
  return out;
}

void f_phy_state_jacobian(const StateVec& x, const ControlVec& u, const PhysParams& params,
                          const EtaVec& eta, StateVec& value,
                          Eigen::Matrix<double, kStateDim, kStateDim>& dx) {
  using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, kStateDim, 1>>;
  Eigen::Matrix<Ad, kStateDim, 1> xa;
  for (int i = 0; i < kStateDim; ++i) xa(i) = Ad(x(i), kStateDim, i);
  const auto fa = detail::f_phy<Ad>(xa, u, params, eta);
  for (int r = 0; r < kStateDim; ++r) {
    value(r) = fa(r).value();
    dx.row(r) = fa(r).derivatives().transpose();
  }
}

PhysParams parse_phys_params(const std::string& text, const std::string& origin, bool validate) {
  const KvDocument doc = KvDocument::parse(text, origin);
  std::vector<std::string> known;
  for (const auto& f : kScalarFields) known.emplace_back(f.key);
  for (int i = 0; i < kEtaDim; ++i) known.emplace_back(eta_name(i));
  for (int i = 1; i <= 6; ++i) known.push_back("added_mass_" + std::to_string(i));
  if (auto unknown = doc.unknown_keys(known); !unknown.empty()) {
    throw Error(ErrorCode::kConfig, origin + ": unknown parameter '" + unknown.front() + "'");
  }

  PhysParams p;
  p.inertia.setZero();
  for (const auto& f : kScalarFields) {
    double* slot = scalar_slot(p, f.key);
    *slot = f.required ? doc.get_double(f.key) : doc.get_double(f.key, *slot);
  }
  p.inertia(1, 0) = p.inertia(0, 1);
  p.inertia(2, 0) = p.inertia(0, 2);
  p.inertia(2, 1) = p.inertia(1, 2);
  for (int i = 0; i < kEtaDim; ++i) p.eta(i) = doc.get_double(eta_name(i));
  for (int i = 0; i < 6; ++i) p.added_mass(i) = doc.get_double("added_mass_" + std::to_string(i + 1), 0.0);
  if (validate) p.validate();
  return p;
}

PhysParams load_phys_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open parameter file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_phys_params(ss.str(), path);
}

std::string format_phys_params(const PhysParams& p) {
  std::ostringstream out;
  out << "# blimp physical parameters (SI units)\n";
  PhysParams copy = p;
  for (const auto& f : kScalarFields) {
    out << f.key << " = " << format_double(*scalar_slot(copy, f.key));
    if (*f.unit) out << "  # " << f.unit;
    out << "\n";
  }
  out << "# aerodynamic polynomial coefficients (dimensionless)\n";
  for (int i = 0; i < eta_ix::kDamping; ++i) out << eta_name(i) << " = " << format_double(p.eta(i)) << "\n";
  out << "# rotational damping, N m s/rad (must be <= 0)\n";
  for (int i = eta_ix::kDamping; i < kEtaDim; ++i) {
    out << eta_name(i) << " = " << format_double(p.eta(i)) << "\n";
  }
  out << "# diagonal added mass (kg) and added inertia (kg m^2)\n";
  for (int i = 0; i < 6; ++i) {
    out << "added_mass_" << i + 1 << " = " << format_double(p.added_mass(i)) << "\n";
  }
  return out.str();
}

void save_phys_params(const std::string& path, const PhysParams& params) {
  write_file_atomic(path, format_phys_params(params));
}

PhysParams default_truth_params() {
  PhysParams p;
  p.m = 0.17;
  p.m_bar = 0.05;
  p.g = 9.80665;
  // Slightly heavier than neutral (about 0.3 gf); lift makes up the rest.
  p.buoyancy = (p.m + p.m_bar) * p.g - 0.003;
  p.inertia = Vec3(0.012, 0.018, 0.016).asDiagonal();
  p.r_env = Vec3(0.0, 0.0, 0.02);
  p.rho = 1.225;
  p.area = 0.2;
  p.d_prop = 0.08;
  EtaVec& e = p.eta;
  e << 0.6, 1.2, 0.8, 0.5,   // drag
      -0.8, -0.3,            // side
      0.05, 2.0, -1.0,       // lift
      -0.05, -0.02,          // roll
      0.01, -0.08, 0.05,     // pitch
      0.06, 0.02,            // yaw
      -0.004, -0.006, -0.005;  // damping
  return p;
}

}  // namespace abnode
