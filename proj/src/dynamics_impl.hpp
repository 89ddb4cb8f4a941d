#pragma once

// Scalar-generic kernels behind the public dynamics API. Instantiated with
// double for evaluation and with forward-mode AutoDiff scalars for the exact
// local Jacobians used by the discrete adjoint.

#include "abnode/dynamics.hpp"

#include <cmath>

namespace abnode::detail {

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using M3 = Eigen::Matrix<T, 3, 3>;
template <typename T>
using M6 = Eigen::Matrix<T, 6, 6>;
template <typename T>
using V6 = Eigen::Matrix<T, 6, 1>;

inline double value_of(double x) { return x; }
template <typename T>
double value_of(const T& x) {
  return x.value();
}

template <typename T>
M3<T> skew(const V3<T>& a) {
  M3<T> s;
  s << T(0), -a(2), a(1), a(2), T(0), -a(0), -a(1), a(0), T(0);
  return s;
}

template <typename T>
M3<T> rotation_matrix(const V3<T>& e) {
  using std::cos;
  using std::sin;
  const T cr = cos(e(0)), sr = sin(e(0));
  const T cp = cos(e(1)), sp = sin(e(1));
  const T cy = cos(e(2)), sy = sin(e(2));
  M3<T> r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,  //
      sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,   //
      -sp, cp * sr, cp * cr;
  return r;
}

template <typename T>
M3<T> euler_rate_matrix(const V3<T>& e, double margin) {
  using std::cos;
  using std::sin;
  using std::tan;
  if (!(std::abs(value_of(e(1))) < M_PI / 2.0 - margin)) {
    throw Error(ErrorCode::kGimbalLock,
                "pitch " + std::to_string(value_of(e(1))) + " rad at or beyond the kinematic limit");
  }
  const T cr = cos(e(0)), sr = sin(e(0));
  const T cp = cos(e(1)), tp = tan(e(1));
  M3<T> j;
  j << T(1), sr * tp, cr * tp,  //
      T(0), cr, -sr,            //
      T(0), sr / cp, cr / cp;
  return j;
}

template <typename T>
struct Wind {
  T alpha;
  T beta;
  T speed;
};

template <typename T>
Wind<T> wind_angles(const V3<T>& v, double v_min) {
  using std::asin;
  using std::atan2;
  using std::sqrt;
  const double speed_value = std::sqrt(value_of(v.squaredNorm()));
  if (speed_value <= v_min) {
    // Derivative of |v| is undefined at rest; the dynamic pressure uses |v|^2.
    return {T(0), T(0), T(speed_value)};
  }
  const T speed = sqrt(v.squaredNorm());
  return {atan2(v(2), v(0)), asin(v(1) / speed), speed};
}

template <typename T, typename Eta>
V6<T> aero_coefficients(const T& a, const T& b, const Eta& eta) {
  namespace ix = eta_ix;
  const T a2 = a * a, b2 = b * b;
  V6<T> c;
  c(0) = eta(ix::kDrag) + eta(ix::kDrag + 1) * a2 + eta(ix::kDrag + 2) * b2 +
         eta(ix::kDrag + 3) * a2 * a2;
  c(1) = eta(ix::kSide) * b + eta(ix::kSide + 1) * b2 * b;
  c(2) = eta(ix::kLift) + eta(ix::kLift + 1) * a + eta(ix::kLift + 2) * a2 * a;
  c(3) = eta(ix::kRoll) * b + eta(ix::kRoll + 1) * b2 * b;
  c(4) = eta(ix::kPitch) + eta(ix::kPitch + 1) * a + eta(ix::kPitch + 2) * a2 * a;
  c(5) = eta(ix::kYaw) * b + eta(ix::kYaw + 1) * b2 * b;
  return c;
}

template <typename T>
M3<T> velocity_to_body(const T& a, const T& b) {
  using std::cos;
  using std::sin;
  const T ca = cos(a), sa = sin(a), cb = cos(b), sb = sin(b);
  M3<T> ry, rz;
  ry << ca, T(0), -sa, T(0), T(1), T(0), sa, T(0), ca;
  rz << cb, -sb, T(0), sb, cb, T(0), T(0), T(0), T(1);
  return ry * rz;
}

template <typename T, typename Eta>
void aero_wrench(const V3<T>& v, const V3<T>& w, const Eta& eta, const PhysParams& p,
                 V3<T>& force, V3<T>& torque) {
  const Wind<T> wind = wind_angles(v, kDefaultMinSpeed);
  const V6<T> c = aero_coefficients(wind.alpha, wind.beta, eta);
  const T qa = T(0.5 * p.rho * p.area) * v.squaredNorm();
  V3<T> f_vel, m_vel, damping;
  f_vel << -qa * c(0), qa * c(1), -qa * c(2);
  for (int i = 0; i < 3; ++i) {
    m_vel(i) = qa * c(3 + i);
    damping(i) = eta(eta_ix::kDamping + i) * w(i);
  }
  const M3<T> rvb = velocity_to_body(wind.alpha, wind.beta);
  force = rvb * f_vel;
  // body-axis rate damping
  torque = rvb * m_vel + damping;
}

template <typename T>
void coriolis_restoring(const M3<T>& R, const V3<T>& v, const V3<T>& w, const V3<T>& rbar,
                        const V3<T>& rbar_dot, const PhysParams& p, const V3<T>& f_aero,
                        const V3<T>& t_aero, V3<T>& f_tilde, V3<T>& t_tilde) {
  const V3<T> lg = p.r_env.cast<T>() * T(p.m) + rbar * T(p.m_bar);
  // R^T k: inertial down axis in body coordinates.
  const V3<T> down = R.row(2).transpose();
  const V3<T> vxw = v.cross(w);
  const M3<T> rx = skew(rbar);
  const M3<T> j_total = p.inertia.cast<T>() - T(p.m_bar) * rx * rx;
  const T net_weight = T(p.m * p.g + p.m_bar * p.g - p.buoyancy);

  f_tilde = T(p.m + p.m_bar) * vxw + w.cross(lg).cross(w) + net_weight * down + f_aero +
            T(2.0 * p.m_bar) * rbar_dot.cross(w);
  t_tilde = lg.cross(vxw) + (j_total * w).cross(w) + lg.cross(T(p.g) * down) + t_aero +
            T(2.0 * p.m_bar) * rbar.cross(rbar_dot.cross(w));
}

template <typename T>
M6<T> mass_matrix(const V3<T>& rbar, const PhysParams& p) {
  const V3<T> lg = p.r_env.cast<T>() * T(p.m) + rbar * T(p.m_bar);
  const M3<T> lx = skew(lg);
  const M3<T> rx = skew(rbar);
  M6<T> m = M6<T>::Zero();
  m.template topLeftCorner<3, 3>() = M3<T>::Identity() * T(p.m + p.m_bar);
  m.template topRightCorner<3, 3>() = -lx;
  m.template bottomLeftCorner<3, 3>() = lx;
  m.template bottomRightCorner<3, 3>() = p.inertia.cast<T>() - T(p.m_bar) * rx * rx;
  for (int i = 0; i < 6; ++i) m(i, i) += T(p.added_mass(i));
  return m;
}

// Cholesky solve kept scalar-generic; M_t is symmetric positive-definite for
// physical parameters.
template <typename T>
M6<T> spd_inverse(const M6<T>& a) {
  using std::sqrt;
  M6<T> l = M6<T>::Zero();
  for (int j = 0; j < 6; ++j) {
    T d = a(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(value_of(d) > 0.0)) {
      throw Error(ErrorCode::kSingularMass, "mass matrix is not positive-definite");
    }
    l(j, j) = sqrt(d);
    for (int i = j + 1; i < 6; ++i) {
      T s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  M6<T> inv;
  for (int c = 0; c < 6; ++c) {
    V6<T> y;
    for (int i = 0; i < 6; ++i) {
      T s = (i == c) ? T(1) : T(0);
      for (int k = 0; k < i; ++k) s -= l(i, k) * y(k);
      y(i) = s / l(i, i);
    }
    for (int i = 5; i >= 0; --i) {
      T s = y(i);
      for (int k = i + 1; k < 6; ++k) s -= l(k, i) * inv(k, c);
      inv(i, c) = s / l(i, i);
    }
  }
  return inv;
}

// Input map G (9x5): body wrench rows then gondola acceleration rows.
template <typename T>
Eigen::Matrix<T, 9, 5> input_map(const V3<T>& rbar, const PhysParams& p) {
  Eigen::Matrix<T, 9, 5> g = Eigen::Matrix<T, 9, 5>::Zero();
  g(0, 0) = T(1);
  g(0, 1) = T(1);
  g.template block<3, 3>(0, 2) = -M3<T>::Identity();
  const V3<T> x_axis(T(1), T(0), T(0));
  V3<T> p_left = rbar, p_right = rbar;
  p_left(1) -= T(p.d_prop);
  p_right(1) += T(p.d_prop);
  g.template block<3, 1>(3, 0) = p_left.cross(x_axis);
  g.template block<3, 1>(3, 1) = p_right.cross(x_axis);
  g.template block<3, 3>(3, 2) = -skew(rbar);
  g.template block<3, 3>(6, 2) = M3<T>::Identity() * T(1.0 / p.m_bar);
  return g;
}

template <typename T, typename Eta>
Eigen::Matrix<T, kStateDim, 1> f_phy(const Eigen::Matrix<T, kStateDim, 1>& x, const ControlVec& u,
                                     const PhysParams& p, const Eta& eta) {
  const V3<T> e = x.template segment<3>(sx::kEuler);
  const V3<T> v = x.template segment<3>(sx::kVel);
  const V3<T> w = x.template segment<3>(sx::kOmega);
  const V3<T> rbar = x.template segment<3>(sx::kGondola);
  const V3<T> rbar_dot = x.template segment<3>(sx::kGondolaVel);

  const M3<T> R = rotation_matrix(e);
  const M3<T> J = euler_rate_matrix(e, kDefaultPitchMargin);

  V3<T> f_aero, t_aero, f_tilde, t_tilde;
  aero_wrench(v, w, eta, p, f_aero, t_aero);
  coriolis_restoring(R, v, w, rbar, rbar_dot, p, f_aero, t_aero, f_tilde, t_tilde);

  const M6<T> m_inv = spd_inverse(mass_matrix(rbar, p));
  const Eigen::Matrix<T, 9, 5> g = input_map(rbar, p);
  const Eigen::Matrix<T, 5, 1> uu = u.cast<T>();

  V6<T> rhs;
  rhs << f_tilde, t_tilde;
  rhs += g.template topRows<6>() * uu;

  Eigen::Matrix<T, kStateDim, 1> dx;
  dx.template segment<3>(sx::kPos) = R * v;
  dx.template segment<3>(sx::kEuler) = J * w;
  dx.template segment<6>(sx::kVel) = m_inv * rhs;
  dx.template segment<3>(sx::kGondola) = rbar_dot;
  dx.template segment<3>(sx::kGondolaVel) = g.template bottomRows<3>() * uu;
  return dx;
}

}  // namespace abnode::detail
