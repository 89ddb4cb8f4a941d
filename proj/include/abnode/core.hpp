#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace abnode {

inline constexpr const char* kVersion = "1.0.0";

inline constexpr int kStateDim = 18;
inline constexpr int kControlDim = 5;
inline constexpr int kNetInputDim = kStateDim + kControlDim;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using ControlVec = Eigen::Matrix<double, kControlDim, 1>;

// Offsets into the 18-dim state vector.
namespace sx {
inline constexpr int kPos = 0;
inline constexpr int kEuler = 3;
inline constexpr int kVel = 6;
inline constexpr int kOmega = 9;
inline constexpr int kGondola = 12;
inline constexpr int kGondolaVel = 15;
}  // namespace sx

// Offsets into the 5-dim control vector.
namespace ux {
inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;
inline constexpr int kGondolaForce = 2;
}  // namespace ux

inline constexpr double kGramForce = 9.80665e-3;  // N per gf

enum class ErrorCode : int {
  kOk = 0,
  kGimbalLock,
  kSingularMass,
  kNonFinite,
  kDimensionMismatch,
  kLengthMismatch,
  kEmptyData,
  kIllConditioned,
  kEmptyLibrary,
  kWrongTrialCount,
  kUnstable,
  kGridTooSmall,
  kSequenceTooShort,
  kZeroDenominator,
  kConfig,
  kMissingArtifact,
  kIo,
  kInvalidArgument,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Named view of the 18-dim state.
struct RigidState {
  Vec3 p = Vec3::Zero();
  Vec3 e = Vec3::Zero();
  Vec3 v_b = Vec3::Zero();
  Vec3 omega_b = Vec3::Zero();
  Vec3 r_bar = Vec3::Zero();
  Vec3 r_bar_dot = Vec3::Zero();

  StateVec to_vector() const;
  static RigidState from_vector(const StateVec& x);
};

/// Named view of the 5-dim control. Thrusts in newtons.
struct ControlInput {
  double f_left = 0.0;
  double f_right = 0.0;
  Vec3 f_bar = Vec3::Zero();

  ControlVec to_vector() const;
  static ControlInput from_vector(const ControlVec& u);
};

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m);

}  // namespace abnode
