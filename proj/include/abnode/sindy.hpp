#pragma once

#include "abnode/dataset.hpp"

#include <span>
#include <string>
#include <vector>

namespace abnode {

/// Primitive regressors evaluated once per sample: 14 base variables
/// (v_b, omega_b, rbar_dot, alpha, beta, V, F_l, F_r) then sin/cos of the
/// three Euler angles.
inline constexpr int kSindyBaseCount = 14;
inline constexpr int kSindyPrimitiveCount = kSindyBaseCount + 6;
using SindyPrimitives = Eigen::Matrix<double, kSindyPrimitiveCount, 1>;

SindyPrimitives sindy_primitives(const StateVec& x, const ControlVec& u);
const std::vector<std::string>& sindy_primitive_names();

/// Candidate term: product of primitives (empty = constant).
struct LibraryTerm {
  std::string name;
  std::vector<int> factors;
};

class CandidateLibrary {
 public:
  /// Constant, the 14 base variables, the 6 trig terms, then pairwise
  /// products of base variables in lexicographic order, truncated to
  /// `max_terms`.
  static CandidateLibrary standard(std::size_t max_terms = 120);
  /// Rebuilds a library from term names such as "1", "u", "u*u", "sin(yaw)".
  static CandidateLibrary from_names(const std::vector<std::string>& names);

  std::size_t size() const { return terms_.size(); }
  const std::vector<LibraryTerm>& terms() const { return terms_; }
  Eigen::VectorXd evaluate(const StateVec& x, const ControlVec& u) const;

 private:
  std::vector<LibraryTerm> terms_;
};

struct SindyOptions {
  double threshold = 0.05;  // on coefficients of max-abs-normalized regressors
  double ridge = 1e-6;
  int max_iterations = 20;
  double max_condition = 1e12;
};

/// Sparse residual model on the six (v_b, omega_b) acceleration rows.
struct SparseModel {
  CandidateLibrary library;
  Eigen::MatrixXd coefficients;  // library size x 6, raw regressor units
  double threshold = 0.0;
  int iterations = 0;

  int active_terms() const;
  Eigen::Matrix<double, 6, 1> evaluate(const StateVec& x, const ControlVec& u) const;
  /// "channel term coefficient" lines, active terms only.
  std::string format_table() const;
};

/// Regression data: per-sample library rows and residual targets.
struct SindyData {
  std::vector<StateVec> states;
  std::vector<ControlVec> controls;
  std::vector<Eigen::Matrix<double, 6, 1>> targets;
};

/// Fourth-order central differences of (v_b, omega_b) on interior samples
/// minus the first-principle prediction at eta0.
SindyData sindy_targets(std::span<const Trajectory* const> train, const PhysParams& eta0);

/// Sequential thresholded least squares with ridge regularization. Columns
/// are scaled to unit max-abs over the data; all-zero columns are left out.
/// Throws EmptyLibrary or IllConditioned.
SparseModel stlsq(const SindyData& data, const CandidateLibrary& library, const SindyOptions& opt);

SparseModel sindy_fit(std::span<const Trajectory* const> train, const PhysParams& eta0,
                      const CandidateLibrary& library, const SindyOptions& opt = {});

}  // namespace abnode
