#include "abnode/sindy.hpp"

#include "abnode/kvfile.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace abnode {

const std::vector<std::string>& sindy_primitive_names() {
  static const std::vector<std::string> names = {
      "u",     "v",     "w",   "p",   "q",   "r",   "rbd_x",     "rbd_y",     "rbd_z",      "alpha",
      "beta",  "V",     "F_l", "F_r", "sin(roll)", "cos(roll)", "sin(pitch)", "cos(pitch)", "sin(yaw)",
      "cos(yaw)"};
  return names;
}

SindyPrimitives sindy_primitives(const StateVec& x, const ControlVec& u) {
  SindyPrimitives z;
  const WindState w = wind_angles(x.segment<3>(sx::kVel));
  z.segment<3>(0) = x.segment<3>(sx::kVel);
  z.segment<3>(3) = x.segment<3>(sx::kOmega);
  z.segment<3>(6) = x.segment<3>(sx::kGondolaVel);
  z[9] = w.alpha;
  z[10] = w.beta;
  z[11] = w.speed;
  z[12] = u[ux::kLeft];
  z[13] = u[ux::kRight];
  for (int k = 0; k < 3; ++k) {
    z[14 + 2 * k] = std::sin(x[sx::kEuler + k]);
    z[15 + 2 * k] = std::cos(x[sx::kEuler + k]);
  }
  return z;
}

CandidateLibrary CandidateLibrary::standard(std::size_t max_terms) {
  const auto& names = sindy_primitive_names();
  CandidateLibrary lib;
  lib.terms_.push_back({"1", {}});
  for (int i = 0; i < kSindyPrimitiveCount; ++i) lib.terms_.push_back({names[i], {i}});
  for (int i = 0; i < kSindyBaseCount; ++i) {
    for (int j = i; j < kSindyBaseCount; ++j) lib.terms_.push_back({names[i] + "*" + names[j], {i, j}});
  }
  if (lib.terms_.size() > max_terms) lib.terms_.resize(max_terms);
  return lib;
}

CandidateLibrary CandidateLibrary::from_names(const std::vector<std::string>& names) {
  const auto& prim = sindy_primitive_names();
  CandidateLibrary lib;
  for (const auto& name : names) {
    LibraryTerm t{name, {}};
    if (name != "1") {
      std::stringstream ss(name);
      std::string part;
      while (std::getline(ss, part, '*')) {
        auto it = std::find(prim.begin(), prim.end(), part);
        if (it == prim.end()) throw Error(ErrorCode::kConfig, "unknown library term '" + name + "'");
        t.factors.push_back(static_cast<int>(it - prim.begin()));
      }
    }
    for (const auto& other : lib.terms_) {
      if (other.name == name) throw Error(ErrorCode::kConfig, "duplicate library term '" + name + "'");
    }
    lib.terms_.push_back(t);
  }
  return lib;
}

Eigen::VectorXd CandidateLibrary::evaluate(const StateVec& x, const ControlVec& u) const {
  const SindyPrimitives z = sindy_primitives(x, u);
  Eigen::VectorXd out(static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    double v = 1.0;
    for (int f : terms_[k].factors) v *= z[f];
    out[static_cast<Eigen::Index>(k)] = v;
  }
  return out;
}

int SparseModel::active_terms() const {
  return static_cast<int>((coefficients.array() != 0.0).count());
}

Eigen::Matrix<double, 6, 1> SparseModel::evaluate(const StateVec& x, const ControlVec& u) const {
  return coefficients.transpose() * library.evaluate(x, u);
}

std::string SparseModel::format_table() const {
  static const char* channels[6] = {"du", "dv", "dw", "dp", "dq", "dr"};
  std::ostringstream os;
  os << "# channel term coefficient\n";
  for (int c = 0; c < 6; ++c) {
    for (Eigen::Index k = 0; k < coefficients.rows(); ++k) {
      if (coefficients(k, c) != 0.0) {
        os << channels[c] << " " << library.terms()[static_cast<std::size_t>(k)].name << " "
           << format_double(coefficients(k, c)) << "\n";
      }
    }
  }
  return os.str();
}

SindyData sindy_targets(std::span<const Trajectory* const> train, const PhysParams& eta0) {
  SindyData d;
  for (const Trajectory* t : train) {
    const std::size_t n = t->size();
    if (n < 5) continue;
    const double dt = t->dt;
    for (std::size_t i = 2; i + 2 < n; ++i) {
      const auto& xs = t->states;
      const Eigen::Matrix<double, 6, 1> deriv =
          (-xs[i + 2].segment<6>(sx::kVel) + 8.0 * xs[i + 1].segment<6>(sx::kVel) -
           8.0 * xs[i - 1].segment<6>(sx::kVel) + xs[i - 2].segment<6>(sx::kVel)) /
          (12.0 * dt);
      const StateVec f = f_phy(xs[i], t->controls[i], eta0);
      d.states.push_back(xs[i]);
      d.controls.push_back(t->controls[i]);
      d.targets.push_back(deriv - f.segment<6>(sx::kVel));
    }
  }
  return d;
}

SparseModel stlsq(const SindyData& data, const CandidateLibrary& library, const SindyOptions& opt) {
  if (library.size() == 0) throw Error(ErrorCode::kEmptyLibrary, "candidate library is empty");
  const Eigen::Index n = static_cast<Eigen::Index>(data.targets.size());
  if (n == 0) throw Error(ErrorCode::kEmptyData, "no regression samples");
  const Eigen::Index m = static_cast<Eigen::Index>(library.size());

  Eigen::MatrixXd theta(n, m);
  Eigen::MatrixXd y(n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    theta.row(i) = library.evaluate(data.states[i], data.controls[i]).transpose();
    y.row(i) = data.targets[i].transpose();
  }

  // Columns scaled to unit max-abs; all-zero columns are dropped from the fit.
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(m);
  std::vector<Eigen::Index> cols;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double peak = theta.col(k).cwiseAbs().maxCoeff();
    if (peak > 0.0) {
      scale[k] = peak;
      cols.push_back(k);
    }
  }
  const Eigen::Index p = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd a(n, p);
  for (Eigen::Index j = 0; j < p; ++j) a.col(j) = theta.col(cols[j]) / scale[cols[j]];
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd gram = (a.transpose() * a) * inv_n + opt.ridge * Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd rhs = (a.transpose() * y) * inv_n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(cond <= opt.max_condition)) {
    std::ostringstream os;
    os << "regression matrix condition number " << cond << " exceeds " << opt.max_condition;
    throw Error(ErrorCode::kIllConditioned, os.str());
  }

  auto solve_active = [&](const std::vector<Eigen::Index>& act, int ch) {
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(p);
    if (act.empty()) return xi;
    const Eigen::Index q = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd g(q, q);
    Eigen::VectorXd b(q);
    for (Eigen::Index r = 0; r < q; ++r) {
      b[r] = rhs(act[r], ch);
      for (Eigen::Index c = 0; c < q; ++c) g(r, c) = gram(act[r], act[c]);
    }
    const Eigen::VectorXd sol = g.ldlt().solve(b);
    for (Eigen::Index r = 0; r < q; ++r) xi[act[r]] = sol[r];
    return xi;
  };

  SparseModel model;
  model.library = library;
  model.threshold = opt.threshold;
  model.coefficients = Eigen::MatrixXd::Zero(m, 6);
  for (int ch = 0; ch < 6; ++ch) {
    std::vector<Eigen::Index> active(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) active[static_cast<std::size_t>(j)] = j;
    Eigen::VectorXd xi = solve_active(active, ch);
    int iter = 0;
    for (; iter < opt.max_iterations; ++iter) {
      std::vector<Eigen::Index> next;
      for (Eigen::Index j : active) {
        if (std::abs(xi[j]) >= opt.threshold) next.push_back(j);
      }
      if (next == active) break;
      active = next;
      xi = solve_active(active, ch);
    }
    // Enforce the invariant that pruned entries are exactly zero.
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::abs(xi[j]) < opt.threshold) xi[j] = 0.0;
    }
    model.iterations = std::max(model.iterations, iter + 1);
    for (Eigen::Index j = 0; j < p; ++j) model.coefficients(cols[j], ch) = xi[j] / scale[cols[j]];
  }
  return model;
}

SparseModel sindy_fit(std::span<const Trajectory* const> train, const PhysParams& eta0,
                      const CandidateLibrary& library, const SindyOptions& opt) {
  return stlsq(sindy_targets(train, eta0), library, opt);
}

}  // namespace abnode
