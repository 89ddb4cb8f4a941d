// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include "abnode/kvfile.hpp"
#include "abnode/metrics.hpp"
#include "abnode/pipeline.hpp"
#include "abnode/studies.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace abnode;
using abnode::testing::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// --- 1: adjoint gradients against central differences -----------------------

struct GradCase {
  BlimpField field;
  Eigen::VectorXd params;
  Sequence seq;
  Weights w;
};

GradCase grad_case(int seed, const std::vector<int>& dims, const Dataset& data) {
  const int id = data.configs[static_cast<std::size_t>(seed) % data.configs.size()].id;
  const auto train = data.select(id, Role::kTrain);
  const Trajectory& ref = *train[static_cast<std::size_t>(seed) % train.size()];
  std::vector<StateVec> xs(ref.states.begin(), ref.states.end());
  std::vector<ControlVec> us(ref.controls.begin(), ref.controls.end());
  PhysParams eta0 = data.eta0;
  GradCase c{BlimpField(eta0, ResidualMode::kDynamics, dims, NormalizationSpec::fit(xs, us)), {}, {}, {}};
  const MlpParams theta = xavier_init(dims, 100 + static_cast<std::uint64_t>(seed));
  c.params = pack_params(eta0.eta, theta.theta);
  // start each rollout at a different sample
  Trajectory window = ref;
  const std::size_t off = static_cast<std::size_t>(seed) * 7;
  window.states.assign(ref.states.begin() + off, ref.states.begin() + off + 21);
  window.controls.assign(ref.controls.begin() + off, ref.controls.begin() + off + 21);
  window.t.assign(ref.t.begin() + off, ref.t.begin() + off + 21);
  c.seq = make_sequence(window);
  c.w = weight_matrix(train);
  return c;
}

double case_loss(const GradCase& c, const Eigen::VectorXd& p) {
  const Rollout r = rollout(c.field, {p.data(), static_cast<std::size_t>(p.size())}, c.seq.x0(), c.seq.controls,
                            c.seq.steps);
  return weighted_mse(r.states, c.seq.reference, c.w);
}

// Worst relative error over the given coordinates.
constexpr double fd_step = 1e-3;

double worst_fd_error(const GradCase& c, const std::vector<Eigen::Index>& coords, Eigen::Index& worst_ix) {
  const LossGradient lg = rollout_gradient(c.field, {c.params.data(), static_cast<std::size_t>(c.params.size())},
                                           c.seq.x0(), c.seq.controls, c.seq.steps, c.seq.reference, c.w);
  double worst = 0.0;
  Eigen::VectorXd p = c.params;
  for (Eigen::Index i : coords) {
    const double h = fd_step * std::max(1.0, std::abs(p[i]));
    const double keep = p[i];
    auto at = [&](double d) {
      p[i] = keep + d;
      return case_loss(c, p);
    };
    // fourth-order five-point stencil
    const double fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
    p[i] = keep;
    const double g = lg.grad[i];
    const double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-8});
    if (rel > worst) {
      worst = rel;
      worst_ix = i;
    }
  }
  return worst;
}

Outcome gradient_exactness() {
  const auto start = Clock::now();
  const Dataset data = generate_dataset(abnode::testing::small_generator({3, 8, 15, 20, 26}), default_truth_params());
  double worst_small = 0.0;
  double worst_full = 0.0;
  Eigen::Index ix = -1;
  std::size_t checked = 0;
  for (int seed = 0; seed < 10; ++seed) {
    // compact network: every eta and theta coordinate
    const GradCase small = grad_case(seed, {kNetInputDim, 12, 8, 6}, data);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(small.params.size()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
    worst_small = std::max(worst_small, worst_fd_error(small, all, ix));
    checked += all.size();
    // production-size network: every eta coordinate plus sampled theta coordinates
    const GradCase full = grad_case(seed, default_dims(6), data);
    std::vector<Eigen::Index> some;
    for (Eigen::Index i = 0; i < kEtaDim; ++i) some.push_back(i);
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::uniform_int_distribution<Eigen::Index> pick(kEtaDim, full.params.size() - 1);
    for (int k = 0; k < 60; ++k) some.push_back(pick(rng));
    worst_full = std::max(worst_full, worst_fd_error(full, some, ix));
    checked += some.size();
  }
  const double t = seconds_since(start);
  const bool pass = worst_small < 1e-4 && worst_full < 1e-4 && t < 60.0;
  return {pass, std::to_string(checked) + " coordinates over 10 rollouts of 20 steps, max rel err compact " +
                    num(worst_small) + ", full " + num(worst_full) + ", " + num(t) + " s"};
}

// --- 2: RK4 convergence order ---------------------------------------------

class Exponential final : public VectorField {
 public:
  std::size_t param_count() const override { return 0; }
  StateVec eval(const StateVec& x, const ControlVec&, std::span<const double>) const override { return x; }
  void vjp(const StateVec&, const ControlVec&, std::span<const double>, const StateVec& adj, StateVec& gx,
           std::span<double>, GradRequest) const override {
    gx += adj;
  }
};

Outcome rk4_order() {
  const Exponential f;
  const ControlVec u = ControlVec::Zero();
  StateVec x = StateVec::Zero();
  x[0] = 1.0;
  const double one_step = rk4_step(f, x, u, 1.0, {})[0];
  auto err = [&](int n) {
    StateVec y = x;
    for (int i = 0; i < n; ++i) y = rk4_step(f, y, u, 1.0 / n, {});
    return std::abs(y[0] - std::exp(1.0));
  };
  const double ratio = err(10) / err(20);
  const bool pass = std::abs(one_step - 65.0 / 24.0) < 1e-7 && ratio >= 14.0 && ratio <= 18.0;
  return {pass, "single step " + format_double(one_step) + ", error ratio " + num(ratio)};
}

// --- 3: static equilibrium ---------------------------------------------------

Outcome static_equilibrium() {
  const PhysParams p = abnode::testing::neutral_params();
  const StateVec x0 = abnode::testing::rest_state();
  const ControlVec u = ControlVec::Zero();
  const double d = f_phy(x0, u, p).cwiseAbs().maxCoeff();
  BlimpField field(p, ResidualMode::kNone);
  std::vector<ControlVec> us(600, u);
  const Rollout r = rollout(field, {p.eta.data(), static_cast<std::size_t>(kEtaDim)}, x0, us, 1.0 / 60.0, 601);
  double drift = 0.0;
  for (const auto& s : r.states) drift = std::max(drift, (s - x0).cwiseAbs().maxCoeff());
  return {d <= 1e-12 && drift <= 1e-12, "|f| = " + num(d) + ", drift over 10 s = " + num(drift)};
}

// --- 4: phase separation -----------------------------------------------------

Outcome phase_separation() {
  const Dataset data = generate_dataset(abnode::testing::small_generator({8}), default_truth_params());
  const TrainInput in = make_train_input(abnode::testing::train_of(data, 8), data.eta0, 120);
  TrainConfig cfg;
  cfg.n1 = 4;
  cfg.n2 = 4;
  const TrainReport ab = train_abnode(in, cfg);
  MlpParams init = xavier_init(default_dims(6), cfg.seed);
  scale_output_layer(init, cfg.output_gain);
  const std::uint64_t h0 = bit_hash(init.theta);
  bool theta_fixed = true;
  for (int e = 0; e < cfg.n1; ++e) theta_fixed = theta_fixed && ab.theta_hashes[static_cast<std::size_t>(e)] == h0;
  bool eta_fixed = true;
  const EtaVec eta1 = ab.eta_history[static_cast<std::size_t>(cfg.n1 - 1)];
  for (std::size_t e = static_cast<std::size_t>(cfg.n1); e < ab.eta_history.size(); ++e) {
    eta_fixed = eta_fixed && std::memcmp(ab.eta_history[e].data(), eta1.data(), sizeof(double) * kEtaDim) == 0;
  }
  eta_fixed = eta_fixed && std::memcmp(ab.eta_star.data(), eta1.data(), sizeof(double) * kEtaDim) == 0;
  const bool eta_moved = std::memcmp(eta1.data(), in.eta0.eta.data(), sizeof(double) * kEtaDim) != 0;

  TrainConfig zero = cfg;
  zero.n1 = 0;
  const TrainReport a0 = train_abnode(in, zero);
  const TrainReport bn = train_bnode(in, cfg);
  const bool same = bit_hash(a0.theta_star) == bit_hash(bn.theta_star) &&
                    std::memcmp(a0.eta_star.data(), bn.eta_star.data(), sizeof(double) * kEtaDim) == 0 &&
                    a0.phase2_loss == bn.phase2_loss && a0.theta_hashes == bn.theta_hashes &&
                    a0.phase2_final == bn.phase2_final;
  return {theta_fixed && eta_fixed && eta_moved && same,
          std::string("theta fixed in phase 1: ") + (theta_fixed ? "yes" : "no") +
              ", eta fixed in phase 2: " + (eta_fixed ? "yes" : "no") +
              ", N1=0 reproduces BNODE: " + (same ? "yes" : "no")};
}

// --- 5: loss and metric identities -------------------------------------------

Outcome metric_identities() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 2 + static_cast<std::size_t>(trial) * 17;
    std::vector<StateVec> a(len), b(len);
    Weights w;
    for (int j = 0; j < kStateDim; ++j) w[j] = 0.1 + std::abs(n01(rng));
    for (std::size_t i = 0; i < len; ++i) {
      for (int j = 0; j < kStateDim; ++j) {
        a[i][j] = n01(rng);
        b[i][j] = n01(rng);
      }
    }
    const double loss = weighted_mse(a, b, w);
    const auto series = mse_series(a, b, w);
    double sum = 0.0;
    for (double v : series) sum += v;
    worst = std::max(worst, std::abs(sum / static_cast<double>(series.size()) - loss) / loss);
    const auto c = cmse_series(series);
    for (std::size_t i = 1; i < c.size(); ++i) monotone = monotone && c[i] >= c[i - 1];
  }
  const LambdaIndices li = lambda_indices(0.4, 0.3, 0.2, 0.1);
  const double lam_err =
      std::max({std::abs(li.lambda1 - 0.25), std::abs(li.lambda2 - 0.5), std::abs(li.lambda3 - 0.75)});
  const bool pass = worst <= 1e-12 && monotone && lam_err <= 4e-16;
  return {pass, "loss vs mean(series) rel " + num(worst) + ", CMSE monotone " + (monotone ? "yes" : "no") +
                    ", lambda (" + format_double(li.lambda1) + ", " + format_double(li.lambda2) + ", " +
                    format_double(li.lambda3) + ")"};
}

// --- 6: phase-1 parameter recovery -------------------------------------------

Outcome parameter_recovery() {
  const auto start = Clock::now();
  GeneratorConfig g;
  g.config_ids = {8};
  g.residual = {0.0, 0.0};
  const PhysParams truth = default_truth_params();
  const Dataset data = generate_dataset(g, truth);
  PhysParams eta0 = truth;
  eta0.eta = 1.5 * truth.eta;
  TrainConfig cfg;
  cfg.n1 = 10;
  cfg.n2 = 0;
  const TrainInput in = make_train_input(abnode::testing::train_of(data, 8), eta0, cfg.max_samples = 600);
  const TrainReport rep = train_abnode(in, cfg);
  const double before = rep.phase1_loss.front();
  const double after = rep.phase1_final;
  const double reduction = 1.0 - after / before;
  const double t = seconds_since(start);
  return {reduction >= 0.8 && t < 600.0, "L_phy " + num(before) + " -> " + num(after) + " (" +
                                             num(100.0 * reduction) + "% reduction), " + num(t) + " s"};
}

// --- 7: model ordering on the default corpus ---------------------------------

RunConfig corpus_config(std::vector<int> ids) {
  RunConfig c = load_run_config(ABNODE_SOURCE_DIR "/configs/default.cfg");
  c.gen.config_ids = std::move(ids);
  return c;
}

ModelSource fitting_source(const Dataset& data, const FitOptions& fit) {
  return [&data, fit](ModelKind k, int id) {
    return fit_model(k, data.select(id, Role::kTrain), data.eta0, fit).model;
  };
}

Outcome model_ordering() {
  const auto start = Clock::now();
  const RunConfig cfg = corpus_config({2, 8, 14, 20, 26, 31});
  const Dataset data = generate_dataset(cfg.gen, resolve_truth(cfg));
  const std::vector<ModelKind> models = {ModelKind::kFirstPrinciple, ModelKind::kSindy, ModelKind::kBnode,
                                         ModelKind::kAbnode};
  const StudyResult r = heatmap_study(data, models, fitting_source(data, cfg.fit), {}, false);
  const double fp = r.summary("fp").mean;
  const double sindy = r.summary("sindyc").mean;
  const double bnode = r.summary("bnode").mean;
  const double abnode = r.summary("abnode").mean;
  const double t = seconds_since(start);
  const bool pass = abnode < bnode && bnode < fp && abnode < sindy && r.failed_count() == 0 && t < 1800.0;
  return {pass, "mean test loss abnode " + num(abnode) + ", bnode " + num(bnode) + ", fp " + num(fp) +
                    ", sindyc " + num(sindy) + " (reduction vs fp " + num(r.percent_value("reduction:abnode:fp")) +
                    "%), " + num(t) + " s"};
}

// --- 8: robustness to damping initialization ---------------------------------

Outcome robustness() {
  RunConfig cfg = corpus_config({15, 16, 17, 18, 19, 20, 33});
  const Dataset data = generate_dataset(cfg.gen, resolve_truth(cfg));
  RobustnessOptions ro = cfg.robustness;
  ro.fit = cfg.fit;
  const StudyResult r = robustness_study(data, ro, {});
  const double g_fp = r.percent_value("max_growth:fp");
  const double g_ab = r.percent_value("max_growth:abnode");
  const double fp0 = r.percent_value("growth:fp:0");
  return {g_ab < g_fp && fp0 > 1.0, "max loss growth vs level 1: abnode " + num(g_ab) + "x, fp " + num(g_fp) +
                                        "x (fp at level 0: " + num(fp0) + "x)"};
}

// --- 9: time-step adaptability -----------------------------------------------

Outcome timestep_adaptability() {
  RunConfig cfg = corpus_config({8, 15, 20});
  cfg.gen.spiral_min_samples = 2760;
  const Dataset data = generate_dataset(cfg.gen, resolve_truth(cfg));
  const StudyResult r = timestep_study(data, fitting_source(data, cfg.fit), cfg.timestep, {});
  double worst = 0.0;
  for (const auto& p : r.percent) worst = std::max(worst, std::abs(p.value));
  return {worst < 5.0 && r.failed_count() == 0,
          std::to_string(r.percent.size()) + " (step, horizon) cells, max |mean % change| " + num(worst)};
}

// --- 10: SINDYc planted-term oracle ------------------------------------------

Outcome sindy_oracle() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  SindyData d;
  SindyData rich;
  for (int i = 0; i < 3000; ++i) {
    StateVec x = StateVec::Zero();
    x[3] = 0.2 * U(rng);
    x[4] = 0.2 * U(rng);
    x[5] = 3.14 * U(rng);
    x[6] = 0.6 + 0.4 * U(rng);
    x[7] = 0.3 * U(rng);
    x[8] = 0.3 * U(rng);
    for (int j = 9; j < 12; ++j) x[j] = 0.5 * U(rng);
    x[14] = 0.12;
    for (int j = 15; j < 18; ++j) x[j] = 0.01 * U(rng);
    ControlVec u = ControlVec::Zero();
    u[0] = 0.02 * (1.0 + U(rng));
    u[1] = 0.05 * (1.0 + U(rng));
    Eigen::Matrix<double, 6, 1> t = Eigen::Matrix<double, 6, 1>::Zero();
    t[0] = 0.3 * x[6] * x[6];
    d.states.push_back(x);
    d.controls.push_back(u);
    d.targets.push_back(t);
    // several terms of different strength plus noise, for the threshold sweep
    Eigen::Matrix<double, 6, 1> s = t;
    s[1] = -0.2 * x[7] + 0.05 * x[7] * x[11];
    s[5] = -0.1 * x[11] * std::abs(x[11]) + 0.02 * x[11] + 0.01 * U(rng);
    s[0] += 0.005 * U(rng);
    rich.states.push_back(x);
    rich.controls.push_back(u);
    rich.targets.push_back(s);
  }
  const auto lib = CandidateLibrary::standard();
  const SparseModel m = stlsq(d, lib, {});
  const auto& terms = lib.terms();
  std::size_t uu = 0;
  while (terms[uu].name != "u*u") ++uu;
  const double coef = m.coefficients(static_cast<Eigen::Index>(uu), 0);
  const bool recovered = std::abs(coef - 0.3) <= 0.05 * 0.3 && m.active_terms() == 1;

  bool monotone = true;
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  std::string sizes;
  for (double thr : {0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}) {
    SindyOptions o;
    o.threshold = thr;
    const std::size_t k = stlsq(rich, lib, o).active_terms();
    monotone = monotone && k <= prev;
    prev = k;
    sizes += (sizes.empty() ? "" : ",") + std::to_string(k);
  }
  return {recovered && monotone, "u*u coefficient " + format_double(coef) + " with " +
                                     std::to_string(m.active_terms()) + " active term(s); support by threshold " +
                                     sizes};
}

// --- 11: end-to-end reproducibility ------------------------------------------

std::string tree_digest(const fs::path& dir, std::size_t& files) {
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) paths.push_back(fs::relative(e.path(), dir));
  }
  std::sort(paths.begin(), paths.end());
  files = paths.size();
  std::string all;
  for (const auto& p : paths) all += p.string() + "\n" + read_file((dir / p).string()) + "\n";
  return all;
}

Outcome reproducibility() {
  const auto start = Clock::now();
  TempDir tmp("accept");
  const std::string script = ABNODE_SOURCE_DIR "/scripts/pipeline.sh";
  const std::string config = ABNODE_SOURCE_DIR "/configs/desk.cfg";
  std::string digest[2];
  std::size_t files[2] = {0, 0};
  for (int run = 0; run < 2; ++run) {
    const std::string out = tmp / ("run" + std::to_string(run));
    const std::string cmd = "ABNODE=" ABNODE_CLI_PATH " sh " + script + " " + config + " " + out + " > " +
                            (tmp / ("log" + std::to_string(run))) + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, "pipeline script failed (status " + std::to_string(rc) + "), see " + out};
    for (const char* s : {"heatmap", "generalization", "robustness", "timestep"}) {
      if (!fs::exists(fs::path(out) / "studies" / s)) return {false, std::string("missing study ") + s};
    }
    digest[run] = tree_digest(fs::path(out) / "studies", files[run]);
  }
  const bool same = digest[0] == digest[1] && files[0] > 0;
  return {same, std::to_string(files[0]) + " study files, byte-identical across runs: " + (same ? "yes" : "no") +
                    ", " + num(seconds_since(start)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-exactness", gradient_exactness},
      {"rk4-order", rk4_order},
      {"static-equilibrium", static_equilibrium},
      {"phase-separation", phase_separation},
      {"loss-metric-identities", metric_identities},
      {"parameter-recovery", parameter_recovery},
      {"model-ordering", model_ordering},
      {"robustness", robustness},
      {"timestep-adaptability", timestep_adaptability},
      {"sindy-oracle", sindy_oracle},
      {"reproducibility", reproducibility},
  };
  // optional: run a subset, e.g. `acceptance 3 7`
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2d %-24s %s\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
