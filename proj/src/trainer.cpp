#include "abnode/trainer.hpp"

#include "abnode/parallel.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace abnode {

Sequence make_sequence(const Trajectory& traj, std::size_t max_samples, std::size_t stride) {
  return make_cycle_sequence(traj, {static_cast<int>(stride)}, max_samples);
}

Sequence make_cycle_sequence(const Trajectory& traj, const std::vector<int>& cycle,
                             std::size_t max_samples) {
  if (cycle.empty()) throw Error(ErrorCode::kInvalidArgument, "empty step cycle");
  for (int c : cycle) {
    if (c < 1) throw Error(ErrorCode::kInvalidArgument, "step strides must be positive");
  }
  const std::size_t n = max_samples == 0 ? traj.size() : std::min(max_samples, traj.size());
  if (n == 0) throw Error(ErrorCode::kEmptyData, "empty trajectory");
  Sequence s;
  std::size_t i = 0;
  std::size_t k = 0;
  s.reference.push_back(traj.states[0]);
  while (true) {
    const std::size_t stride = static_cast<std::size_t>(cycle[k % cycle.size()]);
    if (i + stride >= n) break;
    s.controls.push_back(traj.controls[i]);
    s.steps.push_back(traj.dt * static_cast<double>(stride));
    i += stride;
    s.reference.push_back(traj.states[i]);
    ++k;
  }
  return s;
}

Weights weight_matrix(std::span<const Trajectory* const> train) {
  StateVec lo = StateVec::Constant(std::numeric_limits<double>::infinity());
  StateVec hi = -lo;
  std::size_t count = 0;
  for (const Trajectory* t : train) {
    for (const auto& x : t->states) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::kEmptyData, "weight matrix needs training samples");
  Weights w;
  for (int j = 0; j < kStateDim; ++j) {
    const double range = hi[j] - lo[j];
    w[j] = range > 1e-12 * std::max(1.0, std::abs(hi[j])) ? 1.0 / range : 1.0;
  }
  return w;
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad, AdamState& st,
               const AdamConfig& cfg) {
  if (st.m.size() != params.size()) {
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
  }
  ++st.t;
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double Objective::loss(std::span<const double> params, int jobs) const {
  std::vector<double> per(sequences.size());
  parallel_for(sequences.size(), jobs, [&](std::size_t i) {
    const Sequence& s = sequences[i];
    const Rollout r = rollout(*field, params, s.x0(), s.controls, s.steps);
    per[i] = weighted_mse(r.states, s.reference, w);
  });
  double sum = 0.0;
  for (double v : per) sum += v;
  return sum / static_cast<double>(sequences.size());
}

LossGradient Objective::loss_gradient(std::span<const double> params, GradRequest want, int jobs) const {
  std::vector<LossGradient> per(sequences.size());
  parallel_for(sequences.size(), jobs, [&](std::size_t i) {
    const Sequence& s = sequences[i];
    per[i] = rollout_gradient(*field, params, s.x0(), s.controls, s.steps, s.reference, w, want);
  });
  LossGradient out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  for (const auto& g : per) {
    out.loss += g.loss;
    out.grad += g.grad;
    out.grad_x0 += g.grad_x0;
  }
  const double inv = 1.0 / static_cast<double>(sequences.size());
  out.loss *= inv;
  out.grad *= inv;
  out.grad_x0 *= inv;
  return out;
}

std::vector<double> optimize_block(const Objective& obj, Eigen::VectorXd& params, int epochs,
                                   const BlockOptions& opt,
                                   const std::function<void(const Eigen::VectorXd&)>& after_epoch) {
  if (obj.sequences.empty()) throw Error(ErrorCode::kEmptyData, "no training sequences");
  const auto off = static_cast<Eigen::Index>(opt.offset);
  const auto cnt = static_cast<Eigen::Index>(opt.count);
  if (off + cnt > params.size()) throw Error(ErrorCode::kDimensionMismatch, "parameter block out of range");
  const bool scaled = opt.scale.size() > 0;
  if (scaled && opt.scale.size() != cnt) throw Error(ErrorCode::kDimensionMismatch, "scale length mismatch");

  std::vector<double> losses;
  AdamState st(cnt);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const std::span<const double> p{params.data(), static_cast<std::size_t>(params.size())};
    LossGradient lg;
    try {
      lg = obj.loss_gradient(p, opt.want, opt.jobs);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      throw Error(ErrorCode::kNonFinite, opt.label + " diverged at epoch " + std::to_string(epoch) + " (" +
                                             e.what() + ")");
    }
    if (!std::isfinite(lg.loss)) {
      throw Error(ErrorCode::kNonFinite, opt.label + " loss is not finite at epoch " + std::to_string(epoch));
    }
    losses.push_back(lg.loss);
    Eigen::VectorXd g = lg.grad.segment(off, cnt);
    if (scaled) g = g.cwiseProduct(opt.scale);
    if (opt.clip) {
      const double norm = g.norm();
      if (norm > opt.clip_norm) g *= opt.clip_norm / norm;
    }
    if (scaled) {
      Eigen::VectorXd z = params.segment(off, cnt).cwiseQuotient(opt.scale);
      adam_step(z, g, st, opt.adam);
      params.segment(off, cnt) = z.cwiseProduct(opt.scale);
    } else {
      adam_step(params.segment(off, cnt), g, st, opt.adam);
    }
    if (after_epoch) after_epoch(params);
  }
  return losses;
}

double physics_informed_loss(bool b, const EtaVec& eta, const Eigen::VectorXd& theta,
                             const PhysParams& constants, const NormalizationSpec& norm,
                             const std::vector<int>& dims, std::span<const Sequence> data,
                             const Weights& w) {
  Objective obj;
  obj.sequences.assign(data.begin(), data.end());
  obj.w = w;
  if (b) {
    BlimpField field(constants, ResidualMode::kNone);
    obj.field = &field;
    return obj.loss({eta.data(), static_cast<std::size_t>(kEtaDim)});
  }
  BlimpField field(constants, ResidualMode::kDynamics, dims, norm);
  obj.field = &field;
  const Eigen::VectorXd p = pack_params(eta, theta);
  return obj.loss({p.data(), static_cast<std::size_t>(p.size())});
}

std::uint64_t bit_hash(const Eigen::VectorXd& v) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(v.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

TrainInput make_train_input(std::span<const Trajectory* const> train, const PhysParams& eta0,
                            std::size_t max_samples) {
  if (train.empty()) throw Error(ErrorCode::kEmptyData, "no training trajectories");
  TrainInput in;
  in.eta0 = eta0;
  in.w = weight_matrix(train);
  std::vector<StateVec> xs;
  std::vector<ControlVec> us;
  for (const Trajectory* t : train) {
    xs.insert(xs.end(), t->states.begin(), t->states.end());
    us.insert(us.end(), t->controls.begin(), t->controls.end());
    in.sequences.push_back(make_sequence(*t, max_samples));
  }
  in.norm = NormalizationSpec::fit(xs, us);
  return in;
}

namespace {

using Clock = std::chrono::steady_clock;

BlockOptions theta_options(const TrainConfig& cfg, std::size_t theta_count, const std::string& label) {
  BlockOptions opt;
  opt.offset = kEtaDim;
  opt.count = theta_count;
  opt.adam = {cfg.lr_theta, cfg.beta1, cfg.beta2, cfg.eps};
  opt.clip = cfg.clip;
  opt.clip_norm = cfg.clip_norm;
  opt.want = {false, true};
  opt.jobs = cfg.jobs;
  opt.label = label;
  return opt;
}

MlpParams initial_theta(const std::vector<int>& dims, const TrainConfig& cfg) {
  MlpParams p = xavier_init(dims, cfg.seed);
  if (cfg.output_gain != 1.0) scale_output_layer(p, cfg.output_gain);
  return p;
}

// Trains a network residual of the given mode with eta frozen at `eta`.
void train_theta_phase(const TrainInput& in, const TrainConfig& cfg, ResidualMode mode, const EtaVec& eta,
                       int epochs, const std::string& label, TrainReport& rep) {
  const std::vector<int> dims = default_dims(residual_output_dim(mode));
  BlimpField field(in.eta0, mode, dims, in.norm);
  const MlpParams init = initial_theta(dims, cfg);
  Eigen::VectorXd p = pack_params(eta, init.theta);
  Objective obj{&field, in.sequences, in.w};
  rep.phase2_loss = optimize_block(obj, p, epochs, theta_options(cfg, field.theta_count(), label),
                                   [&](const Eigen::VectorXd& q) {
                                     rep.eta_history.push_back(q.head<kEtaDim>());
                                     rep.theta_hashes.push_back(bit_hash(q.tail(q.size() - kEtaDim)));
                                   });
  rep.phase2_final = obj.loss({p.data(), static_cast<std::size_t>(p.size())}, cfg.jobs);
  rep.eta_star = p.head<kEtaDim>();
  rep.theta_star = p.tail(p.size() - kEtaDim);
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.n1 < 0 || cfg.n2 < 0 || cfg.node_epochs < 0) {
    throw Error(ErrorCode::kConfig, "epoch counts must be non-negative");
  }
  if (!(cfg.lr_eta > 0.0) || !(cfg.lr_theta > 0.0)) {
    throw Error(ErrorCode::kConfig, "learning rates must be positive");
  }
}

}  // namespace

TrainReport train_abnode(const TrainInput& in, const TrainConfig& cfg) {
  validate_config(cfg);
  const auto start = Clock::now();
  TrainReport rep;
  rep.model = cfg.n1 == 0 ? "bnode" : "abnode";

  // Phase 1 (b = 1): eta only, first-principle rollouts.
  BlimpField fp(in.eta0, ResidualMode::kNone);
  Eigen::VectorXd eta = in.eta0.eta;
  const MlpParams init = initial_theta(default_dims(6), cfg);
  const std::uint64_t theta0_hash = bit_hash(init.theta);
  Objective obj{&fp, in.sequences, in.w};
  BlockOptions opt;
  opt.count = kEtaDim;
  opt.adam = {cfg.lr_eta, cfg.beta1, cfg.beta2, cfg.eps};
  opt.clip = cfg.clip;
  opt.clip_norm = cfg.clip_norm;
  opt.want = {true, false};
  opt.jobs = cfg.jobs;
  opt.label = "phase 1";
  if (cfg.relative_eta) {
    const EtaVec base = in.eta_scale ? *in.eta_scale : in.eta0.eta;
    opt.scale = base.cwiseAbs().cwiseMax(cfg.eta_scale_floor);
  }
  rep.phase1_loss = optimize_block(obj, eta, cfg.n1, opt, [&](const Eigen::VectorXd& q) {
    rep.eta_history.push_back(q);
    rep.theta_hashes.push_back(theta0_hash);
  });
  rep.phase1_final = cfg.n1 > 0 ? obj.loss({eta.data(), static_cast<std::size_t>(kEtaDim)}, cfg.jobs)
                                 : 0.0;

  // Phase 2 (b = 0): theta only, hybrid rollouts at eta*.
  train_theta_phase(in, cfg, ResidualMode::kDynamics, eta, cfg.n2, "phase 2", rep);
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return rep;
}

TrainReport train_bnode(const TrainInput& in, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.n1 = 0;
  return train_abnode(in, c);
}

TrainReport train_knode(const TrainInput& in, const TrainConfig& cfg) {
  validate_config(cfg);
  const auto start = Clock::now();
  TrainReport rep;
  rep.model = "knode";
  train_theta_phase(in, cfg, ResidualMode::kFullModel, in.eta0.eta, cfg.n2, "knode", rep);
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return rep;
}

TrainReport train_node(const TrainInput& in, const TrainConfig& cfg) {
  validate_config(cfg);
  const auto start = Clock::now();
  TrainReport rep;
  rep.model = "node";
  train_theta_phase(in, cfg, ResidualMode::kPureNetwork, in.eta0.eta, cfg.node_epochs, "node", rep);
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return rep;
}

}  // namespace abnode
