#include "abnode/model.hpp"

#include "abnode/kvfile.hpp"

#include <sstream>

namespace abnode {

const char* model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kFirstPrinciple: return "fp";
    case ModelKind::kSindy: return "sindyc";
    case ModelKind::kNode: return "node";
    case ModelKind::kKnode: return "knode";
    case ModelKind::kBnode: return "bnode";
    case ModelKind::kAbnode: return "abnode";
    case ModelKind::kTruth: return "truth";
  }
  return "?";
}

ModelKind parse_model(const std::string& name) {
  for (ModelKind k : {ModelKind::kFirstPrinciple, ModelKind::kSindy, ModelKind::kNode, ModelKind::kKnode,
                      ModelKind::kBnode, ModelKind::kAbnode, ModelKind::kTruth}) {
    if (name == model_name(k)) return k;
  }
  throw Error(ErrorCode::kConfig, "unknown model '" + name + "'");
}

std::vector<ModelKind> comparison_models() {
  return {ModelKind::kFirstPrinciple, ModelKind::kSindy, ModelKind::kNode,
          ModelKind::kKnode,          ModelKind::kBnode, ModelKind::kAbnode};
}

namespace {

ResidualMode residual_mode(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNode: return ResidualMode::kPureNetwork;
    case ModelKind::kKnode: return ResidualMode::kFullModel;
    case ModelKind::kBnode:
    case ModelKind::kAbnode: return ResidualMode::kDynamics;
    default: return ResidualMode::kNone;
  }
}

std::string join(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::string out;
  out.reserve(static_cast<std::size_t>(v.size()) * 24);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::unique_ptr<BlimpField> Model::field() const {
  const ResidualMode mode = residual_mode(kind);
  auto f = std::make_unique<BlimpField>(params, mode, mode == ResidualMode::kNone ? std::vector<int>{} : dims,
                                        norm);
  if (kind == ModelKind::kSindy) {
    if (!sparse) throw Error(ErrorCode::kMissingArtifact, "SINDYc model has no sparse coefficients");
    const SparseModel sm = *sparse;
    f->set_fixed_residual([sm](const StateVec& x, const ControlVec& u) { return sm.evaluate(x, u); });
  } else if (kind == ModelKind::kTruth) {
    f->set_fixed_residual(planted_residual(truth_residual));
  }
  return f;
}

Eigen::VectorXd Model::flat_params() const {
  if (residual_mode(kind) == ResidualMode::kNone) return params.eta;
  return pack_params(params.eta, theta);
}

Model truth_model(const PhysParams& truth, const ResidualSpec& residual) {
  Model m;
  m.kind = ModelKind::kTruth;
  m.params = truth;
  m.truth_residual = residual;
  return m;
}

std::string format_checkpoint(const Model& model) {
  std::ostringstream os;
  os << "# abnode checkpoint\n";
  os << "version = 1\n";
  os << "kind = " << model_name(model.kind) << "\n";
  if (residual_mode(model.kind) != ResidualMode::kNone) {
    os << "activation = " << activation_name(model.activation) << "\n";
    os << "dims = ";
    for (std::size_t i = 0; i < model.dims.size(); ++i) os << (i ? "," : "") << model.dims[i];
    os << "\n";
    os << "norm_lo = " << join(model.norm.lo) << "\n";
    os << "norm_hi = " << join(model.norm.hi) << "\n";
    os << "theta = " << join(model.theta) << "\n";
  }
  if (model.kind == ModelKind::kTruth) {
    os << "residual_cv = " << format_double(model.truth_residual.c_v) << "\n";
    os << "residual_cw = " << format_double(model.truth_residual.c_w) << "\n";
  }
  if (model.sparse) {
    const SparseModel& sm = *model.sparse;
    os << "sindy_threshold = " << format_double(sm.threshold) << "\n";
    os << "sindy_iterations = " << sm.iterations << "\n";
    os << "sindy_terms = ";
    for (std::size_t k = 0; k < sm.library.size(); ++k) os << (k ? "," : "") << sm.library.terms()[k].name;
    os << "\n";
    for (int c = 0; c < 6; ++c) os << "sindy_c" << c << " = " << join(sm.coefficients.col(c)) << "\n";
  }
  os << "[params]\n";
  os << format_phys_params(model.params);
  return os.str();
}

Model parse_checkpoint(const std::string& text, const std::string& origin) {
  const std::string marker = "[params]\n";
  const auto pos = text.find(marker);
  if (pos == std::string::npos) throw Error(ErrorCode::kConfig, origin + ": missing [params] section");
  const KvDocument doc = KvDocument::parse(text.substr(0, pos), origin);
  if (doc.get_int("version", 0) != 1) throw Error(ErrorCode::kConfig, origin + ": unsupported checkpoint version");

  Model m;
  m.kind = parse_model(doc.get_string("kind"));
  m.params = parse_phys_params(text.substr(pos + marker.size()), origin, false);
  if (residual_mode(m.kind) != ResidualMode::kNone) {
    m.activation = parse_activation(doc.get_string("activation"));
    for (double d : doc.get_doubles("dims", {})) m.dims.push_back(static_cast<int>(d));
    const auto lo = doc.get_doubles("norm_lo", {});
    const auto hi = doc.get_doubles("norm_hi", {});
    if (lo.size() != kNetInputDim || hi.size() != kNetInputDim) {
      throw Error(ErrorCode::kConfig, origin + ": normalization needs 23 entries");
    }
    m.norm.lo = Eigen::Map<const NetInput>(lo.data());
    m.norm.hi = Eigen::Map<const NetInput>(hi.data());
    m.theta = to_vector(doc.get_doubles("theta", {}));
    if (static_cast<std::size_t>(m.theta.size()) != MlpParams::count(m.dims)) {
      throw Error(ErrorCode::kConfig, origin + ": theta length does not match dims");
    }
  }
  if (m.kind == ModelKind::kTruth) {
    m.truth_residual = {doc.get_double("residual_cv"), doc.get_double("residual_cw")};
  }
  if (doc.has("sindy_terms")) {
    SparseModel sm;
    sm.library = CandidateLibrary::from_names(doc.get_list("sindy_terms", {}));
    sm.threshold = doc.get_double("sindy_threshold");
    sm.iterations = static_cast<int>(doc.get_int("sindy_iterations", 0));
    sm.coefficients = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sm.library.size()), 6);
    for (int c = 0; c < 6; ++c) {
      const auto col = doc.get_doubles("sindy_c" + std::to_string(c), {});
      if (col.size() != sm.library.size()) throw Error(ErrorCode::kConfig, origin + ": SINDYc column length");
      sm.coefficients.col(c) = to_vector(col);
    }
    m.sparse = sm;
  }
  return m;
}

void save_checkpoint(const std::string& path, const Model& model) {
  write_file_atomic(path, format_checkpoint(model));
}

Model load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path), path); }

FitResult fit_model(ModelKind kind, std::span<const Trajectory* const> train, const PhysParams& eta0,
                    const FitOptions& opt) {
  FitResult r;
  r.model.kind = kind;
  r.model.params = eta0;
  switch (kind) {
    case ModelKind::kFirstPrinciple: return r;
    case ModelKind::kTruth:
      throw Error(ErrorCode::kInvalidArgument, "the truth model is not trainable");
    case ModelKind::kSindy:
      r.model.sparse = sindy_fit(train, eta0, CandidateLibrary::standard(), opt.sindy);
      return r;
    default: break;
  }
  const TrainInput in = make_train_input(train, eta0, opt.train.max_samples);
  TrainReport rep;
  switch (kind) {
    case ModelKind::kNode: rep = train_node(in, opt.train); break;
    case ModelKind::kKnode: rep = train_knode(in, opt.train); break;
    case ModelKind::kBnode: rep = train_bnode(in, opt.train); break;
    default: rep = train_abnode(in, opt.train); break;
  }
  r.model.dims = default_dims(residual_output_dim(residual_mode(kind)));
  r.model.norm = in.norm;
  r.model.theta = rep.theta_star;
  r.model.params.eta = rep.eta_star;
  r.report = std::move(rep);
  return r;
}

Evaluation evaluate_model(const Model& model, const Sequence& seq, const Weights& w) {
  const auto field = model.field();
  const Eigen::VectorXd p = model.flat_params();
  const Rollout r = rollout(*field, {p.data(), static_cast<std::size_t>(p.size())}, seq.x0(), seq.controls,
                            seq.steps);
  Evaluation ev;
  ev.mse = mse_series(r.states, seq.reference, w);
  ev.loss = weighted_mse(r.states, seq.reference, w);
  ev.times.assign(r.times.begin() + 1, r.times.end());
  return ev;
}

Evaluation evaluate_model(const Model& model, const Trajectory& test, const Weights& w, std::size_t stride,
                          std::size_t max_samples) {
  return evaluate_model(model, make_sequence(test, max_samples, stride), w);
}

std::string format_train_report(const TrainReport& rep) {
  std::ostringstream os;
  os << "# model = " << rep.model << "\n";
  os << "# termination = " << rep.termination << "\n";
  os << "# wall_seconds = " << format_double(rep.wall_seconds) << "\n";
  os << "# phase1_final = " << format_double(rep.phase1_final) << "\n";
  os << "# phase2_final = " << format_double(rep.phase2_final) << "\n";
  os << "# eta_star = " << join(rep.eta_star) << "\n";
  os << "epoch,phase,loss\n";
  int epoch = 0;
  for (double l : rep.phase1_loss) os << epoch++ << ",1," << format_double(l) << "\n";
  for (double l : rep.phase2_loss) os << epoch++ << ",2," << format_double(l) << "\n";
  return os.str();
}

}  // namespace abnode
