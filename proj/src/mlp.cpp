#include "abnode/mlp.hpp"

#include <cmath>
#include <random>

namespace abnode {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kConfig, "unknown activation '" + name + "'");
}

std::size_t MlpParams::count(const std::vector<int>& dims) {
  std::size_t n = 0;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    n += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l - 1] + 1);
  }
  return n;
}

void MlpParams::validate() const {
  if (dims.size() < 2) throw Error(ErrorCode::kDimensionMismatch, "network needs at least two layers");
  for (int d : dims) {
    if (d <= 0) throw Error(ErrorCode::kDimensionMismatch, "layer sizes must be positive");
  }
  if (static_cast<std::size_t>(theta.size()) != count(dims)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "theta has " + std::to_string(theta.size()) + " entries, layout needs " +
                    std::to_string(count(dims)));
  }
  if (!theta.allFinite()) throw Error(ErrorCode::kNonFinite, "theta has non-finite entries");
}

std::vector<int> default_dims(int output_dim) { return {kNetInputDim, 256, 64, output_dim}; }

NormalizationSpec NormalizationSpec::fit(std::span<const StateVec> states,
                                         std::span<const ControlVec> controls) {
  if (states.empty()) throw Error(ErrorCode::kEmptyData, "no samples to fit normalization");
  NormalizationSpec spec;
  spec.lo.setConstant(std::numeric_limits<double>::infinity());
  spec.hi.setConstant(-std::numeric_limits<double>::infinity());
  spec.extend(states, controls);
  return spec;
}

void NormalizationSpec::extend(std::span<const StateVec> states,
                               std::span<const ControlVec> controls) {
  if (states.size() != controls.size()) {
    throw Error(ErrorCode::kLengthMismatch, "state and control sample counts differ");
  }
  for (std::size_t i = 0; i < states.size(); ++i) {
    NetInput z;
    z << states[i], controls[i];
    lo = lo.cwiseMin(z);
    hi = hi.cwiseMax(z);
  }
}

bool NormalizationSpec::is_constant(int c) const {
  return !(hi(c) - lo(c) > 1e-12 * std::max(1.0, std::abs(hi(c))));
}

NetInput NormalizationSpec::scale() const {
  NetInput s;
  for (int c = 0; c < kNetInputDim; ++c) s(c) = is_constant(c) ? 0.0 : 1.0 / (hi(c) - lo(c));
  return s;
}

NetInput NormalizationSpec::apply(const NetInput& z) const {
  NetInput out;
  for (int c = 0; c < kNetInputDim; ++c) {
    out(c) = is_constant(c) ? 0.0 : (z(c) - lo(c)) / (hi(c) - lo(c));
  }
  return out;
}

NetInput NormalizationSpec::apply(const StateVec& x, const ControlVec& u) const {
  NetInput z;
  z << x, u;
  return apply(z);
}

MlpParams xavier_init(const std::vector<int>& dims, std::uint64_t seed, Activation activation) {
  MlpParams p;
  p.dims = dims;
  p.activation = activation;
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(MlpParams::count(dims)));
  std::mt19937_64 rng(seed);
  Eigen::Index k = 0;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    const int fan_in = dims[l - 1], fan_out = dims[l];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (int i = 0; i < fan_in * fan_out; ++i) p.theta(k++) = dist(rng);
    k += fan_out;  // biases stay zero
  }
  return p;
}

MlpEvaluator::MlpEvaluator(std::vector<int> dims) : dims_(std::move(dims)) {
  std::size_t off = 0;
  for (std::size_t l = 1; l < dims_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(dims_[l]) * static_cast<std::size_t>(dims_[l - 1] + 1);
  }
  acts_.resize(dims_.size());
}

const Eigen::VectorXd& MlpEvaluator::forward(std::span<const double> theta,
                                             const Eigen::VectorXd& input) {
  if (input.size() != dims_.front()) {
    throw Error(ErrorCode::kDimensionMismatch, "network input has wrong size");
  }
  acts_[0] = input;
  const std::size_t layers = dims_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = dims_[l], out = dims_[l + 1];
    const double* w = theta.data() + offsets_[l];
    Eigen::Map<const Eigen::MatrixXd> weights(w, out, in);
    Eigen::Map<const Eigen::VectorXd> bias(w + static_cast<std::size_t>(out) * in, out);
    acts_[l + 1].noalias() = weights * acts_[l];
    acts_[l + 1] += bias;
    if (l + 1 < layers) acts_[l + 1] = acts_[l + 1].array().tanh();
  }
  return acts_.back();
}

Eigen::VectorXd MlpEvaluator::backward(std::span<const double> theta,
                                       const Eigen::VectorXd& out_adj,
                                       std::span<double> grad_theta) {
  const std::size_t layers = dims_.size() - 1;
  Eigen::VectorXd delta = out_adj;
  for (std::size_t l = layers; l-- > 0;) {
    const int in = dims_[l], out = dims_[l + 1];
    if (l + 1 < layers) {
      // tanh' = 1 - tanh^2, applied to this layer's output
      delta.array() *= 1.0 - acts_[l + 1].array().square();
    }
    const double* w = theta.data() + offsets_[l];
    Eigen::Map<const Eigen::MatrixXd> weights(w, out, in);
    if (!grad_theta.empty()) {
      double* gw = grad_theta.data() + offsets_[l];
      Eigen::Map<Eigen::MatrixXd> gweights(gw, out, in);
      Eigen::Map<Eigen::VectorXd> gbias(gw + static_cast<std::size_t>(out) * in, out);
      gweights.noalias() += delta * acts_[l].transpose();
      gbias += delta;
    }
    Eigen::VectorXd prev = weights.transpose() * delta;
    delta = std::move(prev);
  }
  return delta;
}

void scale_output_layer(MlpParams& params, double gain) {
  params.validate();
  const std::size_t n = params.dims.size();
  const std::size_t out = static_cast<std::size_t>(params.dims[n - 1]);
  const std::size_t in = static_cast<std::size_t>(params.dims[n - 2]);
  const std::size_t start = MlpParams::count(params.dims) - out * (in + 1);
  params.theta.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(out * in)) *= gain;
}

Eigen::VectorXd nn_forward(const StateVec& x, const ControlVec& u, const MlpParams& params,
                           const NormalizationSpec& norm) {
  if (params.input_dim() != kNetInputDim) {
    throw Error(ErrorCode::kDimensionMismatch, "residual network must take 23 inputs");
  }
  if (static_cast<std::size_t>(params.theta.size()) != MlpParams::count(params.dims)) {
    throw Error(ErrorCode::kDimensionMismatch, "theta does not match layer sizes");
  }
  MlpEvaluator eval(params.dims);
  const Eigen::VectorXd z = norm.apply(x, u);
  return eval.forward({params.theta.data(), static_cast<std::size_t>(params.theta.size())}, z);
}

}  // namespace abnode
