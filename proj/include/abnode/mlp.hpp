#pragma once

#include "abnode/core.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace abnode {

using NetInput = Eigen::Matrix<double, kNetInputDim, 1>;

enum class Activation { kTanh };

const char* activation_name(Activation a);
Activation parse_activation(const std::string& name);

/// Multilayer perceptron parameters. Hidden layers use the activation, the
/// output layer is linear. theta holds, per layer, the weight matrix
/// (column-major, out x in) followed by the bias vector.
struct MlpParams {
  std::vector<int> dims;
  Activation activation = Activation::kTanh;
  Eigen::VectorXd theta;

  static std::size_t count(const std::vector<int>& dims);
  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  void validate() const;
};

/// Default residual-network layer sizes.
std::vector<int> default_dims(int output_dim);

/// Per-channel min/max over the training split (18 states then 5 controls).
struct NormalizationSpec {
  NetInput lo = NetInput::Zero();
  NetInput hi = NetInput::Ones();

  static NormalizationSpec fit(std::span<const StateVec> states, std::span<const ControlVec> controls);
  void extend(std::span<const StateVec> states, std::span<const ControlVec> controls);

  bool is_constant(int channel) const;
  /// d(normalized)/d(raw) per channel; zero for constant channels.
  NetInput scale() const;
  NetInput apply(const StateVec& x, const ControlVec& u) const;
  NetInput apply(const NetInput& z) const;
};

/// Glorot/Xavier uniform weights, zero biases.
MlpParams xavier_init(const std::vector<int>& dims, std::uint64_t seed,
                      Activation activation = Activation::kTanh);

/// Multiplies the output layer's weights by `gain` (biases stay zero).
void scale_output_layer(MlpParams& params, double gain);

Eigen::VectorXd nn_forward(const StateVec& x, const ControlVec& u, const MlpParams& params,
                           const NormalizationSpec& norm);

/// Forward/backward with cached activations. One instance per thread.
class MlpEvaluator {
 public:
  explicit MlpEvaluator(std::vector<int> dims);

  const Eigen::VectorXd& forward(std::span<const double> theta, const Eigen::VectorXd& input);
  /// Backpropagates out_adj through the last forward() call. Accumulates
  /// into grad_theta (may be empty to skip) and returns d/d(input).
  Eigen::VectorXd backward(std::span<const double> theta, const Eigen::VectorXd& out_adj,
                           std::span<double> grad_theta);

  const std::vector<int>& dims() const { return dims_; }

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights in theta
  std::vector<Eigen::VectorXd> acts_;  // acts_[0] = input, acts_[l] = output of layer l
};

}  // namespace abnode
