#pragma once

#include "abnode/datagen.hpp"
#include "abnode/sindy.hpp"
#include "abnode/trainer.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace abnode {

enum class ModelKind { kFirstPrinciple, kSindy, kNode, kKnode, kBnode, kAbnode, kTruth };

const char* model_name(ModelKind kind);
/// Accepts fp, sindyc, node, knode, bnode, abnode, truth.
ModelKind parse_model(const std::string& name);
std::vector<ModelKind> comparison_models();

/// A trained (or analytic) model ready for evaluation.
struct Model {
  ModelKind kind = ModelKind::kFirstPrinciple;
  PhysParams params;  // constants and the eta used at evaluation time
  std::vector<int> dims;
  Activation activation = Activation::kTanh;
  NormalizationSpec norm;
  Eigen::VectorXd theta;
  std::optional<SparseModel> sparse;
  ResidualSpec truth_residual;  // kTruth only

  std::unique_ptr<BlimpField> field() const;
  Eigen::VectorXd flat_params() const;
};

/// Checkpoint text document (versioned); round-trips bit-exactly.
std::string format_checkpoint(const Model& model);
Model parse_checkpoint(const std::string& text, const std::string& origin = "<string>");
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

/// Truth field as a model: f_phy at eta_true plus the planted residual.
Model truth_model(const PhysParams& truth, const ResidualSpec& residual);

struct FitOptions {
  TrainConfig train;
  SindyOptions sindy;
};

struct FitResult {
  Model model;
  std::optional<TrainReport> report;
};

/// Trains one model kind on the train trajectories of a configuration,
/// starting from eta0.
FitResult fit_model(ModelKind kind, std::span<const Trajectory* const> train, const PhysParams& eta0,
                    const FitOptions& opt);

struct Evaluation {
  double loss = 0.0;
  std::vector<double> mse;  // MSE(t_i), i = 2..N
  std::vector<double> times;
};

/// Full-horizon open-loop rollout from the sequence anchor, scored with the
/// weighted MSE.
Evaluation evaluate_model(const Model& model, const Sequence& seq, const Weights& w);
Evaluation evaluate_model(const Model& model, const Trajectory& test, const Weights& w,
                          std::size_t stride = 1, std::size_t max_samples = 0);

/// Text report: phase loss curves as columns plus the final parameters.
std::string format_train_report(const TrainReport& rep);

}  // namespace abnode
