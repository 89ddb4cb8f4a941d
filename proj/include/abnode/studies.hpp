#pragma once

#include "abnode/metrics.hpp"
#include "abnode/model.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace abnode {

/// Supplies the model of a given kind trained on a configuration (loaded from
/// a checkpoint or trained on demand).
using ModelSource = std::function<Model(ModelKind, int config_id)>;

struct StudyCell {
  std::string model;
  int config_id = -1;
  std::string variant;
  double loss = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

struct NamedSummary {
  std::string key;
  Summary summary;
  std::size_t failed = 0;
};

struct NamedValue {
  std::string key;
  double value = 0.0;
};

struct StudyTable {
  std::string name;  // file name, e.g. "heatmap_abnode.csv"
  std::string text;
};

struct StudyResult {
  std::string kind;
  std::vector<StudyCell> cells;
  std::vector<NamedSummary> summaries;
  std::vector<NamedValue> percent;
  std::vector<StudyTable> tables;

  /// Losses of the non-failed cells matching model (and variant, if given).
  std::vector<double> losses(const std::string& model, const std::string& variant = "") const;
  std::size_t failed_count() const;
  const Summary& summary(const std::string& key) const;
  double percent_value(const std::string& key) const;
};

struct StudyOptions {
  int jobs = 1;
  std::size_t eval_max_samples = 0;  // 0 = full test trajectory
  std::vector<int> series_configs;   // configs that get MSE/CMSE series files
};

/// Per model and configuration: model trained on the 3 train trials,
/// evaluated on the held-out trial. Cells whose training or rollout diverged
/// are flagged and left out of the means. Adds a truth control row when
/// `truth` is set, and the lambda table when fp, bnode and abnode are all
/// present.
StudyResult heatmap_study(const Dataset& data, const std::vector<ModelKind>& models, const ModelSource& source,
                          const StudyOptions& opt, bool include_truth = true);

struct GridHub {
  int hub = -1;
  std::vector<int> neighbors;  // up, down, left, right
};

/// Spiral configurations whose four grid neighbors are all present.
/// Throws GridTooSmall when there are none.
std::vector<GridHub> grid_hubs(const std::vector<MotionConfig>& configs);

/// Models trained on each hub, evaluated on the test trial of each
/// neighbor with the neighbor's weight matrix.
StudyResult generalization_study(const Dataset& data, const std::vector<ModelKind>& models,
                                 const ModelSource& source, const StudyOptions& opt);

struct RobustnessOptions {
  std::vector<double> levels = {0.0, 0.5, 1.5, 2.0};
  double delta_rx_cm = 2.0;
  FitOptions fit;
};

/// Scales the rotational damping coefficients of eta0 by each level (1.0 is
/// always added). The first-principle model is evaluated as initialized;
/// ABNODE is trained from the scaled eta0.
StudyResult robustness_study(const Dataset& data, const RobustnessOptions& ropt, const StudyOptions& opt);

struct TimestepOptions {
  std::vector<int> strides = {2, 3, 4, 5};
  std::vector<int> cycle = {1, 2, 3};
  std::vector<double> horizons_s = {30.0, 35.0, 40.0, 45.0};
};

/// ABNODE evaluated with coarse steps on subsampled references, compared
/// with the 1/60 s rollout over the same horizon. Uses every configuration
/// whose test trial covers the longest horizon; throws SequenceTooShort when
/// none does.
StudyResult timestep_study(const Dataset& data, const ModelSource& source, const TimestepOptions& topt,
                           const StudyOptions& opt);

/// Weight matrix of a configuration: range over its train trials.
Weights config_weights(const Dataset& data, int config_id);

}  // namespace abnode
