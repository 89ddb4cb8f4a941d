#include "abnode/loss.hpp"

namespace abnode {

std::vector<double> mse_series(std::span<const StateVec> pred, std::span<const StateVec> ref,
                               const Weights& w) {
  if (pred.size() != ref.size()) {
    throw Error(ErrorCode::kLengthMismatch, "prediction has " + std::to_string(pred.size()) +
                                                " samples, reference has " + std::to_string(ref.size()));
  }
  std::vector<double> out;
  out.reserve(pred.size() > 0 ? pred.size() - 1 : 0);
  for (std::size_t i = 1; i < pred.size(); ++i) {
    out.push_back(w.cwiseProduct(pred[i] - ref[i]).squaredNorm() / kStateDim);
  }
  return out;
}

double weighted_mse(std::span<const StateVec> pred, std::span<const StateVec> ref, const Weights& w) {
  const std::vector<double> series = mse_series(pred, ref, w);
  if (series.empty()) throw Error(ErrorCode::kEmptyData, "loss needs at least two samples");
  double sum = 0.0;
  for (double v : series) sum += v;
  return sum / static_cast<double>(series.size());
}

}  // namespace abnode
