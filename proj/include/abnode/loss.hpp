#pragma once

#include "abnode/core.hpp"

#include <span>
#include <vector>

namespace abnode {

/// Diagonal of the loss weight matrix W.
using Weights = StateVec;

/// (1/(N-1)) * sum_{i=2..N} (1/n) ||W (pred_i - ref_i)||^2 with n = 18; the
/// anchor sample i = 1 is excluded. Throws LengthMismatch on unequal
/// lengths and EmptyData when N < 2.
double weighted_mse(std::span<const StateVec> pred, std::span<const StateVec> ref, const Weights& w);

/// Per-sample weighted MSE for samples 2..N (N-1 entries).
std::vector<double> mse_series(std::span<const StateVec> pred, std::span<const StateVec> ref,
                               const Weights& w);

}  // namespace abnode
