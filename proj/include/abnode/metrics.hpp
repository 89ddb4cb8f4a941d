#pragma once

#include "abnode/loss.hpp"

#include <span>
#include <string>
#include <vector>

namespace abnode {

/// Running sum CMSE(t_k) = sum_{i=2..k} MSE(t_i).
std::vector<double> cmse_series(std::span<const double> mse);

struct LambdaIndices {
  double lambda1 = 0.0;  // phase-1 gain over the first-principle model
  double lambda2 = 0.0;  // ABNODE gain over BNODE
  double lambda3 = 0.0;  // ABNODE gain over the first-principle model
};

/// Throws ZeroDenominator when l_phy or l_bnode is zero.
LambdaIndices lambda_indices(double l_phy, double l_phase1, double l_bnode, double l_abnode);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  double min = 0.0;
  double max = 0.0;
};

/// Quartiles by linear interpolation between order statistics. Throws
/// EmptyData on an empty input.
Summary summarize(std::span<const double> values);

/// 100 * (value - base) / base; throws ZeroDenominator when base is zero.
double percent_change(double base, double value);

/// Writes "t mse cmse" rows (gnuplot friendly).
std::string format_series(std::span<const double> times, std::span<const double> mse);

}  // namespace abnode
