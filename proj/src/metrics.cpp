#include "abnode/metrics.hpp"

#include "abnode/kvfile.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace abnode {

std::vector<double> cmse_series(std::span<const double> mse) {
  std::vector<double> out(mse.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mse.size(); ++i) {
    acc += mse[i];
    out[i] = acc;
  }
  return out;
}

LambdaIndices lambda_indices(double l_phy, double l_phase1, double l_bnode, double l_abnode) {
  if (l_phy == 0.0) throw Error(ErrorCode::kZeroDenominator, "first-principle loss is zero");
  if (l_bnode == 0.0) throw Error(ErrorCode::kZeroDenominator, "BNODE loss is zero");
  return {(l_phy - l_phase1) / l_phy, (l_bnode - l_abnode) / l_bnode, (l_phy - l_abnode) / l_phy};
}

namespace {
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}
}  // namespace

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyData, "no values to summarize");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  Summary s;
  s.count = v.size();
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.median = quantile(v, 0.5);
  s.q1 = quantile(v, 0.25);
  s.q3 = quantile(v, 0.75);
  s.iqr = s.q3 - s.q1;
  s.min = v.front();
  s.max = v.back();
  return s;
}

double percent_change(double base, double value) {
  if (base == 0.0) throw Error(ErrorCode::kZeroDenominator, "percent change against a zero baseline");
  return 100.0 * (value - base) / base;
}

std::string format_series(std::span<const double> times, std::span<const double> mse) {
  if (times.size() != mse.size()) throw Error(ErrorCode::kLengthMismatch, "series length mismatch");
  const auto cmse = cmse_series(mse);
  std::ostringstream os;
  os << "# t mse cmse\n";
  for (std::size_t i = 0; i < mse.size(); ++i) {
    os << format_double(times[i]) << " " << format_double(mse[i]) << " " << format_double(cmse[i]) << "\n";
  }
  return os.str();
}

}  // namespace abnode
