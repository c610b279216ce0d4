#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "helpers.hpp"

namespace testing {

struct FdResult {
  double max_relative_error = 0.0;
  std::string worst;  // tensor[index] of the worst coordinate
  std::size_t coordinates = 0;
};

// Below this magnitude both derivatives are treated as zero-scale, and the
// difference is compared against the floor instead of their size.
inline constexpr double kFdFloor = 1e-6;

// Central differences of the double-precision NLL against the analytic
// gradient, coordinate by coordinate.
inline FdResult finite_difference_check(const factor::FactorParams& params,
                                        const TrajectoryPanel& panel, double step = 1e-5) {
  const auto analytic = factor::gradients(params, panel).gradient;
  std::vector<std::vector<double>> grads;
  analytic.for_each_tensor([&](const std::string&, std::span<const double> v) {
    grads.emplace_back(v.begin(), v.end());
  });
  FdResult result;
  factor::FactorParams probe = params;
  std::size_t tensor = 0;
  probe.for_each_tensor([&](const std::string& name, std::span<double> v) {
    for (std::size_t q = 0; q < v.size(); ++q) {
      const double saved = v[q];
      v[q] = saved + step;
      const double up = factor::negative_log_likelihood(probe, panel);
      v[q] = saved - step;
      const double down = factor::negative_log_likelihood(probe, panel);
      v[q] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grads[tensor][q];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFdFloor});
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst = name + "[" + std::to_string(q) + "]";
      }
    }
    ++tensor;
  });
  return result;
}

}  // namespace testing
