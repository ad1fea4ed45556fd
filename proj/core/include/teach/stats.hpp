#pragma once

#include <span>

namespace teach {

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch's unequal-variance t-test, two-tailed. Both samples need at least
/// two values and at least one of them a nonzero variance.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);
/// Unbiased (n - 1) sample variance.
double sample_variance(std::span<const double> values);

}  // namespace teach
