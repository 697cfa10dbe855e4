#pragma once

#include <optional>
#include <span>

namespace scefis {

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;  ///< sample standard deviation
    double ci_low = 0.0;  ///< 95% t-interval for the mean
    double ci_high = 0.0;
    std::optional<double> p_value;  ///< two-sided paired t-test against the baseline
};

/// Two-sided p-value of the paired t-test on (a - b). Identical samples give 1.
double paired_t_test(std::span<const double> a, std::span<const double> b);

/// Requires at least two values; `baseline`, when given, must be row-aligned with `values`.
Summary stats_summary(std::span<const double> values, std::optional<std::span<const double>> baseline = std::nullopt);

}  // namespace scefis
