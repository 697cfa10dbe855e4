#include "scefis/stats.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace scefis {

namespace {

std::pair<double, double> mean_sd(std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1))};
}

}  // namespace

double paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired t-test needs equal-length samples");
    if (a.size() < 2) throw std::invalid_argument("paired t-test needs at least two pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const auto [mean, sd] = mean_sd(d);
    if (sd == 0.0) return mean == 0.0 ? 1.0 : 0.0;
    const double t = mean / (sd / std::sqrt(static_cast<double>(d.size())));
    boost::math::students_t dist(static_cast<double>(d.size() - 1));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

Summary stats_summary(std::span<const double> values, std::optional<std::span<const double>> baseline) {
    if (values.size() < 2) throw std::invalid_argument("stats_summary needs at least two values");
    Summary s;
    std::tie(s.mean, s.stddev) = mean_sd(values);
    boost::math::students_t dist(static_cast<double>(values.size() - 1));
    const double half = boost::math::quantile(boost::math::complement(dist, 0.025)) * s.stddev /
                        std::sqrt(static_cast<double>(values.size()));
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
    if (baseline) s.p_value = paired_t_test(values, *baseline);
    return s;
}

}  // namespace scefis
