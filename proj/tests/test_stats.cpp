#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "scefis/stats.hpp"

using namespace scefis;

TEST_CASE("95% interval uses the t quantile") {
    // Two-sided 95% critical values from standard tables.
    const std::vector<std::pair<int, double>> table = {{1, 12.7062}, {6, 2.4469}, {9, 2.2622}, {34, 2.0322}};
    for (const auto& [df, crit] : table) {
        CHECK(oracle::t_quantile_975(df) == doctest::Approx(crit).epsilon(1e-4));
        std::vector<double> v(static_cast<std::size_t>(df + 1));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 3);
        const auto s = stats_summary(v);
        const double half = crit * oracle::sample_std(v) / std::sqrt(static_cast<double>(v.size()));
        CHECK(s.ci_high - s.mean == doctest::Approx(half).epsilon(1e-4));
        CHECK(s.mean - s.ci_low == doctest::Approx(half).epsilon(1e-4));
    }
}

TEST_CASE("summary mean and sample deviation") {
    const std::vector<double> v = {0.2, 0.4, 0.9, 0.5};
    const auto s = stats_summary(v);
    CHECK(s.mean == doctest::Approx(0.5));
    CHECK(s.stddev == doctest::Approx(oracle::sample_std(v)));
    CHECK_FALSE(s.p_value.has_value());
    CHECK_THROWS(stats_summary(std::vector<double>{1.0}));
}

TEST_CASE("paired t-test matches numerical integration") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a(7 + trial), b(7 + trial);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = n(rng);
            b[i] = a[i] + 0.3 * trial * 0.1 + 0.5 * n(rng);
        }
        const double want = oracle::paired_p(a, b);
        CHECK(paired_t_test(a, b) == doctest::Approx(want).epsilon(1e-6));
        const std::span<const double> base(b);
        CHECK(*stats_summary(a, base).p_value == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("paired t-test edge cases") {
    const std::vector<double> a = {1, 2, 3};
    CHECK(paired_t_test(a, a) == 1.0);
    const std::vector<double> shifted = {2, 3, 4};
    CHECK(paired_t_test(a, shifted) == 0.0);
    CHECK_THROWS(paired_t_test(a, std::vector<double>{1, 2}));
}
