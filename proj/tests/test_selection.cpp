#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "scefis/selection.hpp"

using namespace scefis;

namespace {

StackedFeatureMatrix stacked(const Matrix& m) {
    StackedFeatureMatrix f;
    f.values = m;
    for (Eigen::Index r = 0; r < m.rows(); ++r) f.rows.push_back({"img" + std::to_string(r / 8), static_cast<int>(r % 8)});
    for (Eigen::Index c = 0; c < m.cols(); ++c) f.columns.push_back("f" + std::to_string(c));
    return f;
}

Matrix gaussian(std::mt19937_64& rng, int r, int c) {
    std::normal_distribution<double> n(0, 1);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

Matrix zscore(const Matrix& x) {
    Matrix z = x;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        std::vector<double> v(x.col(c).data(), x.col(c).data() + x.rows());
        const double m = oracle::mean(v), s = oracle::sample_std(v);
        for (Eigen::Index r = 0; r < x.rows(); ++r) z(r, c) = s > 0 ? (x(r, c) - m) / s : 0.0;
    }
    return z;
}

/// Residual of projecting every column of `a` onto the span of the chosen columns.
double residual(const Matrix& a, const std::vector<int>& chosen) {
    Matrix basis(a.rows(), static_cast<Eigen::Index>(chosen.size()));
    for (std::size_t i = 0; i < chosen.size(); ++i) basis.col(static_cast<Eigen::Index>(i)) = a.col(chosen[i]);
    const Matrix coef = basis.completeOrthogonalDecomposition().solve(a);
    return (a - basis * coef).squaredNorm();
}

/// Planted two-cluster structure in column `planted`; everything else i.i.d. noise.
// Two well-separated row clusters carried by three adjacent columns (wrapping).
Matrix planted(std::mt19937_64& rng, int rows, int cols, int planted_col) {
    Matrix m = gaussian(rng, rows, cols);
    std::normal_distribution<double> small(0, 0.05);
    for (int j = 0; j < 3; ++j)
        for (int r = 0; r < rows; ++r) m(r, (planted_col + j) % cols) = (r < rows / 2 ? -3.0 : 3.0) + small(rng);
    return m;
}

}  // namespace

TEST_CASE("duplicate and negated columns are pruned") {
    Matrix m(5, 3);
    m << 1, 1, -1, 2, 2, -2, 3, 3, -3, 5, 5, -5, 4, 4, -4;
    const auto p = correlation_prune(stacked(m), 0.99);
    CHECK(p.kept == std::vector<int>{0});
    CHECK(p.matrix.columns == std::vector<std::string>{"f0"});
}

TEST_CASE("constant columns are dropped first and all-constant input fails") {
    Matrix m(4, 3);
    m << 1, 7, 2, 2, 7, 9, 3, 7, 1, 4, 7, 0;
    const auto p = correlation_prune(stacked(m), 0.9);
    CHECK(p.dropped_constant == std::vector<int>{1});
    CHECK(p.kept == std::vector<int>{0, 2});
    CHECK_THROWS_AS(correlation_prune(stacked(Matrix::Ones(4, 3)), 0.9), NoInformativeFeatures);
    CHECK_THROWS(correlation_prune(stacked(m), 0.0));
    CHECK_THROWS(correlation_prune(stacked(m), 1.5));
}

TEST_CASE("correlation prune equals the pairwise oracle") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = gaussian(rng, 20, 10);
        // Make a few columns nearly collinear so pruning has work to do.
        m.col(3) = m.col(1) * 2 + 0.1 * gaussian(rng, 20, 1);
        m.col(7) = -m.col(3) + 0.3 * gaussian(rng, 20, 1);
        const auto p = correlation_prune(stacked(m), 0.9);
        CHECK(p.kept == oracle::correlation_prune(m, 0.9));
        for (std::size_t i = 0; i < p.kept.size(); ++i)
            for (std::size_t j = i + 1; j < p.kept.size(); ++j)
                CHECK(std::abs(oracle::pearson(m.col(p.kept[i]), m.col(p.kept[j]))) < 0.9);
        // Idempotence.
        CHECK(correlation_prune(p.matrix, 0.9).kept.size() == p.kept.size());
    }
}

TEST_CASE("pearson matches the oracle") {
    std::mt19937_64 rng(8);
    const auto m = gaussian(rng, 30, 2);
    CHECK(pearson(m.col(0), m.col(1)) == doctest::Approx(oracle::pearson(m.col(0), m.col(1))));
}

TEST_CASE("cardinality") {
    std::mt19937_64 rng(3);
    Matrix q = gaussian(rng, 50, 4).householderQr().householderQ() * Matrix::Identity(50, 4);
    CHECK(determine_cardinality(stacked(q)).count == 4);

    const auto block = gaussian(rng, 30, 5);
    Matrix twice(30, 10);
    twice << block, block;
    const auto c = determine_cardinality(stacked(twice));
    CHECK(c.count == 5);
    CHECK(c.fc.kept == std::vector<int>{0, 1, 2, 3, 4});

    const auto r = gaussian(rng, 24, 12);
    CHECK(determine_cardinality(stacked(r)).count == static_cast<int>(oracle::correlation_prune(r, 0.9).size()));
}

TEST_CASE("every selector returns exactly k unique indices") {
    std::mt19937_64 rng(5);
    const auto m = gaussian(rng, 40, 12);
    for (int k : {1, 4, 12}) {
        for (const auto& o : run_selectors(m, k)) {
            REQUIRE(o.result.has_value());
            CAPTURE(method_name(o.method));
            const auto& idx = o.result->indices;
            CHECK(idx.size() == static_cast<std::size_t>(k));
            CHECK(std::set<int>(idx.begin(), idx.end()).size() == idx.size());
            CHECK(std::is_sorted(idx.begin(), idx.end()));
            for (int i : idx) CHECK((i >= 0 && i < 12));
        }
    }
    CHECK_THROWS(fs_laplacian(m, 13));
    CHECK_THROWS(fs_greedy(m, 0));
    CHECK_THROWS(fs_spectral(m.topRows(1), 2));
}

TEST_CASE("k equal to the column count selects everything") {
    std::mt19937_64 rng(6);
    const auto m = gaussian(rng, 25, 6);
    const std::vector<int> all = {0, 1, 2, 3, 4, 5};
    CHECK(fs_laplacian(m, 6).indices == all);
    CHECK(fs_spectral(m, 6).indices == all);
    CHECK(fs_mcfs(m, 6).indices == all);
    CHECK(fs_feature_similarity(m, 6).indices == all);
    CHECK(fs_greedy(m, 6).indices == all);
}

TEST_CASE("selectors are deterministic") {
    std::mt19937_64 rng(12);
    const auto m = gaussian(rng, 30, 10);
    const auto a = run_selectors(m, 4), b = run_selectors(m, 4);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].result->indices == b[i].result->indices);
}

TEST_CASE("planted cluster columns fill the top k of the graph selectors") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        std::mt19937_64 rng(seed);
        const int col = static_cast<int>(seed * 3 % 10);
        const auto m = planted(rng, 40, 10, col);
        CAPTURE(seed);
        auto is_planted = [&](int c) { return (c - col + 10) % 10 < 3; };
        auto has = [&](const SelectionResult& r) { return std::all_of(r.indices.begin(), r.indices.end(), is_planted); };
        // Lasso keeps one column out of a near-duplicate group.
        auto touches = [&](const SelectionResult& r) { return std::any_of(r.indices.begin(), r.indices.end(), is_planted); };
        CHECK(has(fs_laplacian(m, 3)));
        CHECK(has(fs_spectral(m, 3)));
        CHECK(touches(fs_mcfs(m, 3, SelectorOptions{.clusters = 1})));
    }
}

TEST_CASE("greedy selection equals brute-force best-first residual search") {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = gaussian(rng, 15, 7);
        const auto z = zscore(m);
        std::vector<int> chosen;
        for (int step = 0; step < 4; ++step) {
            int best = -1;
            double best_res = 0;
            for (int c = 0; c < 7; ++c) {
                if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
                auto trial_set = chosen;
                trial_set.push_back(c);
                const double r = residual(z, trial_set);
                if (best < 0 || r < best_res - 1e-9) {
                    best = c;
                    best_res = r;
                }
            }
            chosen.push_back(best);
        }
        CHECK(greedy_order(m, 4) == chosen);
    }
}

TEST_CASE("greedy on a rank-one matrix clears the residual with its first pick") {
    std::mt19937_64 rng(15);
    const Eigen::VectorXd base = gaussian(rng, 20, 1).col(0);
    Matrix m(20, 5);
    for (int c = 0; c < 5; ++c) m.col(c) = base * (c + 1.0) + Eigen::VectorXd::Constant(20, c);
    const auto first = greedy_order(m, 1)[0];
    CHECK(residual(zscore(m), {first}) < 1e-18);
}

TEST_CASE("vote quorum examples") {
    auto res = [](std::vector<int> idx) { return SelectionResult{SelectionMethod::Spectral, std::move(idx)}; };
    std::vector<SelectionResult> six = {res({0, 1}), res({0, 2}), res({0, 1}), res({3}), res({4}), res({2})};
    const auto v = ensemble_vote(six, 5);
    CHECK(v.quorum == 3);
    CHECK(v.indices == std::vector<int>{0});
    CHECK(v.tally == std::vector<int>{3, 2, 2, 1, 1});

    std::vector<SelectionResult> same(6, res({1, 3}));
    CHECK(ensemble_vote(same, 5).indices == std::vector<int>{1, 3});

    std::vector<SelectionResult> four = {res({0}), res({0}), res({1}), res({2})};
    CHECK(ensemble_vote(four, 3).quorum == 2);
    CHECK(ensemble_vote(four, 3).indices == std::vector<int>{0});
}

TEST_CASE("empty vote falls back to the correlation set") {
    std::vector<SelectionResult> r = {{SelectionMethod::Correlation, {2, 4}},
                                      {SelectionMethod::Spectral, {0}},
                                      {SelectionMethod::Greedy, {1}},
                                      {SelectionMethod::Laplacian, {3}}};
    const auto v = ensemble_vote(r, 5);
    CHECK(v.fallback);
    CHECK(v.indices == std::vector<int>{2, 4});
    CHECK_THROWS(ensemble_vote({}, 5));
    CHECK_THROWS(ensemble_vote(r, 5, 0.0));
}

TEST_CASE("vote law on random configurations") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> size(1, 12);
    std::bernoulli_distribution fail(0.1);
    for (int trial = 0; trial < 200; ++trial) {
        const int cols = 15;
        std::vector<SelectionResult> active;
        for (int m = 0; m < 6; ++m) {
            if (m > 0 && fail(rng)) continue;
            std::vector<int> idx(cols);
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(static_cast<std::size_t>(size(rng)));
            std::sort(idx.begin(), idx.end());
            active.push_back({static_cast<SelectionMethod>(m), idx});
        }
        const auto v = ensemble_vote(active, cols);
        const int quorum = (static_cast<int>(active.size()) + 1) / 2;
        CHECK(v.quorum == quorum);
        std::vector<int> want;
        std::set<int> uni;
        for (int c = 0; c < cols; ++c) {
            int n = 0;
            for (const auto& r : active) n += std::count(r.indices.begin(), r.indices.end(), c) > 0;
            if (n >= quorum) want.push_back(c);
            if (n > 0) uni.insert(c);
        }
        if (want.empty()) {
            CHECK(v.fallback);
            continue;
        }
        CHECK(v.indices == want);
        for (int i : v.indices) CHECK(uni.count(i) == 1);
        for (int c = 0; c < cols; ++c) {
            bool in_all = true;
            for (const auto& r : active) in_all &= std::count(r.indices.begin(), r.indices.end(), c) > 0;
            if (in_all) CHECK(std::count(v.indices.begin(), v.indices.end(), c) == 1);
        }
    }
}

TEST_CASE("cap_vote keeps the highest tallies") {
    VoteResult v;
    v.indices = {0, 2, 3, 5};
    v.tally = {3, 0, 5, 3, 0, 4};
    CHECK(cap_vote(v, 2) == std::vector<int>{2, 5});
    CHECK(cap_vote(v, 3) == std::vector<int>{0, 2, 5});
    CHECK(cap_vote(v, 10) == v.indices);
    CHECK_THROWS(cap_vote(v, -1));
}

TEST_CASE("cascade widths never increase") {
    std::mt19937_64 rng(21);
    Matrix m = gaussian(rng, 48, 30);
    for (int c = 20; c < 30; ++c) m.col(c) = m.col(c - 20) * 1.5 + 0.01 * gaussian(rng, 48, 1);
    for (int c = 10; c < 14; ++c) m.col(c) = m.col(c - 10) + 0.4 * gaussian(rng, 48, 1);
    const auto cascade = run_cascade(stacked(m));
    const auto w = cascade.widths(30);
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] <= w[i - 1]);
    CHECK(w[1] == static_cast<int>(oracle::correlation_prune(m, 0.99).size()));
    const auto& fs = cascade.f_star().values;
    for (Eigen::Index a = 0; a < fs.cols(); ++a)
        for (Eigen::Index b = a + 1; b < fs.cols(); ++b) CHECK(std::abs(oracle::pearson(fs.col(a), fs.col(b))) < 0.9);
    const auto report = selection_report(cascade, 30);
    CHECK(report.at("widths").at("N_L").get<int>() == w[4]);
}

TEST_CASE("stacked matrix helpers") {
    std::mt19937_64 rng(1);
    const auto f = stacked(gaussian(rng, 16, 3));
    CHECK(f.image_ids() == std::vector<std::string>{"img0", "img1"});
    CHECK(f.image_rows("img1") == f.values.bottomRows(8));
    const std::vector<int> pick = {2, 0};
    const auto s = f.select_columns(pick);
    CHECK(s.columns == std::vector<std::string>{"f2", "f0"});
    CHECK(s.values.col(0) == f.values.col(2));
}
