#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "scefis/fuzzy.hpp"

using namespace scefis;

namespace {

Matrix uniform(std::mt19937_64& rng, int r, int c, double lo = 0, double hi = 1) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
}

TrainingStore store_of(const Matrix& in, const Eigen::VectorXd& out) {
    TrainingStore s;
    s.append(in, out);
    return s;
}

/// Chiu's subtractive clustering written out with plain loops.
std::vector<int> clustering_oracle(const Matrix& z, double radius, bool scaled) {
    const auto n = z.rows();
    const double dims = scaled ? static_cast<double>(z.cols()) : 1.0;
    auto d2 = [&](Eigen::Index i, Eigen::Index j) {
        double s = 0;
        for (Eigen::Index k = 0; k < z.cols(); ++k) s += (z(i, k) - z(j, k)) * (z(i, k) - z(j, k));
        return s / dims;
    };
    const double ra = radius, rb = 1.25 * radius;
    std::vector<double> pot(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) pot[static_cast<std::size_t>(i)] += std::exp(-4 * d2(i, j) / (ra * ra));
    std::vector<int> centers;
    double first = 0;
    for (;;) {
        const auto it = std::max_element(pot.begin(), pot.end());
        const double p = *it;
        const int c = static_cast<int>(it - pot.begin());
        if (!(p > 0)) break;
        if (centers.empty()) {
            first = p;
        } else if (p < 0.15 * first) {
            break;
        } else if (p < 0.5 * first) {
            double dmin = 1e300;
            for (int k : centers) dmin = std::min(dmin, std::sqrt(d2(c, k)));
            if (dmin / ra + p / first < 1) {
                pot[static_cast<std::size_t>(c)] = 0;
                continue;
            }
        }
        centers.push_back(c);
        for (Eigen::Index i = 0; i < n; ++i) pot[static_cast<std::size_t>(i)] -= p * std::exp(-4 * d2(i, c) / (rb * rb));
        pot[static_cast<std::size_t>(c)] = 0;
    }
    return centers;
}

double max_rule_difference(const RuleBase& a, const RuleBase& b) {
    REQUIRE(a.size() == b.size());
    double d = 0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        d = std::max(d, (a.rules[r].center - b.rules[r].center).cwiseAbs().maxCoeff());
        d = std::max(d, (a.rules[r].width - b.rules[r].width).cwiseAbs().maxCoeff());
        d = std::max(d, (a.rules[r].coefficients - b.rules[r].coefficients).cwiseAbs().maxCoeff());
        d = std::max(d, std::abs(a.rules[r].bias - b.rules[r].bias));
    }
    return d;
}

}  // namespace

TEST_CASE("unit normalization") {
    Matrix m(3, 2);
    m << 1, 5, 3, 5, 2, 5;
    const auto u = unit_normalize(m);
    CHECK(u(0, 0) == 0.0);
    CHECK(u(1, 0) == 1.0);
    CHECK(u(2, 0) == 0.5);
    CHECK(u.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("subtractive clustering equals the brute-force oracle") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 12; ++trial) {
        Matrix z = uniform(rng, 25 + trial, 3 + trial % 4);
        for (Eigen::Index r = 0; r < z.rows() / 2; ++r) z.row(r) *= 0.2;
        const double radius = trial % 2 ? 0.5 : 0.3;
        const bool scaled = trial % 3 != 0;
        FuzzyOptions o;
        o.radius = radius;
        o.dimension_scaled = scaled;
        CHECK(subtractive_clustering(z, o) == clustering_oracle(z, radius, scaled));
    }
    CHECK_THROWS(subtractive_clustering(Matrix::Zero(3, 2), FuzzyOptions{.radius = 1.5}));
}

TEST_CASE("three well separated points give three rules at the points") {
    Matrix in(3, 1);
    in << 0, 50, 100;
    Eigen::VectorXd out(3);
    out << 10, 200, 90;
    FuzzyOptions o;
    o.radius = 0.1;
    const auto rb = generate_rules(store_of(in, out), o);
    REQUIRE(rb.size() == 3);
    std::vector<double> centers;
    for (const auto& r : rb.rules) centers.push_back(r.center[0]);
    std::sort(centers.begin(), centers.end());
    CHECK(centers == std::vector<double>{0, 50, 100});
    for (int i = 0; i < 3; ++i) CHECK(infer(rb, in.row(i).transpose()).value == doctest::Approx(out[i]).epsilon(1e-6));
}

TEST_CASE("single training row is reproduced exactly") {
    std::mt19937_64 rng(1);
    for (int dim : {1, 5, 32}) {
        const Matrix in = uniform(rng, 1, dim, -5, 300);
        const Eigen::VectorXd out = Eigen::VectorXd::Constant(1, 123.25);
        const auto rb = generate_rules(store_of(in, out), {});
        CHECK(rb.size() == 1);
        CHECK(std::abs(infer(rb, in.row(0).transpose()).value - 123.25) <= 1e-9);
        for (const auto& r : rb.rules) {
            CHECK((r.width.array() > 0).all());
            CHECK(r.coefficients.size() == dim);
        }
    }
}

TEST_CASE("rule count never exceeds the row count") {
    std::mt19937_64 rng(3);
    for (int n : {2, 5, 17, 40}) {
        const auto in = uniform(rng, n, 6, 0, 100);
        const Eigen::VectorXd out = uniform(rng, n, 1, 0, 255).col(0);
        for (double radius : {0.05, 0.5, 1.0}) {
            FuzzyOptions o;
            o.radius = radius;
            const auto rb = generate_rules(store_of(in, out), o);
            CHECK(rb.size() >= 1);
            CHECK(rb.size() <= static_cast<std::size_t>(n));
            CHECK(rb.training_rows == n);
        }
    }
    CHECK_THROWS(generate_rules(TrainingStore{}, {}));
}

TEST_CASE("inference basics") {
    RuleBase rb;
    rb.dimension = 2;
    TSRule r;
    r.center = Eigen::Vector2d(0, 0);
    r.width = Eigen::Vector2d(1, 1);
    r.coefficients = Eigen::Vector2d(2, -1);
    r.bias = 3;
    rb.rules.push_back(r);
    CHECK(infer(rb, Eigen::Vector2d(1, 4)).value == doctest::Approx(2 - 4 + 3));

    TSRule far = r;
    far.center = Eigen::Vector2d(100, 100);
    far.coefficients = Eigen::Vector2d(0, 0);
    far.bias = 50;
    rb.rules.push_back(far);
    // At the first center the second rule fires with exp(-10000); the first dominates.
    const double w2 = std::exp(-0.5 * (100.0 * 100 + 100.0 * 100));
    const double want = (1.0 * 3 + w2 * 50) / (1.0 + w2);
    CHECK(infer(rb, Eigen::Vector2d(0, 0)).value == doctest::Approx(want));

    const auto fallback = infer(rb, Eigen::Vector2d(60, 60));
    CHECK(fallback.nearest_rule_fallback);
    CHECK(fallback.value == 50);
    CHECK_THROWS(infer(rb, Eigen::Vector3d(0, 0, 0)));
}

TEST_CASE("inference is continuous and infer_block is row-wise infer") {
    std::mt19937_64 rng(5);
    const auto in = uniform(rng, 30, 4, 0, 10);
    const Eigen::VectorXd out = uniform(rng, 30, 1, 50, 150).col(0);
    const auto rb = generate_rules(store_of(in, out), {});
    for (int i = 0; i < 10; ++i) {
        const Eigen::VectorXd x = uniform(rng, 4, 1, 0, 10).col(0);
        const double a = infer(rb, x).value;
        const double b = infer(rb, x + Eigen::VectorXd::Constant(4, 1e-7)).value;
        CHECK(std::abs(a - b) < 1e-3);
    }
    const auto rows = uniform(rng, 8, 4, 0, 10);
    const auto block = infer_block(rb, rows);
    REQUIRE(block.size() == 8);
    for (Eigen::Index i = 0; i < 8; ++i) CHECK(block[static_cast<std::size_t>(i)] == infer(rb, rows.row(i).transpose()).value);
    Matrix same(8, 4);
    same.rowwise() = rows.row(0);
    const auto s = infer_block(rb, same);
    for (double v : s) CHECK(v == s[0]);
}

TEST_CASE("zmf") {
    CHECK(zmf(1, 1, 3) == 1.0);
    CHECK(zmf(3, 1, 3) == 0.0);
    CHECK(zmf(2, 1, 3) == doctest::Approx(0.5));
    for (double x = 0; x < 4; x += 0.1) CHECK(zmf(x, 1, 3) == doctest::Approx(oracle::zmf(x, 1, 3)));
    CHECK_THROWS(zmf(0, 2, 2));
}

TEST_CASE("fusion examples") {
    const std::vector<double> flat(8, 42.0);
    CHECK(fuse_output(flat).t_star == 42.0);

    std::vector<double> spread(7, 100.0);
    spread.push_back(240.0);
    const auto f = fuse_output(spread);
    CHECK(f.mean == doctest::Approx(117.5));
    CHECK(f.median == 100.0);
    CHECK(f.stddev == doctest::Approx(49.497).epsilon(1e-4));
    CHECK(f.membership == 0.0);
    CHECK(f.t_star == 100.0);

    const std::vector<double> zeros(8, 0.0);
    CHECK(fuse_output(zeros).nonpositive_mean);
    CHECK_THROWS(fuse_output(std::vector<double>{}));
}

TEST_CASE("fusion laws on random vectors") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> center(5, 250), rel(0, 0.35);
    for (int trial = 0; trial < 1000; ++trial) {
        const double c = center(rng), s = rel(rng) * c;
        std::normal_distribution<double> n(c, s + 1e-9);
        std::vector<double> t(8);
        for (auto& v : t) v = n(rng);
        const auto f = fuse_output(t);
        const double mu = oracle::mean(t), med = oracle::median(t), sd = oracle::sample_std(t);
        CHECK(f.unclamped >= std::min(mu, med) - 1e-12);
        CHECK(f.unclamped <= std::max(mu, med) + 1e-12);
        if (mu > 0 && sd <= 0.10 * mu) CHECK(f.unclamped == f.mean);
        if (mu > 0 && sd >= 0.20 * mu) CHECK(f.unclamped == f.median);
    }
}

TEST_CASE("pruning") {
    Matrix in(3, 1);
    in << 0, 1, 2;
    Eigen::VectorXd out(3);
    out << 0, 1, 2;
    const auto store = store_of(in, out);

    CHECK(prune_rows(in, out, store, 0.3).empty());
    CHECK(prune_rows(in, out, TrainingStore{}, 0.3) == std::vector<int>{0, 1, 2});

    Matrix cand(1, 1);
    cand << 1;
    Eigen::VectorXd cand_out(1);
    cand_out << 1.5;
    // Normalized store rows are (-1,-1), (0,0), (1,1); the candidate sits at (0, 0.5).
    CHECK(prune_rows(cand, cand_out, store, 0.5) == std::vector<int>{0});
    CHECK(prune_rows(cand, cand_out, store, 0.5000001).empty());

    Matrix two(2, 1);
    two << 10, 10;
    Eigen::VectorXd two_out(2);
    two_out << 7, 7;
    CHECK(prune_rows(two, two_out, store, 0.3) == std::vector<int>{0});
    CHECK_THROWS(prune_rows(Matrix::Zero(1, 2), cand_out, store, 0.3));
}

TEST_CASE("evolution") {
    std::mt19937_64 rng(21);
    const int dim = 6;
    TrainingStore store;
    const Matrix first = uniform(rng, 8, dim, 0, 50);
    store.append(first, Eigen::VectorXd::Constant(8, 80));
    RuleBase rb = generate_rules(store, {});
    rb.version = 0;

    SUBCASE("duplicate data changes nothing") {
        const auto ev = evolve(rb, store, first, 80, {});
        CHECK(ev.kept.empty());
        CHECK(ev.rules.no_op);
        CHECK(ev.rules.size() == rb.size());
        CHECK(ev.store.inputs == store.inputs);
        CHECK(ev.store.outputs == store.outputs);
        CHECK(ev.rules.version == 1);
        CHECK(max_rule_difference(ev.rules, rb) == 0.0);
    }

    SUBCASE("a novel image adds at most eight rows") {
        const auto ev = evolve(rb, store, uniform(rng, 8, dim, 200, 300), 150, {});
        CHECK(ev.store.size() > store.size());
        CHECK(ev.store.size() <= store.size() + 8);
        CHECK(ev.rules.version == 1);
    }

    SUBCASE("sequential evolution equals batch regeneration") {
        TrainingStore s = store;
        RuleBase r = rb;
        for (int step = 0; step < 12; ++step) {
            std::uniform_real_distribution<double> t(20, 200);
            const auto ev = evolve(r, s, uniform(rng, 8, dim, 0, 100), std::round(t(rng)), {});
            s = ev.store;
            r = ev.rules;
            CHECK(r.version == step + 1);
            CHECK(r.size() <= static_cast<std::size_t>(s.size()));
        }
        const auto batch = generate_rules(s, {});
        CHECK(max_rule_difference(r, batch) <= 1e-9);
        // Replaying already-seen rows is a no-op.
        const auto again = evolve(r, s, s.inputs.topRows(8), s.outputs[0], {});
        CHECK(again.rules.size() == r.size());
        CHECK(again.store.size() == s.size());
    }

    CHECK_THROWS(evolve(rb, store, first, 256, {}));
}

TEST_CASE("rule base JSON round trip") {
    std::mt19937_64 rng(2);
    const auto in = uniform(rng, 12, 3, 0, 10);
    const Eigen::VectorXd out = uniform(rng, 12, 1, 0, 255).col(0);
    auto rb = generate_rules(store_of(in, out), {});
    rb.version = 4;
    const auto back = rule_base_from_json(nlohmann::json::parse(to_json(rb).dump()));
    CHECK(back.version == 4);
    CHECK(back.dimension == 3);
    CHECK(max_rule_difference(back, rb) == 0.0);
    CHECK_THROWS(rule_base_from_json(nlohmann::json{{"format", "other"}}));
}
