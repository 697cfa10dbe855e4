#include <doctest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "scefis/features.hpp"
#include "scefis/transforms.hpp"

using namespace scefis;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int r, int c, double lo = 0, double hi = 255) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::round(d(rng));
    return m;
}

Descriptor random_descriptor(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, 40);
    Descriptor out{};
    for (auto& v : out) v = std::max(0, d(rng) - 15);
    return out;
}

Matrix haar_oracle(const Matrix& x) {
    Matrix p = x;
    if (p.rows() % 2) {
        p.conservativeResize(p.rows() + 1, Eigen::NoChange);
        p.row(p.rows() - 1) = p.row(p.rows() - 2);
    }
    if (p.cols() % 2) {
        p.conservativeResize(Eigen::NoChange, p.cols() + 1);
        p.col(p.cols() - 1) = p.col(p.cols() - 2);
    }
    Matrix a(p.rows() / 2, p.cols() / 2);
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            a(r, c) = (p(2 * r, 2 * c) + p(2 * r, 2 * c + 1) + p(2 * r + 1, 2 * c) + p(2 * r + 1, 2 * c + 1)) / 2;
    return a;
}

Matrix gradient_oracle(const Matrix& x) {
    auto diff = [](const std::vector<double>& v, std::size_t i) {
        if (v.size() < 2) return 0.0;
        if (i == 0) return v[1] - v[0];
        if (i == v.size() - 1) return v[i] - v[i - 1];
        return (v[i + 1] - v[i - 1]) / 2;
    };
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            std::vector<double> row, col;
            for (Eigen::Index k = 0; k < x.cols(); ++k) row.push_back(x(r, k));
            for (Eigen::Index k = 0; k < x.rows(); ++k) col.push_back(x(k, c));
            const double gx = diff(row, static_cast<std::size_t>(c)), gy = diff(col, static_cast<std::size_t>(r));
            g(r, c) = std::sqrt(gx * gx + gy * gy);
        }
    return g;
}

void check_close(const Matrix& a, const Matrix& b, double tol = 1e-9) {
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    CHECK((a - b).cwiseAbs().maxCoeff() <= tol * std::max(1.0, b.cwiseAbs().maxCoeff()));
}

std::array<double, 8> descriptor_oracle(const Descriptor& d) {
    std::vector<double> v(d.begin(), d.end());
    double min_pos = 0;
    int zeros = 0;
    for (double x : v) {
        zeros += x == 0;
        if (x > 0 && (min_pos == 0 || x < min_pos)) min_pos = x;
    }
    Matrix m(16, 8);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 8; ++c) m(r, c) = v[static_cast<std::size_t>(r * 8 + c)];
    const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    return {oracle::mean(v), oracle::median(v), oracle::sample_std(v), oracle::covariance_scalar(m),
            hi - lo, min_pos, hi, static_cast<double>(zeros)};
}

std::vector<double> glcm_oracle(const Matrix& m, bool all_directions) {
    const std::array<std::pair<int, int>, 4> offsets = {{{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};
    std::vector<double> out;
    for (std::size_t d = 0; d < (all_directions ? 4u : 1u); ++d)
        for (double v : oracle::glcm_props(oracle::glcm(m, offsets[d].first, offsets[d].second))) out.push_back(v);
    return out;
}

}  // namespace

TEST_CASE("rectangle_size") {
    const std::vector<int> rows = {230, 400, 580}, cols = {390, 600, 760};
    CHECK(rectangle_size(rows, cols) == 61);
    const std::vector<int> hundred = {100};
    CHECK(rectangle_size(hundred, hundred) == 11);
    const std::vector<int> r20 = {20}, c14 = {14};
    CHECK(rectangle_size(r20, c14) == 3);
    CHECK_THROWS(rectangle_size(std::vector<int>{}, hundred));
}

TEST_CASE("extract_patch clips at the borders") {
    GrayImage img(101, 101);
    for (int y = 0; y < 101; ++y)
        for (int x = 0; x < 101; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 3) % 256);
    const auto center = extract_patch(img, 50, 50, 11);
    CHECK(center.rows() == 11);
    CHECK(center.cols() == 11);
    for (int r = 0; r < 11; ++r)
        for (int c = 0; c < 11; ++c) CHECK(center(r, c) == img.at(45 + c, 45 + r));
    const auto corner = extract_patch(img, 0, 0, 11);
    CHECK(corner.rows() == 6);
    CHECK(corner.cols() == 6);
    CHECK(corner(5, 2) == img.at(2, 5));
    CHECK_THROWS(extract_patch(img, 101, 0, 11));
}

TEST_CASE("transforms of a constant patch") {
    const Matrix c = Matrix::Constant(6, 6, 3.0);
    const auto ts = transform_stack(c);
    CHECK(ts.dct(0, 0) == doctest::Approx(18.0));
    Matrix rest = ts.dct;
    rest(0, 0) = 0;
    CHECK(rest.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ts.gradient.cwiseAbs().maxCoeff() == 0.0);
    CHECK((ts.approximation.array() == 6.0).all());
}

TEST_CASE("haar approximation hand example") {
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    const auto a = haar_approximation(m);
    REQUIRE(a.size() == 1);
    CHECK(a(0, 0) == 5.0);
}

TEST_CASE("transforms match direct oracles on random patches") {
    std::mt19937_64 rng(11);
    for (auto [r, c] : {std::pair{8, 8}, std::pair{7, 5}, std::pair{11, 11}, std::pair{6, 9}}) {
        const auto m = random_matrix(rng, r, c);
        check_close(dct2(m), oracle::dct2(m));
        check_close(haar_approximation(m), haar_oracle(m));
        check_close(gradient_magnitude(m), gradient_oracle(m));
    }
}

TEST_CASE("stats8") {
    const auto constant = stats8(Matrix::Constant(3, 4, 2.5)).values;
    const std::array<double, 8> want = {2.5, 2.5, 0, 0, 2.5, 0, 2.5, 2.5};
    for (std::size_t i = 0; i < 8; ++i) CHECK(constant[i] == doctest::Approx(want[i]));

    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    const auto s = stats8(m).values;
    CHECK(s[0] == 2.5);
    CHECK(s[1] == 2.5);
    CHECK(s[2] == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(s[3] == doctest::Approx(2.0));  // cov([1,3],[2,4]) = 2
    CHECK(s[4] == 1.0);
    CHECK(s[5] == 3.0);
    CHECK(s[6] == 1.0);
    CHECK(s[7] == 4.0);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto r = random_matrix(rng, 9, 7, 0, 20);
        const auto got = stats8(r).values;
        const auto oracle_values = oracle::stats8(r);
        for (std::size_t i = 0; i < 8; ++i) CHECK(got[i] == doctest::Approx(oracle_values[i]).epsilon(1e-12));

        Matrix permuted = r.colwise().reverse();
        const auto p = stats8(permuted).values;
        for (std::size_t i : {0u, 1u, 4u, 5u, 6u, 7u}) CHECK(p[i] == doctest::Approx(got[i]));
    }
}

TEST_CASE("covariance of a single column is undefined") {
    bool undefined = false;
    CHECK(covariance_scalar(Matrix::Ones(5, 1), &undefined) == 0.0);
    CHECK(undefined);
    CHECK(stats8(Matrix::Ones(5, 1)).covariance_undefined);
}

TEST_CASE("quantized mode ties go to the smallest value") {
    const std::vector<double> v = {3.0, 1.0, 3.0, 1.0, 2.0};
    CHECK(quantized_mode(v) == 1.0);
    const std::vector<double> near = {0.5, 0.5000000001, 0.7};
    CHECK(quantized_mode(near) == doctest::Approx(0.5));
}

TEST_CASE("descriptor features") {
    Descriptor zero{};
    const auto z = descriptor_features(zero);
    CHECK(z.values[7] == 128);
    CHECK(z.values[5] == 0);
    CHECK(z.all_zero);

    Descriptor one{};
    one[127] = 5;
    const auto o = descriptor_features(one);
    CHECK(o.values[7] == 127);
    CHECK(o.values[5] == 5);
    CHECK(o.values[6] == 5);
    CHECK_FALSE(o.all_zero);

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        const auto d = random_descriptor(rng);
        const auto got = descriptor_features(d).values;
        const auto want = descriptor_oracle(d);
        for (std::size_t i = 0; i < 8; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("glcm of a constant matrix") {
    const auto f = glcm_features(Matrix::Constant(4, 4, 9.0), kAllDirections);
    REQUIRE(f.values.size() == 16);
    for (int d = 0; d < 4; ++d) {
        CHECK(f.values[static_cast<std::size_t>(4 * d)] == 0.0);
        CHECK(f.values[static_cast<std::size_t>(4 * d + 1)] == 0.0);
        CHECK(f.values[static_cast<std::size_t>(4 * d + 2)] == doctest::Approx(1.0));
        CHECK(f.values[static_cast<std::size_t>(4 * d + 3)] == doctest::Approx(1.0));
    }
    CHECK(f.correlation_undefined);
}

TEST_CASE("glcm of a two-level checkerboard") {
    Matrix m(2, 2);
    m << 0, 1, 1, 0;
    // Levels 0 and 7. At 0 degrees the two horizontal pairs (0,7), (7,0) are each counted both ways.
    const auto p = glcm(m, GlcmDirection::Deg0);
    CHECK(p(0, 7) == doctest::Approx(0.5));
    CHECK(p(7, 0) == doctest::Approx(0.5));
    CHECK(p.sum() == doctest::Approx(1.0));
    const std::array<GlcmDirection, 1> zero_deg = {GlcmDirection::Deg0};
    const auto f = glcm_features(m, zero_deg);
    CHECK(f.values[0] == doctest::Approx(49.0));
    CHECK(f.values[1] == doctest::Approx(-1.0));
    CHECK(f.values[2] == doctest::Approx(0.5));
    CHECK(f.values[3] == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("glcm at 90 degrees equals 0 degrees of the transpose") {
    std::mt19937_64 rng(23);
    const auto m = random_matrix(rng, 6, 9);
    const Matrix t = m.transpose();
    const auto a = glcm(m, GlcmDirection::Deg90);
    const auto b = glcm(t, GlcmDirection::Deg0);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("glcm features match the counting oracle") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = random_matrix(rng, 7, 6);
        const auto got = glcm_features(m, kAllDirections).values;
        const auto want = glcm_oracle(m, true);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("feature schema has 108 unique names") {
    const auto& s = feature_schema();
    CHECK(s.size() == 108);
    CHECK(std::set<std::string>(s.begin(), s.end()).size() == 108);
    CHECK(statistic_names()[0] == "mean");
    CHECK(statistic_names()[2] == "mode");
}

TEST_CASE("seed feature row is the concatenation of the individual oracles") {
    std::mt19937_64 rng(31);
    GrayImage img(40, 30);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(d(rng));
    SeedPoint seed;
    seed.x = 12;
    seed.y = 9;
    seed.descriptor = random_descriptor(rng);
    const int z = 9;

    Matrix patch(9, 9);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) patch(r, c) = img.at(8 + c, 5 + r);
    const std::array<Matrix, 4> sources = {patch, oracle::dct2(patch), haar_oracle(patch), gradient_oracle(patch)};

    std::vector<double> want;
    for (const auto& m : sources)
        for (double v : oracle::stats8(m)) want.push_back(v);
    for (double v : descriptor_oracle(seed.descriptor)) want.push_back(v);
    for (const auto& m : sources)
        for (double v : glcm_oracle(m, true)) want.push_back(v);
    Matrix dm(16, 8);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 8; ++c) dm(r, c) = seed.descriptor[static_cast<std::size_t>(r * 8 + c)];
    for (double v : glcm_oracle(dm, false)) want.push_back(v);
    REQUIRE(want.size() == 108);

    const auto row = seed_features(img, seed, z);
    for (std::size_t i = 0; i < 108; ++i) {
        CAPTURE(feature_schema()[i]);
        CHECK(row.values[i] == doctest::Approx(want[i]).epsilon(1e-9).scale(1.0));
    }
    CHECK(row.replaced_nonfinite == 0);

    const std::vector<SeedPoint> one = {seed};
    const auto f1 = build_f1(img, one, z);
    CHECK(f1.rows() == 1);
    CHECK(f1.cols() == 108);
    CHECK(build_f1(img, one, z) == f1);
}

TEST_CASE("build_f2 statistics per column") {
    std::mt19937_64 rng(37);
    const auto f1 = random_matrix(rng, 5, 108, 0, 10);
    const auto f2 = build_f2(f1);
    REQUIRE(f2.values.rows() == 8);
    REQUIRE(f2.values.cols() == 108);
    CHECK_FALSE(f2.single_row);
    for (Eigen::Index c = 0; c < 108; ++c) {
        std::vector<double> col(f1.col(c).data(), f1.col(c).data() + 5);
        const double lo = *std::min_element(col.begin(), col.end()), hi = *std::max_element(col.begin(), col.end());
        const double sd = oracle::sample_std(col);
        const std::array<double, 8> want = {oracle::mean(col), oracle::median(col), oracle::mode(col), sd,
                                            sd * sd, hi - lo, lo, hi};
        for (Eigen::Index s = 0; s < 8; ++s) CHECK(f2.values(s, c) == doctest::Approx(want[static_cast<std::size_t>(s)]));
    }

    Matrix same(4, 108);
    for (Eigen::Index r = 0; r < 4; ++r) same.row(r) = f1.row(0);
    const auto g = build_f2(same);
    CHECK(g.values.row(0).isApprox(f1.row(0)));
    CHECK(g.values.row(3).cwiseAbs().maxCoeff() == 0.0);

    const auto single = build_f2(f1.topRows(1));
    CHECK(single.single_row);
    CHECK(single.values.row(3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(single.values.row(4).cwiseAbs().maxCoeff() == 0.0);
}
