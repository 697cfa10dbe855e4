#include "scefis/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace scefis {

int rectangle_size(std::span<const int> row_sizes, std::span<const int> col_sizes) {
    if (row_sizes.empty() || col_sizes.empty()) throw std::invalid_argument("rectangle_size: no image sizes given");
    auto med = [](std::span<const int> s) { return median(std::vector<double>(s.begin(), s.end())); };
    int z = static_cast<int>(std::lround(0.1 * std::max(med(row_sizes), med(col_sizes))));
    if (z % 2 == 0) ++z;
    return std::max(z, 3);
}

Matrix extract_patch(const GrayImage& img, int x, int y, int z) {
    if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) {
        throw std::out_of_range("extract_patch: seed outside image");
    }
    const int half = z / 2;
    const int x0 = std::max(0, x - half), x1 = std::min(img.width() - 1, x + half);
    const int y0 = std::max(0, y - half), y1 = std::min(img.height() - 1, y + half);
    Matrix p(y1 - y0 + 1, x1 - x0 + 1);
    for (int r = y0; r <= y1; ++r)
        for (int c = x0; c <= x1; ++c) p(r - y0, c - x0) = img.at(c, r);
    return p;
}

TransformStack transform_stack(const Matrix& patch) {
    return {dct2(patch), haar_approximation(patch), gradient_magnitude(patch)};
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    const auto n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(values.begin(), mid);
    return 0.5 * (lo + hi);
}

double quantized_mode(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mode of empty set");
    std::map<long long, int> counts;
    for (double v : values) ++counts[std::llround(v * 1e6)];
    long long best = counts.begin()->first;
    int best_count = 0;
    for (const auto& [q, c] : counts) {
        if (c > best_count) {
            best = q;
            best_count = c;
        }
    }
    return static_cast<double>(best) / 1e6;
}

double sample_stddev(std::span<const double> values) {
    const auto n = values.size();
    if (n < 2) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double covariance_scalar(const Matrix& m, bool* undefined) {
    if (m.cols() < 2 || m.rows() < 2) {
        if (undefined) *undefined = true;
        return 0.0;
    }
    if (undefined) *undefined = false;
    const Matrix centered = m.rowwise() - m.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(m.rows() - 1);
    double sum = 0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        for (Eigen::Index j = i + 1; j < cov.cols(); ++j) sum += cov(i, j);
    const double pairs = static_cast<double>(cov.rows() * (cov.rows() - 1) / 2);
    return sum / pairs;
}

namespace {

std::vector<double> flatten(const Matrix& m) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    return v;
}

}  // namespace

Stats8 stats8(const Matrix& m) {
    if (m.size() == 0) throw std::invalid_argument("stats8 of empty matrix");
    const auto v = flatten(m);
    Stats8 s;
    const double mn = m.minCoeff();
    const double mx = m.maxCoeff();
    s.values = {m.mean(), median(v), sample_stddev(v), covariance_scalar(m, &s.covariance_undefined),
                quantized_mode(v), mx - mn, mn, mx};
    return s;
}

Matrix descriptor_matrix(const Descriptor& d) {
    Matrix m(16, 8);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 8; ++c) m(r, c) = d[static_cast<std::size_t>(r * 8 + c)];
    return m;
}

DescriptorStats descriptor_features(const Descriptor& d) {
    DescriptorStats out;
    const std::vector<double> v(d.begin(), d.end());
    const double mn = *std::min_element(v.begin(), v.end());
    const double mx = *std::max_element(v.begin(), v.end());
    double min_positive = 0.0;
    bool found = false;
    int zeros = 0;
    for (double x : v) {
        if (x == 0.0) ++zeros;
        if (x > 0.0 && (!found || x < min_positive)) {
            min_positive = x;
            found = true;
        }
    }
    out.all_zero = !found;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    out.values = {mean, median(v), sample_stddev(v), covariance_scalar(descriptor_matrix(d)),
                  mx - mn, min_positive, mx, static_cast<double>(zeros)};
    return out;
}

Eigen::MatrixXi quantize_levels(const Matrix& m) {
    const double lo = m.minCoeff();
    const double hi = m.maxCoeff();
    Eigen::MatrixXi q = Eigen::MatrixXi::Zero(m.rows(), m.cols());
    if (!(hi > lo)) return q;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const int level = static_cast<int>(std::floor((m(r, c) - lo) / (hi - lo) * kGlcmLevels));
            q(r, c) = std::clamp(level, 0, kGlcmLevels - 1);
        }
    }
    return q;
}

namespace {

std::pair<int, int> offset(GlcmDirection dir) {
    switch (dir) {
        case GlcmDirection::Deg0: return {0, 1};
        case GlcmDirection::Deg45: return {-1, 1};
        case GlcmDirection::Deg90: return {-1, 0};
        case GlcmDirection::Deg135: return {-1, -1};
    }
    return {0, 1};
}

}  // namespace

Eigen::Matrix<double, kGlcmLevels, kGlcmLevels> glcm(const Matrix& m, GlcmDirection dir) {
    const auto q = quantize_levels(m);
    const auto [dr, dc] = offset(dir);
    Eigen::Matrix<double, kGlcmLevels, kGlcmLevels> p = Eigen::Matrix<double, kGlcmLevels, kGlcmLevels>::Zero();
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
        for (Eigen::Index c = 0; c < q.cols(); ++c) {
            const Eigen::Index r2 = r + dr, c2 = c + dc;
            if (r2 < 0 || r2 >= q.rows() || c2 < 0 || c2 >= q.cols()) continue;
            p(q(r, c), q(r2, c2)) += 1.0;
            p(q(r2, c2), q(r, c)) += 1.0;
        }
    }
    const double total = p.sum();
    if (total > 0) {
        p /= total;
    } else {
        // No pixel pairs along this direction: treat as a single co-occurrence cell.
        p(q(0, 0), q(0, 0)) = 1.0;
    }
    return p;
}

GlcmFeatures glcm_features(const Matrix& m, std::span<const GlcmDirection> directions) {
    if (m.size() == 0) throw std::invalid_argument("glcm of empty matrix");
    GlcmFeatures out;
    for (auto dir : directions) {
        const auto p = glcm(m, dir);
        double mi = 0, mj = 0;
        for (int i = 0; i < kGlcmLevels; ++i)
            for (int j = 0; j < kGlcmLevels; ++j) {
                mi += i * p(i, j);
                mj += j * p(i, j);
            }
        double vi = 0, vj = 0, contrast = 0, energy = 0, homogeneity = 0, cov = 0;
        for (int i = 0; i < kGlcmLevels; ++i)
            for (int j = 0; j < kGlcmLevels; ++j) {
                const double pij = p(i, j);
                vi += (i - mi) * (i - mi) * pij;
                vj += (j - mj) * (j - mj) * pij;
                cov += (i - mi) * (j - mj) * pij;
                contrast += (i - j) * (i - j) * pij;
                energy += pij * pij;
                homogeneity += pij / (1.0 + std::abs(i - j));
            }
        double correlation = 0.0;
        if (vi > 0 && vj > 0) {
            correlation = cov / std::sqrt(vi * vj);
        } else {
            out.correlation_undefined = true;
        }
        out.values.insert(out.values.end(), {contrast, correlation, energy, homogeneity});
    }
    return out;
}

const std::vector<std::string>& feature_schema() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        const std::array<std::string, 4> sources = {"rc", "dc", "ac", "gm"};
        const std::array<std::string, 8> stats = {"mean", "median", "std", "cov", "mode", "range", "min", "max"};
        for (const auto& s : sources)
            for (const auto& st : stats) n.push_back(s + "." + st);
        for (const auto& st : {"mean", "median", "std", "cov", "range", "min_nonzero", "max", "zero_count"}) {
            n.push_back(std::string("ds.") + st);
        }
        const std::array<std::string, 4> props = {"contrast", "correlation", "energy", "homogeneity"};
        const std::array<std::string, 4> degs = {"0", "45", "90", "135"};
        for (const auto& s : sources)
            for (const auto& d : degs)
                for (const auto& p : props) n.push_back(s + ".glcm" + d + "." + p);
        for (const auto& p : props) n.push_back("ds.glcm0." + p);
        return n;
    }();
    return names;
}

FeatureRow seed_features(const GrayImage& img, const SeedPoint& seed, int z) {
    const Matrix patch = extract_patch(img, seed.x, seed.y, z);
    const auto ts = transform_stack(patch);
    const std::array<const Matrix*, 4> sources = {&patch, &ts.dct, &ts.approximation, &ts.gradient};

    FeatureRow row;
    std::size_t k = 0;
    for (const auto* m : sources) {
        for (double v : stats8(*m).values) row.values[k++] = v;
    }
    for (double v : descriptor_features(seed.descriptor).values) row.values[k++] = v;
    for (const auto* m : sources) {
        for (double v : glcm_features(*m, kAllDirections).values) row.values[k++] = v;
    }
    const std::array<GlcmDirection, 1> zero_deg = {GlcmDirection::Deg0};
    for (double v : glcm_features(descriptor_matrix(seed.descriptor), zero_deg).values) row.values[k++] = v;

    for (auto& v : row.values) {
        if (!std::isfinite(v)) {
            v = 0.0;
            ++row.replaced_nonfinite;
        }
    }
    if (row.replaced_nonfinite > 0) {
        spdlog::warn("seed ({}, {}): replaced {} non-finite feature values with 0", seed.x, seed.y,
                     row.replaced_nonfinite);
    }
    return row;
}

Matrix build_f1(const GrayImage& img, std::span<const SeedPoint> seeds, int z) {
    if (seeds.empty()) throw std::invalid_argument("build_f1 needs at least one seed");
    Matrix f1(static_cast<Eigen::Index>(seeds.size()), static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto row = seed_features(img, seeds[i], z);
        for (std::size_t c = 0; c < kFeatureCount; ++c) {
            f1(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row.values[c];
        }
    }
    return f1;
}

const std::array<std::string, kStatisticCount>& statistic_names() {
    static const std::array<std::string, kStatisticCount> names = {"mean", "median", "mode", "std",
                                                                   "cov", "range", "min", "max"};
    return names;
}

ImageFeatureBlock build_f2(const Matrix& f1) {
    if (f1.rows() == 0) throw std::invalid_argument("build_f2 of empty F1");
    ImageFeatureBlock out;
    out.single_row = f1.rows() == 1;
    out.values.resize(static_cast<Eigen::Index>(kStatisticCount), f1.cols());
    for (Eigen::Index c = 0; c < f1.cols(); ++c) {
        std::vector<double> col(static_cast<std::size_t>(f1.rows()));
        for (Eigen::Index r = 0; r < f1.rows(); ++r) col[static_cast<std::size_t>(r)] = f1(r, c);
        const double mn = *std::min_element(col.begin(), col.end());
        const double mx = *std::max_element(col.begin(), col.end());
        const double sd = sample_stddev(col);
        const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
        const std::array<double, kStatisticCount> s = {mean, median(col), quantized_mode(col), sd, sd * sd,
                                                       mx - mn, mn, mx};
        for (std::size_t r = 0; r < kStatisticCount; ++r) out.values(static_cast<Eigen::Index>(r), c) = s[r];
    }
    return out;
}

}  // namespace scefis
