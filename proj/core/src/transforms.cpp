#include "scefis/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace scefis {

namespace {

Matrix dct_basis(Eigen::Index n) {
    Matrix c(n, n);
    const double nn = static_cast<double>(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double a = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
        for (Eigen::Index i = 0; i < n; ++i) {
            c(k, i) = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) * static_cast<double>(k) / (2.0 * nn));
        }
    }
    return c;
}

// One-dimensional numpy-style gradient along a line of samples.
double axis_diff(const Matrix& x, Eigen::Index r, Eigen::Index c, bool along_rows) {
    const Eigen::Index n = along_rows ? x.rows() : x.cols();
    const Eigen::Index i = along_rows ? r : c;
    if (n < 2) return 0.0;
    auto at = [&](Eigen::Index j) { return along_rows ? x(j, c) : x(r, j); };
    if (i == 0) return at(1) - at(0);
    if (i == n - 1) return at(n - 1) - at(n - 2);
    return 0.5 * (at(i + 1) - at(i - 1));
}

}  // namespace

Matrix dct2(const Matrix& x) {
    const Matrix cr = dct_basis(x.rows());
    const Matrix cc = dct_basis(x.cols());
    return cr * x * cc.transpose();
}

Matrix haar_approximation(const Matrix& x) {
    const Eigen::Index rows = (x.rows() + 1) / 2;
    const Eigen::Index cols = (x.cols() + 1) / 2;
    Matrix a(rows, cols);
    auto at = [&](Eigen::Index r, Eigen::Index c) {
        return x(std::min(r, x.rows() - 1), std::min(c, x.cols() - 1));
    };
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            a(r, c) = 0.5 * (at(2 * r, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c) + at(2 * r + 1, 2 * c + 1));
        }
    }
    return a;
}

Matrix gradient_magnitude(const Matrix& x) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            g(r, c) = std::hypot(axis_diff(x, r, c, false), axis_diff(x, r, c, true));
        }
    }
    return g;
}

}  // namespace scefis
