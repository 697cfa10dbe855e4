#pragma once

#include <Eigen/Dense>

namespace scefis {

using Matrix = Eigen::MatrixXd;

/// Orthonormal 2-D DCT-II.
Matrix dct2(const Matrix& x);

/// Level-1 Haar approximation with sum-over-two scaling per axis: each output is
/// (a + b + c + d) / 2 over a 2x2 block, so a constant c maps to 2c. Odd sides are
/// extended by replicating the last row/column, giving ceil(n/2) outputs.
Matrix haar_approximation(const Matrix& x);

/// Per-pixel gradient magnitude: central differences inside, one-sided at the borders.
Matrix gradient_magnitude(const Matrix& x);

}  // namespace scefis
