#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "scefis/image.hpp"
#include "scefis/keypoints.hpp"
#include "scefis/transforms.hpp"

namespace scefis {

/// Per-seed feature count: 32 patch statistics + 8 descriptor statistics
/// + 64 patch texture features + 4 descriptor texture features.
inline constexpr std::size_t kFeatureCount = 108;
/// Statistics rows per image in the image-level feature block.
inline constexpr std::size_t kStatisticCount = 8;

/// Side of the square feature window: round(0.1 * max(median rows, median cols)),
/// forced odd, at least 3.
int rectangle_size(std::span<const int> row_sizes, std::span<const int> col_sizes);

/// Z x Z window centered on the seed, clipped at the image borders.
Matrix extract_patch(const GrayImage& img, int x, int y, int z);

struct TransformStack {
    Matrix dct;
    Matrix approximation;
    Matrix gradient;
};

TransformStack transform_stack(const Matrix& patch);

double median(std::vector<double> values);
/// Most frequent value on a 1e-6 grid; ties resolve to the smallest value.
double quantized_mode(std::span<const double> values);
/// Sample standard deviation (n - 1); 0 for a single value.
double sample_stddev(std::span<const double> values);

/// Mean of the strict upper triangle of the column covariance matrix (sample, n - 1).
/// `undefined` is set for single-column or single-row input, where the value is 0.
double covariance_scalar(const Matrix& m, bool* undefined = nullptr);

/// mean, median, std, co-variance, mode, range, min, max
struct Stats8 {
    std::array<double, 8> values{};
    bool covariance_undefined = false;
};

Stats8 stats8(const Matrix& m);

/// mean, median, std, co-variance (16x8 reshape), range, min-after-zero, max, zero population
struct DescriptorStats {
    std::array<double, 8> values{};
    bool all_zero = false;
};

DescriptorStats descriptor_features(const Descriptor& d);

/// Descriptor as a 16x8 matrix, one row per spatial cell.
Matrix descriptor_matrix(const Descriptor& d);

enum class GlcmDirection { Deg0, Deg45, Deg90, Deg135 };

inline constexpr std::array<GlcmDirection, 4> kAllDirections = {GlcmDirection::Deg0, GlcmDirection::Deg45,
                                                                 GlcmDirection::Deg90, GlcmDirection::Deg135};
inline constexpr int kGlcmLevels = 8;

/// Symmetric, normalized 8x8 co-occurrence matrix at distance 1.
Eigen::Matrix<double, kGlcmLevels, kGlcmLevels> glcm(const Matrix& m, GlcmDirection dir);

/// Quantization to kGlcmLevels gray levels by min-max scaling.
Eigen::MatrixXi quantize_levels(const Matrix& m);

struct GlcmFeatures {
    /// contrast, correlation, energy, homogeneity per direction, in direction order
    std::vector<double> values;
    bool correlation_undefined = false;
};

GlcmFeatures glcm_features(const Matrix& m, std::span<const GlcmDirection> directions);

/// Ordered feature names; column i of every F1/F2 has the meaning of name i.
const std::vector<std::string>& feature_schema();

struct FeatureRow {
    std::array<double, kFeatureCount> values{};
    int replaced_nonfinite = 0;
};

FeatureRow seed_features(const GrayImage& img, const SeedPoint& seed, int z);

/// N_F x 108 matrix, one row per seed.
Matrix build_f1(const GrayImage& img, std::span<const SeedPoint> seeds, int z);

/// Statistic row names in order: mean, median, mode, std, co-variance, range, min, max.
const std::array<std::string, kStatisticCount>& statistic_names();

struct ImageFeatureBlock {
    Matrix values;  ///< 8 x 108
    bool single_row = false;
};

/// Column-wise statistics of F1. For a column vector the co-variance is its variance.
ImageFeatureBlock build_f2(const Matrix& f1);

}  // namespace scefis
