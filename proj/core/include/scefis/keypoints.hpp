#pragma once

#include <array>
#include <vector>

#include "scefis/image.hpp"

namespace scefis {

inline constexpr std::size_t kDescriptorLength = 128;

using Descriptor = std::array<double, kDescriptorLength>;

struct SeedPoint {
    int x = 0;
    int y = 0;
    Descriptor descriptor{};
    double response = 0.0;
    bool fallback = false;  ///< synthesized because no interest point was usable

    friend bool operator==(const SeedPoint&, const SeedPoint&) = default;
};

/// Difference-of-Gaussians detector settings. Contrast threshold is on the [0,1] intensity scale.
struct DetectorOptions {
    int octaves = 4;
    int scales_per_octave = 3;
    double sigma = 1.6;
    double assumed_blur = 0.5;
    double contrast_threshold = 0.03;
    double edge_ratio = 10.0;
};

/// Scale-space extrema with 4x4x8 gradient-orientation descriptors, quantized to
/// integers in [0,255] after the usual normalize / clip(0.2) / renormalize steps.
/// Requires an image of at least 16x16.
std::vector<SeedPoint> detect_interest_points(const GrayImage& img, const DetectorOptions& opts = {});

/// L1 norm of the descriptor, the seed ordering key.
double salience(const SeedPoint& p) noexcept;

struct SeedSelection {
    std::vector<SeedPoint> seeds;
    bool fallback = false;
};

/// Sorts by salience (desc), response (desc), then (y, x); greedily keeps points whose
/// Chebyshev distance to every kept point is at least `z`. An empty input yields one
/// fallback seed at the image center.
SeedSelection select_seeds(std::vector<SeedPoint> points, int z, const GrayImage& img);

}  // namespace scefis
