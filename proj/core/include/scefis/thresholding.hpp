#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "scefis/image.hpp"

namespace scefis {

/// Which side of a global threshold is labeled object.
enum class Orientation {
    DarkObject,    ///< intensity <= t is object
    BrightObject,  ///< intensity > t is object
};

std::string_view to_string(Orientation o) noexcept;
Orientation orientation_from_string(std::string_view s);

BinaryMask apply_threshold(const GrayImage& img, int t, Orientation orientation = Orientation::DarkObject);

/// Per-threshold criterion values; std::nullopt where the criterion is undefined
/// (e.g. an empty class).
using CriterionCurve = std::array<std::optional<double>, 256>;

/// Relative tolerance under which two criterion values count as a tie.
inline constexpr double kCriterionTieTolerance = 1e-12;

/// Index of the best defined entry of `curve`; ties (within kCriterionTieTolerance)
/// resolve to the smallest threshold. Returns nullopt when nothing is defined.
std::optional<int> select_extremum(const CriterionCurve& curve, bool maximize);

struct ThresholdResult {
    int threshold = 0;
    double criterion = 0.0;
    bool degenerate = false;  ///< fewer than two populated bins
    bool fallback = false;    ///< criterion unusable; Otsu threshold returned instead
};

CriterionCurve otsu_criterion(const Histogram& hist);
ThresholdResult otsu(const Histogram& hist);

inline constexpr double kKittlerVarianceFloor = 1e-6;

CriterionCurve kittler_criterion(const Histogram& hist);
ThresholdResult kittler(const Histogram& hist);

CriterionCurve huang_criterion(const Histogram& hist);
ThresholdResult huang(const Histogram& hist);

struct TizhooshOptions {
    double alpha = 2.0;
    /// Half-width of the S-shaped membership window, in gray levels.
    int half_width = 32;
};

/// S-function with breakpoints a < b=(a+c)/2 < c.
double s_membership(double g, double a, double c) noexcept;

CriterionCurve tizhoosh_criterion(const Histogram& hist, const TizhooshOptions& opts = {});
ThresholdResult tizhoosh_interval(const Histogram& hist, const TizhooshOptions& opts = {});

struct NiblackOptions {
    int window = 25;
    double k = -0.2;
    Orientation orientation = Orientation::DarkObject;
};

BinaryMask niblack(const GrayImage& img, const NiblackOptions& opts = {});

/// Local Niblack threshold surface (mean + k * stddev over the clamped window), row-major.
std::vector<double> niblack_thresholds(const GrayImage& img, int window, double k);

struct SegmentationScore {
    double jaccard = 0.0;
    bool both_empty = false;
};

SegmentationScore jaccard(const BinaryMask& s, const BinaryMask& g);

struct MaaOptions {
    Orientation orientation = Orientation::DarkObject;
    bool both_orientations = false;
};

struct MaaResult {
    int t_star = 0;
    double j_max = 0.0;
    Orientation orientation = Orientation::DarkObject;
};

/// Exhaustive search over all 256 global thresholds for the best Jaccard against `gold`.
MaaResult maa_search(const GrayImage& img, const BinaryMask& gold, const MaaOptions& opts = {});

}  // namespace scefis
