#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scefis/image.hpp"

namespace scefis {

/// Portable splitmix64-based generator; identical streams on every platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() noexcept;
    double uniform() noexcept;  ///< [0,1)
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double normal() noexcept;   ///< standard normal via Box-Muller

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SyntheticCase {
    std::string id;
    GrayImage image;
    BinaryMask gold;
};

struct SyntheticOptions {
    int count = 35;
    std::uint64_t seed = 20240601;
    int min_rows = 115;
    int max_rows = 290;
    int min_cols = 195;
    int max_cols = 380;
};

/// Ultrasound-like scenes: a dark elliptical lesion in speckled tissue with depth
/// attenuation and a dark near-field band, plus the exact lesion mask.
std::vector<SyntheticCase> generate_synthetic(const SyntheticOptions& opts = {});

/// Writes images/<id>.png and gold/<id>.png under `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticCase>& cases);

}  // namespace scefis
