#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace scefis {

/// 8-bit grayscale raster, row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, std::uint8_t fill = 0);
    GrayImage(int width, int height, std::vector<std::uint8_t> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::uint8_t at(int x, int y) const { return data_[index(x, y)]; }
    std::uint8_t& at(int x, int y) { return data_[index(x, y)]; }

    std::span<const std::uint8_t> pixels() const noexcept { return data_; }
    std::span<std::uint8_t> pixels() noexcept { return data_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Object/background labeling. 1 = object (white), 0 = background.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, std::uint8_t fill = 0);
    BinaryMask(int width, int height, std::vector<std::uint8_t> labels);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return labels_.size(); }

    std::uint8_t at(int x, int y) const { return labels_[index(x, y)]; }
    std::uint8_t& at(int x, int y) { return labels_[index(x, y)]; }

    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    std::span<std::uint8_t> labels() noexcept { return labels_; }

    std::size_t object_count() const noexcept;
    BinaryMask complement() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> labels_;
};

inline bool same_shape(const GrayImage& a, const BinaryMask& b) {
    return a.width() == b.width() && a.height() == b.height();
}
inline bool same_shape(const BinaryMask& a, const BinaryMask& b) {
    return a.width() == b.width() && a.height() == b.height();
}

class DimensionMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Histogram = std::array<std::uint64_t, 256>;

Histogram histogram(const GrayImage& img);

/// Histogram of the pixels of `img` that are labeled object in `mask`.
Histogram masked_histogram(const GrayImage& img, const BinaryMask& mask);

std::uint64_t total(const Histogram& hist) noexcept;

}  // namespace scefis
