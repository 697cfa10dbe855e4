#include "scefis/image.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace scefis {

namespace {

void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("raster dimensions must be positive, got " + std::to_string(width) + "x" +
                                    std::to_string(height));
    }
}

}  // namespace

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
    check_dims(width, height);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw DimensionMismatch("image data length does not match width x height");
    }
}

BinaryMask::BinaryMask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
    check_dims(width, height);
    labels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
    check_dims(width, height);
    if (labels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw DimensionMismatch("mask length does not match width x height");
    }
    if (std::any_of(labels_.begin(), labels_.end(), [](std::uint8_t v) { return v > 1; })) {
        throw std::invalid_argument("mask labels must be 0 or 1");
    }
}

std::size_t BinaryMask::object_count() const noexcept {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const {
    BinaryMask out = *this;
    for (auto& v : out.labels_) v = static_cast<std::uint8_t>(1 - v);
    return out;
}

Histogram histogram(const GrayImage& img) {
    Histogram h{};
    for (auto v : img.pixels()) ++h[v];
    return h;
}

Histogram masked_histogram(const GrayImage& img, const BinaryMask& mask) {
    if (!same_shape(img, mask)) throw DimensionMismatch("mask and image differ in size");
    Histogram h{};
    auto px = img.pixels();
    auto lb = mask.labels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (lb[i]) ++h[px[i]];
    }
    return h;
}

std::uint64_t total(const Histogram& hist) noexcept {
    return std::accumulate(hist.begin(), hist.end(), std::uint64_t{0});
}

}  // namespace scefis
