#include "scefis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "scefis/image_io.hpp"

namespace scefis {

std::uint64_t SplitMix64::next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double SplitMix64::uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

std::vector<double> box_smooth(const std::vector<double>& v, int w, int h) {
    std::vector<double> out(v.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                    s += v[static_cast<std::size_t>(yy * w + xx)];
                    ++n;
                }
            }
            out[static_cast<std::size_t>(y * w + x)] = s / n;
        }
    }
    return out;
}

SyntheticCase make_case(SplitMix64& rng, int index, const SyntheticOptions& opts) {
    const int h = static_cast<int>(std::lround(rng.uniform(opts.min_rows, opts.max_rows)));
    const int w = static_cast<int>(std::lround(rng.uniform(opts.min_cols, opts.max_cols)));

    const double tissue = rng.uniform(85.0, 175.0);
    const double lesion = tissue * rng.uniform(0.35, 0.6);
    const double band = lesion + (tissue - lesion) * rng.uniform(0.25, 0.55);
    const double band_depth = rng.uniform(0.10, 0.22) * h;
    const double attenuation = rng.uniform(0.1, 0.35);
    const double speckle = rng.uniform(0.10, 0.22);
    const double noise = rng.uniform(4.0, 10.0);

    const double cx = rng.uniform(0.3, 0.7) * w;
    const double cy = band_depth + rng.uniform(0.3, 0.65) * (h - band_depth);
    const double rx = rng.uniform(0.08, 0.18) * w;
    const double ry = rng.uniform(0.10, 0.22) * h;
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);

    std::vector<std::uint8_t> labels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0);
    std::vector<double> level(labels.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = (dx * ca + dy * sa) / rx;
            const double v = (-dx * sa + dy * ca) / ry;
            const bool inside = u * u + v * v <= 1.0;
            const auto i = static_cast<std::size_t>(y * w + x);
            labels[i] = inside ? 1 : 0;
            double base = y < band_depth ? band : tissue;
            if (inside) base = lesion;
            level[i] = base * (1.0 - attenuation * y / h);
        }
    }

    std::vector<double> mult(level.size());
    for (auto& m : mult) m = 1.0 + speckle * rng.normal();
    mult = box_smooth(mult, w, h);

    std::vector<std::uint8_t> pixels(level.size());
    for (std::size_t i = 0; i < level.size(); ++i) {
        const double val = level[i] * mult[i] + noise * rng.normal();
        pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
    }

    char id[16];
    std::snprintf(id, sizeof id, "us%02d", index + 1);
    return {id, GrayImage(w, h, std::move(pixels)), BinaryMask(w, h, std::move(labels))};
}

}  // namespace

std::vector<SyntheticCase> generate_synthetic(const SyntheticOptions& opts) {
    SplitMix64 rng(opts.seed);
    std::vector<SyntheticCase> out;
    out.reserve(static_cast<std::size_t>(opts.count));
    for (int i = 0; i < opts.count; ++i) out.push_back(make_case(rng, i, opts));
    return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticCase>& cases) {
    for (const auto& c : cases) {
        write_png(dir / "images" / (c.id + ".png"), c.image);
        write_mask_png(dir / "gold" / (c.id + ".png"), c.gold);
    }
}

}  // namespace scefis
