#include "scefis/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace scefis {

namespace {

constexpr int kBorder = 5;
constexpr int kMaxRefineSteps = 5;
constexpr int kOrientationBins = 36;
constexpr double kOrientationSigmaFactor = 1.5;
constexpr int kDescriptorWidth = 4;
constexpr int kDescriptorBins = 8;
constexpr double kDescriptorScale = 3.0;
constexpr double kDescriptorClip = 0.2;

struct Plane {
    int w = 0;
    int h = 0;
    std::vector<float> v;

    Plane() = default;
    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * static_cast<std::size_t>(h_), 0.0f) {}
    float operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
    float& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
};

std::vector<float> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        const double g = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = static_cast<float>(g);
        sum += g;
    }
    for (auto& x : k) x = static_cast<float>(x / sum);
    return k;
}

// Separable blur with edge replication.
Plane blur(const Plane& src, double sigma) {
    if (sigma <= 0) return src;
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    Plane tmp(src.w, src.h), out(src.w, src.h);
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            float acc = 0;
            for (int i = -r; i <= r; ++i) {
                const int xx = std::clamp(x + i, 0, src.w - 1);
                acc += k[static_cast<std::size_t>(i + r)] * src(xx, y);
            }
            tmp(x, y) = acc;
        }
    }
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            float acc = 0;
            for (int i = -r; i <= r; ++i) {
                const int yy = std::clamp(y + i, 0, src.h - 1);
                acc += k[static_cast<std::size_t>(i + r)] * tmp(x, yy);
            }
            out(x, y) = acc;
        }
    }
    return out;
}

Plane downsample(const Plane& src) {
    Plane out(std::max(1, src.w / 2), std::max(1, src.h / 2));
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out(x, y) = src(2 * x, 2 * y);
    return out;
}

struct Octave {
    std::vector<Plane> gauss;
    std::vector<Plane> dog;
};

std::vector<Octave> build_pyramid(const GrayImage& img, const DetectorOptions& opts) {
    Plane base(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) base(x, y) = static_cast<float>(img.at(x, y) / 255.0);
    base = blur(base, std::sqrt(std::max(0.01, opts.sigma * opts.sigma - opts.assumed_blur * opts.assumed_blur)));

    const int s = opts.scales_per_octave;
    const double k = std::pow(2.0, 1.0 / s);
    std::vector<double> increments(static_cast<std::size_t>(s + 3), 0.0);
    for (int i = 1; i < s + 3; ++i) {
        const double prev = opts.sigma * std::pow(k, i - 1);
        const double cur = prev * k;
        increments[static_cast<std::size_t>(i)] = std::sqrt(cur * cur - prev * prev);
    }

    std::vector<Octave> pyr;
    for (int o = 0; o < opts.octaves; ++o) {
        Plane first = o == 0 ? base : downsample(pyr.back().gauss[static_cast<std::size_t>(s)]);
        if (first.w < 2 * kBorder + 3 || first.h < 2 * kBorder + 3) break;
        Octave oct;
        oct.gauss.push_back(std::move(first));
        for (int i = 1; i < s + 3; ++i) {
            oct.gauss.push_back(blur(oct.gauss.back(), increments[static_cast<std::size_t>(i)]));
        }
        for (int i = 0; i + 1 < s + 3; ++i) {
            const auto& a = oct.gauss[static_cast<std::size_t>(i)];
            const auto& b = oct.gauss[static_cast<std::size_t>(i + 1)];
            Plane d(a.w, a.h);
            for (std::size_t j = 0; j < d.v.size(); ++j) d.v[j] = b.v[j] - a.v[j];
            oct.dog.push_back(std::move(d));
        }
        pyr.push_back(std::move(oct));
    }
    return pyr;
}

bool is_extremum(const Octave& oct, int layer, int x, int y) {
    const float v = oct.dog[static_cast<std::size_t>(layer)](x, y);
    const bool want_max = v > 0;
    for (int dl = -1; dl <= 1; ++dl) {
        const auto& p = oct.dog[static_cast<std::size_t>(layer + dl)];
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dx == 0 && dy == 0) continue;
                const float n = p(x + dx, y + dy);
                if (want_max ? n >= v : n <= v) return false;
            }
        }
    }
    return true;
}

struct Refined {
    int layer, x, y;
    double ox, oy, os;
    double contrast;
};

bool refine(const Octave& oct, int s, int layer, int x, int y, const DetectorOptions& opts, Refined& out) {
    Eigen::Vector3d offset;
    Eigen::Vector3d grad;
    for (int step = 0;; ++step) {
        const auto& prev = oct.dog[static_cast<std::size_t>(layer - 1)];
        const auto& cur = oct.dog[static_cast<std::size_t>(layer)];
        const auto& next = oct.dog[static_cast<std::size_t>(layer + 1)];
        const double v = cur(x, y);
        grad << 0.5 * (cur(x + 1, y) - cur(x - 1, y)), 0.5 * (cur(x, y + 1) - cur(x, y - 1)),
            0.5 * (next(x, y) - prev(x, y));
        const double dxx = cur(x + 1, y) + cur(x - 1, y) - 2 * v;
        const double dyy = cur(x, y + 1) + cur(x, y - 1) - 2 * v;
        const double dss = next(x, y) + prev(x, y) - 2 * v;
        const double dxy = 0.25 * (cur(x + 1, y + 1) - cur(x - 1, y + 1) - cur(x + 1, y - 1) + cur(x - 1, y - 1));
        const double dxs = 0.25 * (next(x + 1, y) - next(x - 1, y) - prev(x + 1, y) + prev(x - 1, y));
        const double dys = 0.25 * (next(x, y + 1) - next(x, y - 1) - prev(x, y + 1) + prev(x, y - 1));
        Eigen::Matrix3d hess;
        hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
        auto lu = hess.fullPivLu();
        if (!lu.isInvertible()) return false;
        offset = -lu.solve(grad);
        if (std::abs(offset[0]) < 0.5 && std::abs(offset[1]) < 0.5 && std::abs(offset[2]) < 0.5) {
            // Edge response on the 2x2 spatial Hessian.
            const double tr = dxx + dyy;
            const double det = dxx * dyy - dxy * dxy;
            const double r = opts.edge_ratio;
            if (det <= 0 || tr * tr * r >= (r + 1) * (r + 1) * det) return false;
            out = {layer, x, y, offset[0], offset[1], offset[2], v + 0.5 * grad.dot(offset)};
            return std::abs(out.contrast) >= opts.contrast_threshold / s;
        }
        if (step + 1 >= kMaxRefineSteps) return false;
        x += static_cast<int>(std::lround(offset[0]));
        y += static_cast<int>(std::lround(offset[1]));
        layer += static_cast<int>(std::lround(offset[2]));
        if (layer < 1 || layer > s || x < kBorder || x >= cur.w - kBorder || y < kBorder || y >= cur.h - kBorder) {
            return false;
        }
    }
}

double dominant_orientation(const Plane& g, int x, int y, double sigma) {
    const double ws = kOrientationSigmaFactor * sigma;
    const int radius = static_cast<int>(std::lround(3.0 * ws));
    std::array<double, kOrientationBins> hist{};
    for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy <= 0 || yy >= g.h - 1) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
            const int xx = x + dx;
            if (xx <= 0 || xx >= g.w - 1) continue;
            const double gx = g(xx + 1, yy) - g(xx - 1, yy);
            const double gy = g(xx, yy + 1) - g(xx, yy - 1);
            const double mag = std::hypot(gx, gy);
            const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * ws * ws));
            double ang = std::atan2(gy, gx);
            if (ang < 0) ang += 2 * std::numbers::pi;
            int bin = static_cast<int>(std::floor(ang / (2 * std::numbers::pi) * kOrientationBins));
            bin = std::clamp(bin, 0, kOrientationBins - 1);
            hist[static_cast<std::size_t>(bin)] += w * mag;
        }
    }
    std::array<double, kOrientationBins> smooth{};
    for (int i = 0; i < kOrientationBins; ++i) {
        auto at = [&](int j) { return hist[static_cast<std::size_t>((j + kOrientationBins) % kOrientationBins)]; };
        smooth[static_cast<std::size_t>(i)] =
            (at(i - 2) + at(i + 2)) / 16.0 + 4.0 * (at(i - 1) + at(i + 1)) / 16.0 + 6.0 * at(i) / 16.0;
    }
    const auto peak = static_cast<int>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
    const double l = smooth[static_cast<std::size_t>((peak + kOrientationBins - 1) % kOrientationBins)];
    const double r = smooth[static_cast<std::size_t>((peak + 1) % kOrientationBins)];
    const double c = smooth[static_cast<std::size_t>(peak)];
    const double denom = l - 2 * c + r;
    const double shift = std::abs(denom) > 1e-12 ? 0.5 * (l - r) / denom : 0.0;
    return (peak + 0.5 + shift) * 2 * std::numbers::pi / kOrientationBins;
}

Descriptor describe(const Plane& g, double fx, double fy, double sigma, double angle) {
    constexpr int d = kDescriptorWidth;
    constexpr int n = kDescriptorBins;
    const double hist_width = kDescriptorScale * sigma;
    const int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
    const double cos_t = std::cos(angle) / hist_width;
    const double sin_t = std::sin(angle) / hist_width;
    const double exp_scale = -1.0 / (0.5 * d * d);
    const int cx = static_cast<int>(std::lround(fx));
    const int cy = static_cast<int>(std::lround(fy));

    std::vector<double> hist(static_cast<std::size_t>((d + 2) * (d + 2) * (n + 2)), 0.0);
    auto cell = [&](int r, int c, int o) -> double& {
        return hist[static_cast<std::size_t>(((r * (d + 2)) + c) * (n + 2) + o)];
    };

    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const double x_rot = dx * cos_t - dy * sin_t;
            const double y_rot = dx * sin_t + dy * cos_t;
            const double rbin = y_rot + d / 2.0 - 0.5;
            const double cbin = x_rot + d / 2.0 - 0.5;
            if (rbin <= -1 || rbin >= d || cbin <= -1 || cbin >= d) continue;
            const int xx = cx + dx;
            const int yy = cy + dy;
            if (xx <= 0 || xx >= g.w - 1 || yy <= 0 || yy >= g.h - 1) continue;
            const double gx = g(xx + 1, yy) - g(xx - 1, yy);
            const double gy = g(xx, yy + 1) - g(xx, yy - 1);
            double ori = std::atan2(gy, gx) - angle;
            while (ori < 0) ori += 2 * std::numbers::pi;
            while (ori >= 2 * std::numbers::pi) ori -= 2 * std::numbers::pi;
            const double obin = ori * n / (2 * std::numbers::pi);
            const double mag = std::hypot(gx, gy) * std::exp((x_rot * x_rot + y_rot * y_rot) * exp_scale);

            const int r0 = static_cast<int>(std::floor(rbin));
            const int c0 = static_cast<int>(std::floor(cbin));
            int o0 = static_cast<int>(std::floor(obin));
            const double fr = rbin - r0, fc = cbin - c0, fo = obin - o0;
            o0 = (o0 + n) % n;
            for (int ir = 0; ir <= 1; ++ir) {
                const double wr = ir ? fr : 1 - fr;
                for (int ic = 0; ic <= 1; ++ic) {
                    const double wc = ic ? fc : 1 - fc;
                    for (int io = 0; io <= 1; ++io) {
                        const double wo = io ? fo : 1 - fo;
                        cell(r0 + 1 + ir, c0 + 1 + ic, (o0 + io) % n) += mag * wr * wc * wo;
                    }
                }
            }
        }
    }

    Descriptor desc{};
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            for (int o = 0; o < n; ++o) desc[static_cast<std::size_t>((r * d + c) * n + o)] = cell(r + 1, c + 1, o);

    auto l2 = [&] { return std::sqrt(std::inner_product(desc.begin(), desc.end(), desc.begin(), 0.0)); };
    double norm = l2();
    if (norm <= 0) return desc;
    const double clip = kDescriptorClip * norm;
    for (auto& v : desc) v = std::min(v, clip);
    norm = std::max(l2(), 1e-12);
    for (auto& v : desc) v = std::min(255.0, std::round(512.0 * v / norm));
    return desc;
}

}  // namespace

std::vector<SeedPoint> detect_interest_points(const GrayImage& img, const DetectorOptions& opts) {
    if (img.width() < 16 || img.height() < 16) {
        throw std::invalid_argument("interest point detection needs an image of at least 16x16");
    }
    const int s = opts.scales_per_octave;
    const auto pyr = build_pyramid(img, opts);
    const double prefilter = 0.5 * opts.contrast_threshold / s;

    std::vector<SeedPoint> points;
    for (std::size_t o = 0; o < pyr.size(); ++o) {
        const auto& oct = pyr[o];
        const double scale = std::ldexp(1.0, static_cast<int>(o));
        for (int layer = 1; layer <= s; ++layer) {
            const auto& dog = oct.dog[static_cast<std::size_t>(layer)];
            for (int y = kBorder; y < dog.h - kBorder; ++y) {
                for (int x = kBorder; x < dog.w - kBorder; ++x) {
                    if (std::abs(dog(x, y)) <= prefilter) continue;
                    if (!is_extremum(oct, layer, x, y)) continue;
                    Refined r{};
                    if (!refine(oct, s, layer, x, y, opts, r)) continue;
                    const double sigma_oct = opts.sigma * std::pow(2.0, (r.layer + r.os) / s);
                    const auto& g = oct.gauss[static_cast<std::size_t>(r.layer)];
                    const double angle = dominant_orientation(g, r.x, r.y, sigma_oct);
                    SeedPoint p;
                    p.descriptor = describe(g, r.x + r.ox, r.y + r.oy, sigma_oct, angle);
                    p.x = std::clamp(static_cast<int>(std::lround((r.x + r.ox) * scale)), 0, img.width() - 1);
                    p.y = std::clamp(static_cast<int>(std::lround((r.y + r.oy) * scale)), 0, img.height() - 1);
                    p.response = std::abs(r.contrast);
                    points.push_back(p);
                }
            }
        }
    }
    return points;
}

double salience(const SeedPoint& p) noexcept {
    double s = 0;
    for (double v : p.descriptor) s += std::abs(v);
    return s;
}

SeedSelection select_seeds(std::vector<SeedPoint> points, int z, const GrayImage& img) {
    if (z < 3) throw std::invalid_argument("seed separation must be >= 3");
    SeedSelection out;
    if (points.empty()) {
        SeedPoint c;
        c.x = img.width() / 2;
        c.y = img.height() / 2;
        c.fallback = true;
        out.seeds.push_back(c);
        out.fallback = true;
        return out;
    }
    std::vector<double> key(points.size());
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        key[i] = salience(points[i]);
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (key[a] != key[b]) return key[a] > key[b];
        if (points[a].response != points[b].response) return points[a].response > points[b].response;
        if (points[a].y != points[b].y) return points[a].y < points[b].y;
        return points[a].x < points[b].x;
    });
    for (auto i : order) {
        const auto& p = points[i];
        const bool separated = std::all_of(out.seeds.begin(), out.seeds.end(), [&](const SeedPoint& q) {
            return std::max(std::abs(p.x - q.x), std::abs(p.y - q.y)) >= z;
        });
        if (separated) out.seeds.push_back(p);
    }
    return out;
}

}  // namespace scefis
