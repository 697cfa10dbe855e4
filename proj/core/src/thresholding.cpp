#include "scefis/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

namespace scefis {

std::string_view to_string(Orientation o) noexcept {
    return o == Orientation::DarkObject ? "dark" : "bright";
}

Orientation orientation_from_string(std::string_view s) {
    if (s == "dark") return Orientation::DarkObject;
    if (s == "bright") return Orientation::BrightObject;
    throw std::invalid_argument("unknown orientation '" + std::string(s) + "' (expected dark|bright)");
}

BinaryMask apply_threshold(const GrayImage& img, int t, Orientation orientation) {
    if (t < 0 || t > 255) throw std::out_of_range("threshold must lie in [0,255]");
    std::vector<std::uint8_t> labels(img.size());
    auto px = img.pixels();
    const bool dark = orientation == Orientation::DarkObject;
    for (std::size_t i = 0; i < px.size(); ++i) {
        const bool below = px[i] <= t;
        labels[i] = (below == dark) ? 1 : 0;
    }
    return BinaryMask(img.width(), img.height(), std::move(labels));
}

std::optional<int> select_extremum(const CriterionCurve& curve, bool maximize) {
    std::optional<double> best;
    for (const auto& v : curve) {
        if (!v) continue;
        if (!best || (maximize ? *v > *best : *v < *best)) best = v;
    }
    if (!best) return std::nullopt;
    const double tol = kCriterionTieTolerance * std::max(1.0, std::abs(*best));
    for (int t = 0; t < 256; ++t) {
        const auto& v = curve[static_cast<std::size_t>(t)];
        if (!v) continue;
        if (maximize ? *v >= *best - tol : *v <= *best + tol) return t;
    }
    return std::nullopt;
}

namespace {

struct Populated {
    int first = -1;
    int last = -1;
    int count = 0;
};

Populated populated_bins(const Histogram& hist) {
    Populated p;
    for (int v = 0; v < 256; ++v) {
        if (hist[static_cast<std::size_t>(v)] == 0) continue;
        if (p.first < 0) p.first = v;
        p.last = v;
        ++p.count;
    }
    return p;
}

// Prefix moments: n[t] = sum_{v<=t} h[v], s[t] = sum v h[v], q[t] = sum v^2 h[v].
struct PrefixMoments {
    std::array<double, 256> n{}, s{}, q{};

    explicit PrefixMoments(const Histogram& hist) {
        double an = 0, as = 0, aq = 0;
        for (int v = 0; v < 256; ++v) {
            const double h = static_cast<double>(hist[static_cast<std::size_t>(v)]);
            an += h;
            as += h * v;
            aq += h * v * static_cast<double>(v);
            n[static_cast<std::size_t>(v)] = an;
            s[static_cast<std::size_t>(v)] = as;
            q[static_cast<std::size_t>(v)] = aq;
        }
    }
    double total_n() const { return n[255]; }
    double total_s() const { return s[255]; }
    double total_q() const { return q[255]; }
};

ThresholdResult degenerate_result(const Populated& p) {
    ThresholdResult r;
    r.threshold = std::max(p.first, 0);
    r.degenerate = true;
    return r;
}

void require_nonempty(const Populated& p) {
    if (p.count == 0) throw std::invalid_argument("histogram has no populated bins");
}

ThresholdResult from_curve(const CriterionCurve& curve, bool maximize) {
    ThresholdResult r;
    auto t = select_extremum(curve, maximize);
    r.threshold = *t;
    r.criterion = *curve[static_cast<std::size_t>(*t)];
    return r;
}

}  // namespace

CriterionCurve otsu_criterion(const Histogram& hist) {
    CriterionCurve curve;
    PrefixMoments pm(hist);
    const double total = pm.total_n();
    for (int t = 0; t < 256; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double n0 = pm.n[i];
        const double n1 = total - n0;
        if (n0 <= 0 || n1 <= 0) continue;
        const double mu0 = pm.s[i] / n0;
        const double mu1 = (pm.total_s() - pm.s[i]) / n1;
        const double w0 = n0 / total;
        const double w1 = n1 / total;
        curve[i] = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    return curve;
}

ThresholdResult otsu(const Histogram& hist) {
    const auto p = populated_bins(hist);
    require_nonempty(p);
    if (p.count < 2) return degenerate_result(p);
    return from_curve(otsu_criterion(hist), true);
}

CriterionCurve kittler_criterion(const Histogram& hist) {
    CriterionCurve curve;
    PrefixMoments pm(hist);
    const double total = pm.total_n();
    for (int t = 0; t < 256; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double n0 = pm.n[i];
        const double n1 = total - n0;
        if (n0 <= 0 || n1 <= 0) continue;
        const double mu0 = pm.s[i] / n0;
        const double mu1 = (pm.total_s() - pm.s[i]) / n1;
        const double var0 = std::max(pm.q[i] / n0 - mu0 * mu0, kKittlerVarianceFloor);
        const double var1 = std::max((pm.total_q() - pm.q[i]) / n1 - mu1 * mu1, kKittlerVarianceFloor);
        const double p0 = n0 / total;
        const double p1 = n1 / total;
        curve[i] = 1.0 + (p0 * std::log(var0) + p1 * std::log(var1)) - 2.0 * (p0 * std::log(p0) + p1 * std::log(p1));
    }
    return curve;
}

ThresholdResult kittler(const Histogram& hist) {
    const auto p = populated_bins(hist);
    require_nonempty(p);
    const auto curve = kittler_criterion(hist);
    if (!select_extremum(curve, false)) {
        auto r = otsu(hist);
        r.fallback = true;
        return r;
    }
    return from_curve(curve, false);
}

namespace {

double shannon(double u) noexcept {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    return -u * std::log(u) - (1.0 - u) * std::log(1.0 - u);
}

}  // namespace

CriterionCurve huang_criterion(const Histogram& hist) {
    CriterionCurve curve;
    const auto p = populated_bins(hist);
    if (p.count < 2) return curve;
    PrefixMoments pm(hist);
    const double total = pm.total_n();
    const double span = static_cast<double>(p.last - p.first);
    for (int t = p.first; t < p.last; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double n0 = pm.n[i];
        const double n1 = total - n0;
        const double mu0 = pm.s[i] / n0;
        const double mu1 = (pm.total_s() - pm.s[i]) / n1;
        double e = 0.0;
        for (int g = p.first; g <= p.last; ++g) {
            const auto h = hist[static_cast<std::size_t>(g)];
            if (h == 0) continue;
            const double mu = g <= t ? mu0 : mu1;
            e += static_cast<double>(h) * shannon(1.0 / (1.0 + std::abs(g - mu) / span));
        }
        curve[i] = e / total;
    }
    return curve;
}

ThresholdResult huang(const Histogram& hist) {
    const auto p = populated_bins(hist);
    require_nonempty(p);
    if (p.count < 2) return degenerate_result(p);
    return from_curve(huang_criterion(hist), false);
}

double s_membership(double g, double a, double c) noexcept {
    if (g <= a) return 0.0;
    if (g >= c) return 1.0;
    const double b = 0.5 * (a + c);
    const double w = c - a;
    if (g <= b) {
        const double r = (g - a) / w;
        return 2.0 * r * r;
    }
    const double r = (g - c) / w;
    return 1.0 - 2.0 * r * r;
}

CriterionCurve tizhoosh_criterion(const Histogram& hist, const TizhooshOptions& opts) {
    if (!(opts.alpha >= 1.0)) throw std::invalid_argument("tizhoosh alpha must be >= 1");
    if (opts.half_width < 1) throw std::invalid_argument("tizhoosh half_width must be >= 1");
    CriterionCurve curve;
    const double total = static_cast<double>(scefis::total(hist));
    if (total <= 0) return curve;
    for (int t = 0; t < 256; ++t) {
        const double a = t - opts.half_width;
        const double c = t + opts.half_width;
        double gamma = 0.0;
        for (int g = 0; g < 256; ++g) {
            const auto h = hist[static_cast<std::size_t>(g)];
            if (h == 0) continue;
            const double mu = s_membership(g, a, c);
            gamma += static_cast<double>(h) * (std::pow(mu, 1.0 / opts.alpha) - std::pow(mu, opts.alpha));
        }
        curve[static_cast<std::size_t>(t)] = gamma / total;
    }
    return curve;
}

ThresholdResult tizhoosh_interval(const Histogram& hist, const TizhooshOptions& opts) {
    const auto p = populated_bins(hist);
    require_nonempty(p);
    if (p.count < 2) return degenerate_result(p);
    const auto curve = tizhoosh_criterion(hist, opts);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& v : curve) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
    }
    if (hi - lo <= kCriterionTieTolerance * std::max(1.0, std::abs(hi))) {
        auto r = otsu(hist);
        r.fallback = true;
        return r;
    }
    return from_curve(curve, true);
}

std::vector<double> niblack_thresholds(const GrayImage& img, int window, double k) {
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("niblack window must be odd and >= 3");
    const int w = img.width();
    const int h = img.height();
    if (window > w || window > h) {
        spdlog::warn("niblack window {} exceeds image {}x{}; clamping to image bounds", window, w, h);
    }
    const int half = window / 2;
    // Summed-area tables with a zero border row/column.
    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    std::vector<std::int64_t> sum(stride * (static_cast<std::size_t>(h) + 1), 0);
    std::vector<std::int64_t> sq(sum.size(), 0);
    for (int y = 0; y < h; ++y) {
        std::int64_t rs = 0, rq = 0;
        for (int x = 0; x < w; ++x) {
            const std::int64_t v = img.at(x, y);
            rs += v;
            rq += v * v;
            const auto i = (static_cast<std::size_t>(y) + 1) * stride + static_cast<std::size_t>(x) + 1;
            sum[i] = sum[i - stride] + rs;
            sq[i] = sq[i - stride] + rq;
        }
    }
    auto box = [&](const std::vector<std::int64_t>& tab, int x0, int y0, int x1, int y1) {
        auto at = [&](int x, int y) { return tab[static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x)]; };
        return at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
    };

    std::vector<double> out(img.size());
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - half);
        const int y1 = std::min(h - 1, y + half);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - half);
            const int x1 = std::min(w - 1, x + half);
            const double n = static_cast<double>((x1 - x0 + 1) * (y1 - y0 + 1));
            const double mean = static_cast<double>(box(sum, x0, y0, x1, y1)) / n;
            const double var = std::max(0.0, static_cast<double>(box(sq, x0, y0, x1, y1)) / n - mean * mean);
            out[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] =
                mean + k * std::sqrt(var);
        }
    }
    return out;
}

BinaryMask niblack(const GrayImage& img, const NiblackOptions& opts) {
    const auto thr = niblack_thresholds(img, opts.window, opts.k);
    std::vector<std::uint8_t> labels(img.size());
    const bool dark = opts.orientation == Orientation::DarkObject;
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        const bool below = static_cast<double>(px[i]) <= thr[i];
        labels[i] = (below == dark) ? 1 : 0;
    }
    return BinaryMask(img.width(), img.height(), std::move(labels));
}

SegmentationScore jaccard(const BinaryMask& s, const BinaryMask& g) {
    if (!same_shape(s, g)) throw DimensionMismatch("jaccard: masks differ in size");
    std::size_t inter = 0, uni = 0;
    auto a = s.labels();
    auto b = g.labels();
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += static_cast<std::size_t>(a[i] & b[i]);
        uni += static_cast<std::size_t>(a[i] | b[i]);
    }
    if (uni == 0) return {1.0, true};
    return {static_cast<double>(inter) / static_cast<double>(uni), false};
}

MaaResult maa_search(const GrayImage& img, const BinaryMask& gold, const MaaOptions& opts) {
    const auto hist = histogram(img);
    const auto ghist = masked_histogram(img, gold);
    const auto n_total = static_cast<std::int64_t>(img.size());
    const auto g_total = static_cast<std::int64_t>(gold.object_count());

    MaaResult best;
    bool have = false;
    auto scan = [&](Orientation o) {
        std::int64_t cum = 0, gcum = 0;
        for (int t = 0; t < 256; ++t) {
            cum += static_cast<std::int64_t>(hist[static_cast<std::size_t>(t)]);
            gcum += static_cast<std::int64_t>(ghist[static_cast<std::size_t>(t)]);
            const std::int64_t s = o == Orientation::DarkObject ? cum : n_total - cum;
            const std::int64_t inter = o == Orientation::DarkObject ? gcum : g_total - gcum;
            const std::int64_t uni = s + g_total - inter;
            const double j = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            if (!have || j > best.j_max) {
                best = {t, j, o};
                have = true;
            }
        }
    };
    scan(opts.orientation);
    if (opts.both_orientations) {
        scan(opts.orientation == Orientation::DarkObject ? Orientation::BrightObject : Orientation::DarkObject);
    }
    return best;
}

}  // namespace scefis
