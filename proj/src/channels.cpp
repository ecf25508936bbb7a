#include "acdet/channels.hpp"

#include <algorithm>
#include <cmath>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

// D65 white point.
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;
const double kUn = 4.0 * kXn / (kXn + 15.0 * kYn + 3.0 * kZn);
const double kVn = 9.0 * kYn / (kXn + 15.0 * kYn + 3.0 * kZn);

// Rescaling so the full sRGB gamut lands in [0,1]:
// L*/100, (u*+134)/354, (v*+140)/262.
constexpr float kUOff = 134.f, kURange = 354.f;
constexpr float kVOff = 140.f, kVRange = 262.f;

constexpr int kLutSize = 4096;

struct Luts {
    // sRGB gamma expansion on [0,1].
    std::array<float, kLutSize + 1> lin;
    // L*(Y)/100 on Y in [0,1].
    std::array<float, kLutSize + 1> lstar;
    Luts() {
        for (int i = 0; i <= kLutSize; ++i) {
            double u = double(i) / kLutSize;
            lin[i] = float(u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4));
            double y = u;
            double L = y > 0.008856451679 ? 116.0 * std::cbrt(y) - 16.0 : 903.2962962 * y;
            lstar[i] = float(L / 100.0);
        }
    }
    static float eval(const std::array<float, kLutSize + 1>& t, float x) {
        float f = x * kLutSize;
        int i = int(f);
        if (i >= kLutSize) return t[kLutSize];
        float r = f - i;
        return t[i] + r * (t[i + 1] - t[i]);
    }
};

const Luts& luts() {
    static const Luts t;
    return t;
}

}  // namespace

std::array<Plane, 3> rgb_to_luv(const Image& img) {
    for (const Plane& p : img.rgb)
        for (float v : p.v)
            if (!(v >= 0.f && v <= 1.f)) throw DataError("rgb_to_luv: pixel value outside [0,1]");

    const Luts& t = luts();
    std::array<Plane, 3> out = {Plane(img.h, img.w), Plane(img.h, img.w), Plane(img.h, img.w)};
    const size_t n = img.rgb[0].size();
    for (size_t i = 0; i < n; ++i) {
        double r = Luts::eval(t.lin, img.rgb[0].v[i]);
        double g = Luts::eval(t.lin, img.rgb[1].v[i]);
        double b = Luts::eval(t.lin, img.rgb[2].v[i]);
        double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
        double L = Luts::eval(t.lstar, float(std::clamp(y, 0.0, 1.0)));  // already / 100
        double denom = x + 15.0 * y + 3.0 * z;
        double up = denom > 0.0 ? 4.0 * x / denom : kUn;
        double vp = denom > 0.0 ? 9.0 * y / denom : kVn;
        double us = 13.0 * (L * 100.0) * (up - kUn);
        double vs = 13.0 * (L * 100.0) * (vp - kVn);
        out[0].v[i] = std::clamp(float(L), 0.f, 1.f);
        out[1].v[i] = std::clamp((float(us) + kUOff) / kURange, 0.f, 1.f);
        out[2].v[i] = std::clamp((float(vs) + kVOff) / kVRange, 0.f, 1.f);
    }
    return out;
}

namespace {

// acos on [-1,1] with linear interpolation; node count is odd so 0 hits a
// node and the axis-aligned orientations come out exact.
struct AcosLut {
    static constexpr int kN = 16384;  // kN+1 nodes
    std::array<float, kN + 1> t;
    AcosLut() {
        for (int i = 0; i <= kN; ++i) t[i] = float(std::acos(2.0 * i / kN - 1.0));
    }
    float operator()(float u) const {
        float f = (u + 1.f) * (kN / 2.f);
        int i = int(f);
        if (i < 0) return t[0];
        if (i >= kN) return t[kN];
        float r = f - float(i);
        return t[size_t(i)] + r * (t[size_t(i) + 1] - t[size_t(i)]);
    }
};

const AcosLut& acos_lut() {
    static const AcosLut lut;
    return lut;
}

}  // namespace

void gradient(const std::array<Plane, 3>& luv, Plane& mag, Plane& ori) {
    const int h = luv[0].h, w = luv[0].w;
    const AcosLut& lut = acos_lut();
    mag = Plane(h, w);
    ori = Plane(h, w);
    std::vector<float> gxv(size_t(w)), gyv(size_t(w));
    for (int y = 0; y < h; ++y) {
        const float* up[3], *dn[3], *mid[3];
        const float dy_scale = (y > 0 && y < h - 1) ? 0.5f : 1.f;
        for (int c = 0; c < 3; ++c) {
            up[c] = luv[size_t(c)].row(y > 0 ? y - 1 : 0);
            dn[c] = luv[size_t(c)].row(y < h - 1 ? y + 1 : h - 1);
            mid[c] = luv[size_t(c)].row(y);
        }
        float* mrow_out = mag.row(y);
        for (int x = 0; x < w; ++x) {
            const int x0 = x > 0 ? x - 1 : 0;
            const int x1 = x < w - 1 ? x + 1 : w - 1;
            const float dx_scale = (x > 0 && x < w - 1) ? 0.5f : 1.f;
            float best_m2 = -1.f, bgx = 0.f, bgy = 0.f;
            for (int c = 0; c < 3; ++c) {
                float gx = (mid[c][x1] - mid[c][x0]) * dx_scale;
                float gy = (dn[c][x] - up[c][x]) * dy_scale;
                float m2 = gx * gx + gy * gy;
                if (m2 > best_m2) {
                    best_m2 = m2;
                    bgx = gx;
                    bgy = gy;
                }
            }
            gxv[size_t(x)] = bgx;
            gyv[size_t(x)] = bgy;
            mrow_out[x] = std::sqrt(best_m2);
        }
        float* mrow = mag.row(y);
        float* orow = ori.row(y);
        for (int x = 0; x < w; ++x) {
            float m = mrow[x];
            float theta = 0.f;
            if (m > 0.f) {
                float gx = gxv[size_t(x)], gy = gyv[size_t(x)];
                if (gy < 0.f || (gy == 0.f && gx < 0.f)) gx = -gx;
                theta = lut(gx / m);
                if (theta >= float(kPi)) theta = 0.f;
            }
            orow[x] = theta;
        }
    }
}

Plane normalize_magnitude(const Plane& mag, int radius, float c) {
    Plane s = triangle_smooth(mag, radius);
    Plane out(mag.h, mag.w);
    for (size_t i = 0; i < mag.size(); ++i) out.v[i] = mag.v[i] / (s.v[i] + c);
    return out;
}

std::array<Plane, kNumOrientBins> orientation_histogram(const Plane& mag, const Plane& ori) {
    std::array<Plane, kNumOrientBins> out;
    for (auto& p : out) p = Plane(mag.h, mag.w);
    const float bin_width = float(kPi) / kNumOrientBins;
    for (size_t i = 0; i < mag.size(); ++i) {
        float m = mag.v[i];
        if (m == 0.f) continue;
        float t = ori.v[i] / bin_width - 0.5f;
        int k0 = int(std::floor(t));
        float f = t - float(k0);
        int b0 = ((k0 % kNumOrientBins) + kNumOrientBins) % kNumOrientBins;
        int b1 = (b0 + 1) % kNumOrientBins;
        out[b0].v[i] += m * (1.f - f);
        out[b1].v[i] += m * f;
    }
    return out;
}

ChannelStack compute_channels(const Image& img, const ChannelConfig& cfg) {
    Image smoothed = img;
    if (cfg.pre_smooth_radius > 0)
        for (int c = 0; c < 3; ++c)
            smoothed.rgb[c] = triangle_smooth(img.rgb[c], cfg.pre_smooth_radius);

    ChannelStack s;
    s.h = img.h;
    s.w = img.w;
    auto luv = rgb_to_luv(smoothed);
    Plane mag, ori;
    gradient(luv, mag, ori);
    Plane nmag = normalize_magnitude(mag, cfg.norm_radius, cfg.norm_const);
    auto hist = orientation_histogram(nmag, ori);
    for (int c = 0; c < 3; ++c) s.ch[c] = std::move(luv[c]);
    s.ch[kGradMagChannel] = std::move(nmag);
    for (int b = 0; b < kNumOrientBins; ++b) s.ch[kGradMagChannel + 1 + b] = std::move(hist[b]);
    return s;
}

AggregatedChannels aggregate(const ChannelStack& s, int block, const ChannelConfig& cfg) {
    if (block < 1) throw DataError("aggregate: block must be >= 1");
    if (block > s.h || block > s.w) throw DataError("aggregate: block larger than image");
    AggregatedChannels a;
    a.block = block;
    a.h = s.h / block;
    a.w = s.w / block;
    for (int c = 0; c < kNumChannels; ++c) {
        Plane p(a.h, a.w);
        for (int cy = 0; cy < a.h; ++cy)
            for (int cx = 0; cx < a.w; ++cx) {
                float acc = 0.f;
                for (int dy = 0; dy < block; ++dy) {
                    const float* row = s.ch[c].row(cy * block + dy) + size_t(cx) * block;
                    for (int dx = 0; dx < block; ++dx) acc += row[dx];
                }
                p.at(cy, cx) = acc;
            }
        a.ch[c] = cfg.agg_smooth ? triangle_smooth(p, cfg.agg_smooth_radius) : std::move(p);
    }
    return a;
}

Pyramid build_pyramid(const Image& img, const PyramidConfig& cfg) {
    if (cfg.scales_per_octave < 1) throw DataError("build_pyramid: scales_per_octave must be >= 1");
    if (cfg.min_object_height < cfg.block * 4)
        throw DataError("build_pyramid: min_object_height too small for block size");
    Pyramid pyr;
    pyr.cfg = cfg;
    const int cells_h = cfg.win_h / cfg.block;
    const int cells_w = cfg.win_w / cfg.block;
    const double top = double(cfg.win_h) / cfg.min_object_height;
    for (int k = 0;; ++k) {
        double s = top * std::pow(2.0, -double(k) / cfg.scales_per_octave);
        int lh = int(std::lround(img.h * s));
        int lw = int(std::lround(img.w * s));
        if (lh / cfg.block < cells_h || lw / cfg.block < cells_w) break;
        Image level = resample_bilinear(img, lh, lw);
        ChannelStack stack = compute_channels(level, cfg.channels);
        PyramidLevel pl;
        pl.scale = s;
        pl.agg = aggregate(stack, cfg.block, cfg.channels);
        pyr.levels.push_back(std::move(pl));
    }
    if (pyr.levels.empty()) throw DataError("build_pyramid: image too small for any level");
    return pyr;
}

}  // namespace acdet
