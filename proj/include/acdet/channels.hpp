#pragma once

#include <array>
#include <vector>

#include "acdet/image.hpp"

namespace acdet {

inline constexpr int kNumChannels = 10;
// Channel layout: 0..2 = L,U,V; 3 = normalized gradient magnitude;
// 4..9 = gradient orientation histogram bins.
inline constexpr int kGradMagChannel = 3;
inline constexpr int kNumOrientBins = 6;

struct ChannelConfig {
    int pre_smooth_radius = 1;   // triangle smoothing of the input image
    int norm_radius = 5;         // smoothing window for magnitude normalization
    float norm_const = 0.005f;   // M / (smooth(M) + norm_const)
    int agg_smooth_radius = 1;   // smoothing of the aggregated planes
    bool agg_smooth = true;
};

struct ChannelStack {
    int h = 0, w = 0;
    std::array<Plane, kNumChannels> ch;
};

struct AggregatedChannels {
    int h = 0, w = 0;  // cells
    int block = 4;
    std::array<Plane, kNumChannels> ch;
};

// sRGB -> CIE LUV (D65), each channel affinely rescaled to [0,1]:
// L*/100, (u*+134)/354, (v*+140)/262. Throws DataError on values outside [0,1].
std::array<Plane, 3> rgb_to_luv(const Image& img);

// Central differences per LUV plane (one-sided at borders); per pixel the
// plane with the largest magnitude supplies both outputs. ori in [0,pi).
void gradient(const std::array<Plane, 3>& luv, Plane& mag, Plane& ori);

Plane normalize_magnitude(const Plane& mag, int radius, float c);

// Linear split of each pixel's magnitude between the two nearest bin centers
// at (k+0.5)*pi/6; wraps with period pi. Planes sum to mag pointwise.
std::array<Plane, kNumOrientBins> orientation_histogram(const Plane& mag, const Plane& ori);

ChannelStack compute_channels(const Image& img, const ChannelConfig& cfg = {});

// Non-overlapping block x block sums per channel, output floor(H/b) x floor(W/b),
// followed by a triangle smoothing of the aggregated planes when enabled.
AggregatedChannels aggregate(const ChannelStack& s, int block, const ChannelConfig& cfg = {});

// A cropped sub-volume of aggregated channels, flattened channel-major
// (all of channel 0 row-major, then channel 1, ...).
struct FeatureWindow {
    int h = 0, w = 0, c = 0;  // cells
    std::vector<float> data;

    FeatureWindow() = default;
    FeatureWindow(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(size_t(h_) * w_ * c_, 0.f) {}
    float& at(int ci, int y, int x) { return data[(size_t(ci) * h + y) * w + x]; }
    float at(int ci, int y, int x) const { return data[(size_t(ci) * h + y) * w + x]; }
};

struct PyramidConfig {
    int scales_per_octave = 8;
    int min_object_height = 50;  // pixels in the original image
    int block = 4;
    int win_h = 64, win_w = 32;  // detection window, pixels
    ChannelConfig channels;
};

struct PyramidLevel {
    double scale = 1.0;  // level image = original resampled by this factor
    AggregatedChannels agg;
};

struct Pyramid {
    std::vector<PyramidLevel> levels;
    PyramidConfig cfg;
};

// Levels at scale (win_h/min_object_height) * 2^(-k/scales_per_octave),
// k = 0,1,..., keeping every level that still holds one detection window.
Pyramid build_pyramid(const Image& img, const PyramidConfig& cfg);

}  // namespace acdet
