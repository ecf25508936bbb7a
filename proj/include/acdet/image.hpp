#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace acdet {

// Dense single-channel float plane, row-major.
struct Plane {
    int h = 0, w = 0;
    std::vector<float> v;

    Plane() = default;
    Plane(int h_, int w_, float fill = 0.f) : h(h_), w(w_), v(size_t(h_) * size_t(w_), fill) {}

    float& at(int y, int x) { return v[size_t(y) * w + x]; }
    float at(int y, int x) const { return v[size_t(y) * w + x]; }
    float* row(int y) { return v.data() + size_t(y) * w; }
    const float* row(int y) const { return v.data() + size_t(y) * w; }
    size_t size() const { return v.size(); }
};

// RGB image as three planes with values in [0,1].
struct Image {
    int w = 0, h = 0;
    std::array<Plane, 3> rgb;

    Image() = default;
    Image(int h_, int w_) : w(w_), h(h_), rgb{Plane(h_, w_), Plane(h_, w_), Plane(h_, w_)} {}
};

// Triangle smoothing with per-axis kernel (1,2,...,r+1,...,2,1)/(r+1)^2,
// replicate borders. radius 0 is a no-op.
Plane triangle_smooth(const Plane& p, int radius);

Image resample_bilinear(const Image& img, int out_h, int out_w);

// Reads binary PPM (P6) or PNG; 8/16-bit samples are scaled to [0,1].
Image load_image(const std::string& path);
void save_ppm(const std::string& path, const Image& img);

}  // namespace acdet
