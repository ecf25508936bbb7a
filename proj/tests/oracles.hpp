// Test-only reference implementations, kept independent of the library paths
// they check.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace oracle {

// sRGB -> LUV by the textbook formulas (no tables), same rescaling contract:
// L*/100, (u*+134)/354, (v*+140)/262.
inline std::array<double, 3> rgb_to_luv_ref(double r, double g, double b) {
    auto lin = [](double u) {
        return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
    };
    r = lin(r);
    g = lin(g);
    b = lin(b);
    double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    double L = y > 0.008856451679 ? 116.0 * std::cbrt(y) - 16.0 : 903.2962962 * y;
    const double xn = 0.95047, yn = 1.0, zn = 1.08883;
    const double un = 4.0 * xn / (xn + 15.0 * yn + 3.0 * zn);
    const double vn = 9.0 * yn / (xn + 15.0 * yn + 3.0 * zn);
    double denom = x + 15.0 * y + 3.0 * z;
    double up = denom > 0 ? 4.0 * x / denom : un;
    double vp = denom > 0 ? 9.0 * y / denom : vn;
    double us = 13.0 * L * (up - un);
    double vs = 13.0 * L * (vp - vn);
    return {L / 100.0, (us + 134.0) / 354.0, (vs + 140.0) / 262.0};
}

// Quadruple-loop block sum of one plane (row-major h x w).
inline std::vector<float> block_sum_ref(const std::vector<float>& p, int h, int w, int block) {
    int oh = h / block, ow = w / block;
    std::vector<float> out(size_t(oh) * ow, 0.f);
    for (int cy = 0; cy < oh; ++cy)
        for (int cx = 0; cx < ow; ++cx) {
            float acc = 0.f;
            for (int dy = 0; dy < block; ++dy)
                for (int dx = 0; dx < block; ++dx)
                    acc += p[size_t(cy * block + dy) * w + (cx * block + dx)];
            out[size_t(cy) * ow + cx] = acc;
        }
    return out;
}

// IoU by counting unit pixels on an integer grid (integer boxes only).
inline double iou_pixel_ref(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh,
                            int grid) {
    long long inter = 0, uni = 0;
    for (int y = 0; y < grid; ++y)
        for (int x = 0; x < grid; ++x) {
            bool in_a = x >= ax && x < ax + aw && y >= ay && y < ay + ah;
            bool in_b = x >= bx && x < bx + bw && y >= by && y < by + bh;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    return uni == 0 ? 0.0 : double(inter) / double(uni);
}

// Greatest number of detections assignable to distinct ground-truth boxes,
// by exhaustive search over injective assignments.
// admissible[d] = list of gt indices with IoU above threshold.
inline int max_assignment_ref(const std::vector<std::vector<int>>& admissible, int n_gt) {
    int best = 0;
    std::vector<bool> used(size_t(n_gt), false);
    auto rec = [&](auto&& self, size_t d, int count) -> void {
        best = std::max(best, count);
        if (d == admissible.size()) return;
        self(self, d + 1, count);  // leave detection d unmatched
        for (int g : admissible[d])
            if (!used[size_t(g)]) {
                used[size_t(g)] = true;
                self(self, d + 1, count + 1);
                used[size_t(g)] = false;
            }
    };
    rec(rec, 0, 0);
    return best;
}

}  // namespace oracle
