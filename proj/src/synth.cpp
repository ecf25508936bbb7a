#include "acdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double runif(std::mt19937_64& rng) { return (double(rng() >> 11) + 0.5) * 0x1.0p-53; }
double runif(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * runif(rng); }

double rnorm(std::mt19937_64& rng) {
    double u1 = runif(rng), u2 = runif(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

struct Rgb {
    float r, g, b;
};

void fill_rect(Image& img, double x0, double y0, double x1, double y1, Rgb c, float alpha = 1.f) {
    int ix0 = std::max(0, int(std::floor(x0)));
    int iy0 = std::max(0, int(std::floor(y0)));
    int ix1 = std::min(img.w, int(std::ceil(x1)));
    int iy1 = std::min(img.h, int(std::ceil(y1)));
    for (int y = iy0; y < iy1; ++y)
        for (int x = ix0; x < ix1; ++x) {
            img.rgb[0].at(y, x) = (1 - alpha) * img.rgb[0].at(y, x) + alpha * c.r;
            img.rgb[1].at(y, x) = (1 - alpha) * img.rgb[1].at(y, x) + alpha * c.g;
            img.rgb[2].at(y, x) = (1 - alpha) * img.rgb[2].at(y, x) + alpha * c.b;
        }
}

void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, Rgb c) {
    int ix0 = std::max(0, int(std::floor(cx - rx)));
    int iy0 = std::max(0, int(std::floor(cy - ry)));
    int ix1 = std::min(img.w, int(std::ceil(cx + rx)) + 1);
    int iy1 = std::min(img.h, int(std::ceil(cy + ry)) + 1);
    for (int y = iy0; y < iy1; ++y)
        for (int x = ix0; x < ix1; ++x) {
            double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
            if (dx * dx + dy * dy > 1.0) continue;
            img.rgb[0].at(y, x) = c.r;
            img.rgb[1].at(y, x) = c.g;
            img.rgb[2].at(y, x) = c.b;
        }
}

void draw_person(Image& img, std::mt19937_64& rng, const BBox& b) {
    const double x = b.x, y = b.y, w = b.w, h = b.h;
    Rgb torso{float(runif(rng, 0.05, 0.40)), float(runif(rng, 0.05, 0.40)),
              float(runif(rng, 0.05, 0.45))};
    Rgb legs{torso.r * 0.7f, torso.g * 0.7f, torso.b * 0.7f};
    Rgb skin{float(runif(rng, 0.55, 0.85)), float(runif(rng, 0.42, 0.65)),
             float(runif(rng, 0.30, 0.52))};
    // torso with thin arms at the sides
    fill_rect(img, x + 0.22 * w, y + 0.19 * h, x + 0.78 * w, y + 0.58 * h, torso);
    fill_rect(img, x + 0.08 * w, y + 0.22 * h, x + 0.22 * w, y + 0.52 * h, torso, 0.85f);
    fill_rect(img, x + 0.78 * w, y + 0.22 * h, x + 0.92 * w, y + 0.52 * h, torso, 0.85f);
    // legs with a gap
    fill_rect(img, x + 0.25 * w, y + 0.58 * h, x + 0.46 * w, y + 0.99 * h, legs);
    fill_rect(img, x + 0.54 * w, y + 0.58 * h, x + 0.75 * w, y + 0.99 * h, legs);
    // head
    double hr = 0.105 * h * runif(rng, 0.9, 1.1);
    fill_ellipse(img, x + 0.5 * w, y + 0.105 * h, hr * 0.85, hr, skin);
    // pixel noise over the figure
    int ix0 = std::max(0, int(x)), iy0 = std::max(0, int(y));
    int ix1 = std::min(img.w, int(x + w) + 1), iy1 = std::min(img.h, int(y + h) + 1);
    for (int yy = iy0; yy < iy1; ++yy)
        for (int xx = ix0; xx < ix1; ++xx)
            for (int c = 0; c < 3; ++c) {
                float& v = img.rgb[c].at(yy, xx);
                v = std::clamp(v + float(0.02 * rnorm(rng)), 0.f, 1.f);
            }
}

// Person-like but wrong: bar without head/leg gap, floating blobs, posts.
void draw_distractor(Image& img, std::mt19937_64& rng) {
    int kind = int(rng() % 3);
    double h = runif(rng, 30.0, 0.6 * img.h);
    double w = h * runif(rng, 0.3, 0.55);
    double x = runif(rng, 0.0, img.w - w);
    double y = runif(rng, 0.0, img.h - h);
    Rgb dark{float(runif(rng, 0.05, 0.40)), float(runif(rng, 0.05, 0.40)),
             float(runif(rng, 0.05, 0.45))};
    Rgb skin{float(runif(rng, 0.55, 0.85)), float(runif(rng, 0.42, 0.65)),
             float(runif(rng, 0.30, 0.52))};
    switch (kind) {
        case 0:  // solid bar, no head, no gap
            fill_rect(img, x + 0.2 * w, y, x + 0.8 * w, y + h, dark);
            break;
        case 1:  // headless torso over legs-like slab
            fill_rect(img, x + 0.22 * w, y + 0.05 * h, x + 0.78 * w, y + 0.55 * h, dark);
            fill_rect(img, x + 0.25 * w, y + 0.55 * h, x + 0.75 * w, y + h, dark);
            break;
        default:  // floating head-blob beside a post
            fill_rect(img, x + 0.42 * w, y, x + 0.58 * w, y + h, dark);
            fill_ellipse(img, x + 0.85 * w, y + 0.5 * h, 0.1 * h, 0.12 * h, skin);
            break;
    }
    for (int yy = std::max(0, int(y)); yy < std::min(img.h, int(y + h) + 1); ++yy)
        for (int xx = std::max(0, int(x)); xx < std::min(img.w, int(x + w) + 1); ++xx)
            for (int c = 0; c < 3; ++c) {
                float& v = img.rgb[c].at(yy, xx);
                v = std::clamp(v + float(0.02 * rnorm(rng)), 0.f, 1.f);
            }
}

}  // namespace

SynthFrame render_synth_frame(const SyntheticSceneSpec& spec, int frame_index) {
    if (spec.frame_w < 64 || spec.frame_h < 96) throw DataError("synth: frame too small");
    std::mt19937_64 rng(mix64(spec.seed) ^ mix64(uint64_t(frame_index) + 0x1234));
    SynthFrame out;
    out.img = Image(spec.frame_h, spec.frame_w);
    Image& img = out.img;

    // sky-to-ground gradient with per-frame tint
    float sky[3] = {float(runif(rng, 0.55, 0.75)), float(runif(rng, 0.60, 0.80)),
                    float(runif(rng, 0.65, 0.85))};
    float gnd[3] = {float(runif(rng, 0.35, 0.55)), float(runif(rng, 0.33, 0.50)),
                    float(runif(rng, 0.30, 0.45))};
    for (int y = 0; y < img.h; ++y) {
        float t = float(y) / float(img.h - 1);
        for (int c = 0; c < 3; ++c) {
            float v = sky[c] + t * (gnd[c] - sky[c]);
            float* row = img.rgb[c].row(y);
            std::fill(row, row + img.w, v);
        }
    }
    // coarse value noise
    const int cell = 12;
    const int gw = img.w / cell + 2, gh = img.h / cell + 2;
    std::vector<float> grid(size_t(gw) * gh);
    for (float& g : grid) g = float(runif(rng, -1.0, 1.0));
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double fx = double(x) / cell, fy = double(y) / cell;
            int gx = int(fx), gy = int(fy);
            double rx = fx - gx, ry = fy - gy;
            double top = grid[size_t(gy) * gw + gx] * (1 - rx) + grid[size_t(gy) * gw + gx + 1] * rx;
            double bot = grid[size_t(gy + 1) * gw + gx] * (1 - rx) +
                         grid[size_t(gy + 1) * gw + gx + 1] * rx;
            float n = float(0.05 * (top + ry * (bot - top)));
            for (int c = 0; c < 3; ++c)
                img.rgb[c].at(y, x) = std::clamp(img.rgb[c].at(y, x) + n, 0.f, 1.f);
        }
    // plain clutter
    for (int i = 0; i < spec.clutter; ++i) {
        double w = runif(rng, 8.0, 70.0), h = runif(rng, 8.0, 55.0);
        double x = runif(rng, 0.0, img.w - w), y = runif(rng, 0.0, img.h - h);
        Rgb c{float(runif(rng, 0.1, 0.9)), float(runif(rng, 0.1, 0.9)),
              float(runif(rng, 0.1, 0.9))};
        fill_rect(img, x, y, x + w, y + h, c, float(runif(rng, 0.5, 0.95)));
    }
    for (int i = 0; i < spec.distractors; ++i) draw_distractor(img, rng);

    // people on the ground plane
    int n_obj = 0;
    {
        double lambda = spec.mean_objects;
        double p = std::exp(-lambda), acc = p, u = runif(rng);
        while (u > acc && n_obj < spec.max_objects) {
            ++n_obj;
            p *= lambda / n_obj;
            acc += p;
        }
    }
    const double yb_min = std::clamp((spec.min_height - spec.plane_intercept) / spec.plane_slope,
                                     8.0, double(spec.frame_h - 1));
    const double yb_max = std::clamp((spec.max_height - spec.plane_intercept) / spec.plane_slope,
                                     yb_min, double(spec.frame_h - 1));
    for (int i = 0; i < n_obj; ++i) {
        for (int attempt = 0; attempt < 24; ++attempt) {
            double yb = runif(rng, yb_min, yb_max);
            double h = (spec.plane_slope * yb + spec.plane_intercept) *
                       (1.0 + spec.height_noise * rnorm(rng));
            h = std::clamp(h, spec.min_height * 0.85, spec.max_height * 1.15);
            double w = h / 2.0;
            bool truncated = runif(rng) < spec.edge_ignore_fraction;
            double x = truncated ? (runif(rng) < 0.5 ? -w * 0.45 : img.w - w * 0.55)
                                 : runif(rng, 1.0, img.w - w - 1.0);
            BBox b{x, yb - h, w, h};
            if (b.y < 0) continue;
            bool clash = false;
            for (const GtBox& g : out.gts)
                if (iou(b, g.box) > 0.25) clash = true;
            if (clash) continue;
            draw_person(img, rng, b);
            // clip the stored box to the frame
            BBox vis = b;
            if (vis.x < 0) {
                vis.w += vis.x;
                vis.x = 0;
            }
            vis.w = std::min(vis.w, double(img.w) - vis.x);
            if (vis.w <= 2.0) break;
            out.gts.push_back({vis, truncated});
            break;
        }
    }
    return out;
}

void generate_synthetic(const SyntheticSceneSpec& spec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "frames");
    std::vector<AnnotatedFrame> annos;
    for (int i = 0; i < spec.n_frames; ++i) {
        SynthFrame f = render_synth_frame(spec, i);
        char name[32];
        std::snprintf(name, sizeof(name), "frames/%06d.ppm", i);
        save_ppm((fs::path(out_dir) / name).string(), f.img);
        AnnotatedFrame a;
        a.frame_id = i;
        a.image = name;
        a.boxes = f.gts;
        annos.push_back(std::move(a));
    }
    save_annotations((fs::path(out_dir) / "annotations.jsonl").string(), annos);
}

}  // namespace acdet
