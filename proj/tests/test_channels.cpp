#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "acdet/channels.hpp"
#include "acdet/errors.hpp"
#include "oracles.hpp"

using namespace acdet;

namespace {

Image constant_image(int h, int w, float r, float g, float b) {
    Image img{h, w};
    std::fill(img.rgb[0].v.begin(), img.rgb[0].v.end(), r);
    std::fill(img.rgb[1].v.begin(), img.rgb[1].v.end(), g);
    std::fill(img.rgb[2].v.begin(), img.rgb[2].v.end(), b);
    return img;
}

Image random_image(int h, int w, uint64_t seed) {
    Image img{h, w};
    std::mt19937_64 rng(seed);
    for (auto& p : img.rgb)
        for (auto& v : p.v) v = float(rng() % 10000) / 9999.f;
    return img;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

TEST_CASE("luv: black maps to L=0") {
    auto luv = rgb_to_luv(constant_image(4, 4, 0, 0, 0));
    CHECK(luv[0].at(1, 2) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("luv: white maps to L=1") {
    auto luv = rgb_to_luv(constant_image(4, 4, 1, 1, 1));
    CHECK(luv[0].at(2, 1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("luv: mid-gray lands on the neutral u,v offsets") {
    auto luv = rgb_to_luv(constant_image(3, 3, 0.5f, 0.5f, 0.5f));
    CHECK(luv[1].at(1, 1) == doctest::Approx(134.0 / 354.0).epsilon(1e-5));
    CHECK(luv[2].at(1, 1) == doctest::Approx(140.0 / 262.0).epsilon(1e-5));
    auto ref = oracle::rgb_to_luv_ref(0.5, 0.5, 0.5);
    CHECK(luv[0].at(1, 1) == doctest::Approx(ref[0]).epsilon(1e-4));
}

TEST_CASE("luv: random pixels match the reference conversion") {
    Image img = random_image(8, 8, 99);
    auto luv = rgb_to_luv(img);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            auto ref = oracle::rgb_to_luv_ref(img.rgb[0].at(y, x), img.rgb[1].at(y, x),
                                              img.rgb[2].at(y, x));
            for (int c = 0; c < 3; ++c)
                CHECK(luv[c].at(y, x) == doctest::Approx(ref[c]).epsilon(2e-4));
        }
}

TEST_CASE("luv: out-of-range input rejected") {
    Image img = constant_image(2, 2, 0.5f, 0.5f, 0.5f);
    img.rgb[1].at(0, 1) = 1.5f;
    CHECK_THROWS_AS(rgb_to_luv(img), DataError);
}

TEST_CASE("gradient: constant image has zero magnitude") {
    std::array<Plane, 3> luv = {Plane(5, 5, 0.3f), Plane(5, 5, 0.4f), Plane(5, 5, 0.5f)};
    Plane mag, ori;
    gradient(luv, mag, ori);
    for (float v : mag.v) CHECK(v == 0.f);
}

TEST_CASE("gradient: horizontal ramp gives orientation 0, constant magnitude") {
    const int w = 5;
    std::array<Plane, 3> luv = {Plane(5, w, 0.f), Plane(5, w, 0.5f), Plane(5, w, 0.5f)};
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < w; ++x) luv[0].at(y, x) = float(x) / w;
    Plane mag, ori;
    gradient(luv, mag, ori);
    // central differences of x/w: ((x+1)-(x-1))/(2w) = 1/w, one-sided at borders too
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < w; ++x) {
            CHECK(mag.at(y, x) == doctest::Approx(1.0 / w).epsilon(1e-6));
            CHECK(ori.at(y, x) == doctest::Approx(0.0).epsilon(1e-6));
        }
}

TEST_CASE("gradient: vertical step gives orientation pi/2 on the edge rows") {
    std::array<Plane, 3> luv = {Plane(5, 5, 0.f), Plane(5, 5, 0.5f), Plane(5, 5, 0.5f)};
    for (int y = 2; y < 5; ++y)
        for (int x = 0; x < 5; ++x) luv[0].at(y, x) = 1.f;
    Plane mag, ori;
    gradient(luv, mag, ori);
    // rows 1 and 2 see the step through the central difference
    for (int x = 0; x < 5; ++x) {
        CHECK(mag.at(1, x) == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(ori.at(1, x) == doctest::Approx(kPi / 2).epsilon(1e-6));
        CHECK(ori.at(2, x) == doctest::Approx(kPi / 2).epsilon(1e-6));
    }
}

TEST_CASE("normalize_magnitude: zero stays zero") {
    Plane mag(6, 6, 0.f);
    Plane out = normalize_magnitude(mag, 5, 0.005f);
    for (float v : out.v) CHECK(v == 0.f);
}

TEST_CASE("normalize_magnitude: constant k maps to k/(k+c) everywhere") {
    const float k = 0.25f;
    Plane mag(16, 16, k);
    Plane out = normalize_magnitude(mag, 5, 0.005f);
    for (float v : out.v) CHECK(v == doctest::Approx(k / (k + 0.005)).epsilon(1e-6));
}

TEST_CASE("normalize_magnitude: impulse normalized by the kernel center weight") {
    // center weight of the normalized radius-5 triangle kernel, by brute force
    const int r = 5;
    double w0 = 0.0;
    {
        std::vector<double> k1;
        double norm = 0;
        for (int i = -r; i <= r; ++i) {
            k1.push_back(r + 1 - std::abs(i));
            norm += r + 1 - std::abs(i);
        }
        w0 = (k1[size_t(r)] / norm) * (k1[size_t(r)] / norm);
    }
    Plane mag(25, 25, 0.f);
    mag.at(12, 12) = 1.f;
    Plane out = normalize_magnitude(mag, r, 0.005f);
    CHECK(out.at(12, 12) == doctest::Approx(1.0 / (w0 + 0.005)).epsilon(1e-5));
}

TEST_CASE("orientation_histogram: zero magnitude gives six zero planes") {
    Plane mag(4, 4, 0.f), ori(4, 4, 1.f);
    auto hist = orientation_histogram(mag, ori);
    for (const Plane& p : hist)
        for (float v : p.v) CHECK(v == 0.f);
}

TEST_CASE("orientation_histogram: bin centers and midpoints") {
    Plane mag(1, 3, 1.f), ori(1, 3, 0.f);
    ori.at(0, 0) = float(0.5 * kPi / 6);  // center of bin 0
    ori.at(0, 1) = float(1.0 * kPi / 6);  // midway between bins 0 and 1
    ori.at(0, 2) = 0.f;                   // midway between bins 5 and 0 (wrap)
    auto hist = orientation_histogram(mag, ori);
    CHECK(hist[0].at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    for (int b = 1; b < 6; ++b) CHECK(hist[size_t(b)].at(0, 0) == doctest::Approx(0.0));
    CHECK(hist[0].at(0, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(hist[1].at(0, 1) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(hist[5].at(0, 2) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(hist[0].at(0, 2) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("orientation_histogram: planes sum to the magnitude pointwise") {
    std::mt19937_64 rng(7);
    Plane mag(9, 9), ori(9, 9);
    for (size_t i = 0; i < mag.size(); ++i) {
        mag.v[i] = float(rng() % 1000) / 500.f;
        ori.v[i] = float(rng() % 1000) / 1000.f * float(kPi) * 0.999f;
    }
    auto hist = orientation_histogram(mag, ori);
    for (size_t i = 0; i < mag.size(); ++i) {
        float sum = 0;
        for (const Plane& p : hist) sum += p.v[i];
        CHECK(sum == doctest::Approx(mag.v[i]).epsilon(1e-6));
    }
}

TEST_CASE("compute_channels: ten channels, shape preserved") {
    ChannelStack s = compute_channels(random_image(64, 32, 5));
    CHECK(s.h == 64);
    CHECK(s.w == 32);
    CHECK(int(s.ch.size()) == 10);
    for (const Plane& p : s.ch) {
        CHECK(p.h == 64);
        CHECK(p.w == 32);
    }
}

TEST_CASE("compute_channels: constant gray zeroes the gradient channels") {
    ChannelStack s = compute_channels(constant_image(32, 32, 0.42f, 0.42f, 0.42f));
    for (int c = 3; c < 10; ++c)
        for (float v : s.ch[size_t(c)].v) CHECK(v == 0.f);
}

TEST_CASE("compute_channels: deterministic") {
    Image img = random_image(40, 30, 11);
    ChannelStack a = compute_channels(img);
    ChannelStack b = compute_channels(img);
    for (int c = 0; c < 10; ++c) CHECK(a.ch[size_t(c)].v == b.ch[size_t(c)].v);
}

TEST_CASE("aggregate: shapes for both block sizes") {
    ChannelStack s = compute_channels(random_image(64, 32, 3));
    AggregatedChannels a4 = aggregate(s, 4);
    CHECK(a4.h == 16);
    CHECK(a4.w == 8);
    AggregatedChannels a2 = aggregate(s, 2);
    CHECK(a2.h == 32);
    CHECK(a2.w == 16);
}

TEST_CASE("aggregate: all-ones plane, smoothing off, gives cells of 16") {
    ChannelStack s;
    s.h = 8;
    s.w = 8;
    for (auto& p : s.ch) p = Plane(8, 8, 1.f);
    ChannelConfig cfg;
    cfg.agg_smooth = false;
    AggregatedChannels a = aggregate(s, 4, cfg);
    for (const Plane& p : a.ch)
        for (float v : p.v) CHECK(v == 16.f);
}

TEST_CASE("aggregate: matches the quadruple-loop oracle exactly") {
    std::mt19937_64 rng(21);
    ChannelStack s;
    s.h = 32;
    s.w = 32;
    for (auto& p : s.ch) {
        p = Plane(32, 32);
        for (float& v : p.v) v = float(rng() % 1000) / 250.f;
    }
    ChannelConfig cfg;
    cfg.agg_smooth = false;
    for (int block : {2, 4}) {
        AggregatedChannels a = aggregate(s, block, cfg);
        for (int c = 0; c < 10; ++c) {
            auto ref = oracle::block_sum_ref(s.ch[size_t(c)].v, 32, 32, block);
            REQUIRE(ref.size() == a.ch[size_t(c)].v.size());
            for (size_t i = 0; i < ref.size(); ++i) CHECK(a.ch[size_t(c)].v[i] == ref[i]);
        }
    }
}

TEST_CASE("aggregate: block larger than image throws") {
    ChannelStack s;
    s.h = 2;
    s.w = 2;
    for (auto& p : s.ch) p = Plane(2, 2, 0.f);
    CHECK_THROWS_AS(aggregate(s, 4), DataError);
}

TEST_CASE("pyramid: level count matches brute-force enumeration and the closed form") {
    Image img = random_image(480, 640, 123);
    PyramidConfig cfg;
    cfg.scales_per_octave = 8;
    cfg.min_object_height = 50;
    Pyramid pyr = build_pyramid(img, cfg);

    // brute force: scales (64/50)*2^(-k/8) while a 64x32 window still fits
    int expected = 0;
    for (int k = 0;; ++k) {
        double s = (64.0 / 50.0) * std::pow(2.0, -k / 8.0);
        int lh = int(std::lround(480 * s)), lw = int(std::lround(640 * s));
        if (lh / 4 < 16 || lw / 4 < 8) break;
        ++expected;
    }
    CHECK(int(pyr.levels.size()) == expected);
    int closed_form = int(std::floor(8 * std::log2(480.0 * 64 / (64.0 * 50)))) + 1;
    CHECK(int(pyr.levels.size()) == closed_form);
}

TEST_CASE("pyramid: one scale per octave halves consecutive levels") {
    Image img = random_image(256, 256, 9);
    PyramidConfig cfg;
    cfg.scales_per_octave = 1;
    cfg.min_object_height = 64;
    Pyramid pyr = build_pyramid(img, cfg);
    REQUIRE(pyr.levels.size() >= 2);
    for (size_t i = 1; i < pyr.levels.size(); ++i)
        CHECK(pyr.levels[i - 1].scale / pyr.levels[i].scale == doctest::Approx(2.0));
}

TEST_CASE("pyramid: scales strictly decreasing with the octave law, dims floor-divided") {
    Image img = random_image(200, 300, 31);
    PyramidConfig cfg;
    cfg.scales_per_octave = 4;
    cfg.min_object_height = 64;  // top scale 1
    Pyramid pyr = build_pyramid(img, cfg);
    for (size_t k = 0; k < pyr.levels.size(); ++k) {
        CHECK(pyr.levels[k].scale ==
              doctest::Approx(std::pow(2.0, -double(k) / 4.0)).epsilon(1e-12));
        if (k > 0) CHECK(pyr.levels[k].scale < pyr.levels[k - 1].scale);
        int lh = int(std::lround(200 * pyr.levels[k].scale));
        int lw = int(std::lround(300 * pyr.levels[k].scale));
        CHECK(pyr.levels[k].agg.h == lh / 4);
        CHECK(pyr.levels[k].agg.w == lw / 4);
    }
}

TEST_CASE("pyramid: image too small throws") {
    Image img = random_image(20, 20, 2);
    PyramidConfig cfg;
    CHECK_THROWS_AS(build_pyramid(img, cfg), DataError);
}
