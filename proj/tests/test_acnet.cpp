#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "acdet/acnet.hpp"
#include "acdet/errors.hpp"

using namespace acdet;

namespace {

FeatureWindow random_window(int h, int w, int c, uint64_t seed) {
    FeatureWindow win(h, w, c);
    std::mt19937_64 rng(seed);
    for (float& v : win.data) v = float(rng() % 1600) / 100.f;
    return win;
}

std::vector<Shape> conv_activation_shapes(const CnnModel& m) {
    std::vector<Shape> shapes;
    Shape s{m.in_h, m.in_w, m.in_c};
    for (const LayerSpec& l : m.layers) {
        s = output_shape(l, s);
        if (l.kind == LayerKind::Conv) shapes.push_back(s);
    }
    return shapes;
}

}  // namespace

TEST_CASE("acnet activation shapes are exactly 14x8x40, 10x6x40, 6x4x80") {
    CnnModel m = build_acnet(40);
    auto shapes = conv_activation_shapes(m);
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == Shape{14, 8, 40});
    CHECK(shapes[1] == Shape{10, 6, 40});
    CHECK(shapes[2] == Shape{6, 4, 80});
    CHECK(model_output_shape(m) == Shape{1, 1, 1});

    // pushing a zero tensor reproduces the cached shapes
    ForwardCache cache;
    forward(m, Tensor(16, 8, 10), RunMode::Eval, cache);
    CHECK(cache.acts[1].h == 14);
    CHECK(cache.acts[1].c == 40);
    CHECK(cache.acts[3].h == 10);
    CHECK(cache.acts[3].w == 6);
    CHECK(cache.acts[5].h == 6);
    CHECK(cache.acts[5].c == 80);
}

TEST_CASE("acnet+ pools conv1 back to 14x8x40 and shares the tail") {
    CnnModel m = build_acnet_plus(40);
    auto shapes = conv_activation_shapes(m);
    REQUIRE(shapes.size() == 3);
    CHECK(shapes[0] == Shape{28, 16, 40});
    CHECK(shapes[1] == Shape{10, 6, 40});
    CHECK(shapes[2] == Shape{6, 4, 80});

    ForwardCache cache;
    forward(m, Tensor(32, 16, 10), RunMode::Eval, cache);
    // after conv1 + relu + pool
    CHECK(cache.acts[3].h == 14);
    CHECK(cache.acts[3].w == 8);
    CHECK(cache.acts[3].c == 40);
}

TEST_CASE("conv multiplication totals are paper-consistent, exactly") {
    CHECK(count_multiplications(build_acnet(40)).conv == 3'264'000);
    CHECK(count_multiplications(build_acnet_plus(40)).conv == 5'280'000);
}

TEST_CASE("parameter count: 155,041 with fc_hidden 40, inside the 2e5 budget window") {
    // 6,040 + 24,040 + 48,080 + 76,840 + 41
    long long n = count_parameters(build_acnet(40));
    CHECK(n == 155'041);
    CHECK(n >= 150'000);
    CHECK(n <= 250'000);
    CHECK(count_parameters(build_acnet_plus(40)) == 155'041);
}

TEST_CASE("score_proposal: sigmoid head stays in (0,1), deterministic") {
    CnnModel m = build_acnet(40);
    init_gaussian(m, 0.2, 123);
    FeatureWindow win = random_window(16, 8, 10, 5);
    double s1 = score_proposal(m, win);
    double s2 = score_proposal(m, win);
    CHECK(s1 == s2);
    CHECK(s1 > 0.0);
    CHECK(s1 < 1.0);

    FeatureWindow bad(8, 8, 10);
    CHECK_THROWS_AS(score_proposal(m, bad), ModelMismatchError);
}

TEST_CASE("score_proposal: zero window with zero biases rides the sigmoid midpoint") {
    CnnModel m = build_acnet(40);
    init_gaussian(m, 0.2, 321);
    FeatureWindow zero(16, 8, 10);
    // all pre-activations vanish until the first sigmoid, which outputs 0.5
    ForwardCache cache;
    forward(m, window_to_tensor(zero), RunMode::Eval, cache);
    const Tensor& after_fc_sigmoid = cache.acts[10];  // dense -> sigmoid output
    for (double v : after_fc_sigmoid.data) CHECK(v == doctest::Approx(0.5));
    double s = score_proposal(m, zero);
    CHECK(s > 0.2);
    CHECK(s < 0.8);
}

TEST_CASE("brf features: lengths 10080 and 13920, ordered segments") {
    CnnModel m = build_acnet(40);
    init_gaussian(m, 0.1, 8);
    FeatureWindow win = random_window(16, 8, 10, 77);
    BrfFeatures f = extract_brf_features(m, win);
    CHECK(f.values.size() == 10080);
    CHECK(brf_feature_len(AcnetVariant::Acnet) == 10080);
    CHECK(f.offsets[0] == 0);
    CHECK(f.offsets[1] == 1280);
    CHECK(f.offsets[2] == 1280 + 4480);
    CHECK(f.offsets[3] == 1280 + 4480 + 2400);
    CHECK(f.offsets[4] == 10080);

    // segment 0 is the raw window
    for (size_t i = 0; i < 1280; ++i) CHECK(f.values[i] == doctest::Approx(double(win.data[i])));
    // conv segments are post-ReLU, hence non-negative
    for (size_t i = 1280; i < f.values.size(); ++i) CHECK(f.values[i] >= 0.0);

    CnnModel p = build_acnet_plus(40);
    init_gaussian(p, 0.1, 9);
    FeatureWindow win_p = random_window(32, 16, 10, 78);
    BrfFeatures fp = extract_brf_features(p, win_p);
    CHECK(fp.values.size() == 13920);
    CHECK(brf_feature_len(AcnetVariant::AcnetPlus) == 13920);
    CHECK(fp.offsets[1] == 5120);
    CHECK(fp.offsets[2] == 5120 + 4480);  // conv1 taken after the pool
}

TEST_CASE("brf extraction and scoring share one forward pass") {
    CnnModel m = build_acnet(40);
    init_gaussian(m, 0.15, 44);
    FeatureWindow win = random_window(16, 8, 10, 45);
    BrfFeatures f = extract_brf_features(m, win);
    CHECK(f.score == score_proposal(m, win));  // bit-exact
}
