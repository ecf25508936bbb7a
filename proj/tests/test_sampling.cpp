#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <tuple>

#include "acdet/errors.hpp"
#include "acdet/sampling.hpp"
#include "acdet/synth.hpp"

using namespace acdet;

namespace {

// Small deterministic scene pack shared by the mining tests.
struct Scene {
    SyntheticSceneSpec spec;
    std::vector<AnnotatedFrame> frames;
    std::vector<Image> images;
    DetectorModel detector;

    FrameLoader loader() const {
        return [this](const AnnotatedFrame& f) { return images[size_t(f.frame_id)]; };
    }
};

Scene make_scene(int n_frames, uint64_t seed) {
    Scene s;
    s.spec.n_frames = n_frames;
    s.spec.seed = seed;
    s.spec.min_height = 52;
    s.spec.max_height = 176;
    for (int i = 0; i < n_frames; ++i) {
        SynthFrame f = render_synth_frame(s.spec, i);
        AnnotatedFrame a;
        a.frame_id = i;
        a.boxes = f.gts;
        s.frames.push_back(a);
        s.images.push_back(std::move(f.img));
    }
    s.detector.pyramid.min_object_height = 52;
    s.detector.pyramid.scales_per_octave = 6;
    return s;
}

// quick stage-1 detector for the scene
DetectorModel quick_stage1(Scene& s, int n_trees = 64) {
    Stage1Config cfg;
    cfg.boost.n_trees = n_trees;
    cfg.boost.max_depth = 2;
    cfg.boost.feature_subset_fraction = 1.0 / 16.0;
    cfg.round_trees = {32};
    cfg.random_negs_per_frame = 10;
    cfg.hard_negs_per_frame = 5;
    cfg.seed = 99;
    MatchPolicy policy;
    return train_stage1(s.frames, s.loader(), s.detector.pyramid, policy, cfg);
}

// untrained detector with tie-free scores; mining contracts do not depend on
// detection quality, and this keeps the fixtures fast and deterministic
DetectorModel random_detector(const Scene& s, uint64_t seed, double per_frame_target) {
    DetectorModel m;
    m.pyramid = s.detector.pyramid;
    std::mt19937_64 rng(seed);
    auto u = [&rng] { return float((double(rng() >> 11) + 0.5) * 0x1.0p-53); };
    m.forest.feature_len = uint32_t(m.feature_len());
    for (int i = 0; i < 24; ++i) {
        DecisionTree t;
        TreeNode root;
        root.feature = uint32_t(rng() % uint64_t(m.feature_len()));
        root.threshold = 16.f * u();
        root.left = 1;
        root.right = 2;
        TreeNode l, r;
        l.value = 2.f * u() - 1.f;
        r.value = 2.f * u() - 1.f;
        t.nodes = {root, l, r};
        m.forest.trees.push_back(std::move(t));
    }
    std::vector<Pyramid> ps;
    for (const Image& img : s.images) ps.push_back(build_pyramid(img, m.pyramid));
    CalibrationResult cal = calibrate_operating_point(m, ps, per_frame_target);
    m.forest.acceptance_threshold = float(cal.threshold);
    m.forest.cascade_threshold = float(cal.cascade_threshold);
    return m;
}

}  // namespace

TEST_CASE("fppi_threshold: examples and invariants") {
    std::vector<std::vector<double>> scores(10, std::vector<double>{0.9});
    CHECK(fppi_threshold(scores, 1.0) <= 0.9);
    CHECK(fppi_threshold(scores, 0.0) > 0.9);
    CHECK(fppi_threshold({{}, {}, {}}, 1.0) == std::numeric_limits<double>::infinity());

    std::mt19937_64 rng(5);
    std::vector<std::vector<double>> big(12);
    for (auto& f : big)
        for (int i = 0; i < 25; ++i) f.push_back(double(rng() % 1000) / 1000.0);
    double prev = std::numeric_limits<double>::infinity();
    for (double target : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        double thr = fppi_threshold(big, target);
        CHECK(thr <= prev);
        prev = thr;
        size_t kept = 0;
        for (auto& f : big)
            for (double v : f) kept += v >= thr;
        CHECK(double(kept) / 12.0 <= target);  // achieved FPPI <= target, by construction
    }
}

TEST_CASE("policy validation: neg_iou_max above pos_iou_min is rejected") {
    Scene s = make_scene(1, 41);
    DetectorModel d = random_detector(s, 4, 20.0);
    Pyramid pyr = build_pyramid(s.images[0], d.pyramid);
    MatchPolicy bad;
    bad.pos_iou_min = 0.3;
    bad.neg_iou_max = 0.5;
    CHECK_THROWS_AS(collect_from_frame(pyr, s.frames[0], d, bad), DataError);
}

TEST_CASE("mining: negatives stay under the IoU bound, positives anchored to GT") {
    Scene s = make_scene(6, 17);
    DetectorModel d = random_detector(s, 5, 30.0);

    MatchPolicy policy;  // jittered, 0.5/0.5
    int total_pos = 0;
    for (int fi = 0; fi < 6; ++fi) {
        Pyramid pyr = build_pyramid(s.images[size_t(fi)], d.pyramid);
        FrameSamples fs = collect_from_frame(pyr, s.frames[size_t(fi)], d, policy);
        size_t n_gt = 0;
        for (const GtBox& g : s.frames[size_t(fi)].boxes) n_gt += !g.ignore;
        // jittered mode adds at most one extra window per GT
        CHECK(fs.positives.size() + size_t(fs.skipped_gts) <= 2 * n_gt);
        CHECK(fs.positives.size() + size_t(fs.skipped_gts) >= n_gt);
        total_pos += int(fs.positives.size());
        for (const TrainingWindow& w : fs.negatives) {
            BBox wb{0, 0, 1, 1};
            // recompute the window box from its cells
            double inv_s = 1.0 / pyr.levels[size_t(w.level)].scale;
            wb = {w.cell_x * 4 * inv_s, w.cell_y * 4 * inv_s, 32 * inv_s, 64 * inv_s};
            for (const GtBox& g : s.frames[size_t(fi)].boxes)
                if (!g.ignore) CHECK(iou(wb, g.box) < policy.neg_iou_max);
        }
        // no window in both classes
        for (const TrainingWindow& p : fs.positives)
            for (const TrainingWindow& n : fs.negatives) {
                bool same = p.level == n.level && p.cell_x == n.cell_x && p.cell_y == n.cell_y;
                CHECK(!same);
            }
    }
    CHECK(total_pos > 0);
}

TEST_CASE("gt-only vs jittered: jitter adds windows, boundary IoU excluded") {
    Scene s = make_scene(5, 23);
    DetectorModel d = random_detector(s, 6, 40.0);

    MatchPolicy gt_only;
    gt_only.positive_mode = PositiveMode::GtOnly;
    MatchPolicy jitter;
    jitter.positive_mode = PositiveMode::GtPlusJittered;
    size_t n_gt_only = 0, n_jitter = 0;
    for (int fi = 0; fi < 5; ++fi) {
        Pyramid pyr = build_pyramid(s.images[size_t(fi)], d.pyramid);
        n_gt_only += collect_from_frame(pyr, s.frames[size_t(fi)], d, gt_only).positives.size();
        n_jitter += collect_from_frame(pyr, s.frames[size_t(fi)], d, jitter).positives.size();
    }
    CHECK(n_jitter >= n_gt_only);
}

TEST_CASE("frame with no GT yields only negatives") {
    Scene s = make_scene(2, 67);
    DetectorModel d = random_detector(s, 7, 25.0);
    AnnotatedFrame empty = s.frames[0];
    empty.boxes.clear();
    Pyramid pyr = build_pyramid(s.images[0], d.pyramid);
    FrameSamples fs = collect_from_frame(pyr, empty, d, MatchPolicy{});
    CHECK(fs.positives.empty());
    CHECK(!fs.negatives.empty());
    CHECK(fs.negatives.size() == detect_proposals(pyr, d).size());
}

TEST_CASE("windows overlapping ignore regions are dropped from both classes") {
    Scene s = make_scene(2, 11);
    DetectorModel d = random_detector(s, 8, 40.0);
    // plant window-scale ignore boxes and verify no sample violates the bound
    AnnotatedFrame marked = s.frames[0];
    marked.boxes.push_back({{60, 80, 50, 100}, true});
    marked.boxes.push_back({{200, 60, 40, 80}, true});
    Pyramid pyr = build_pyramid(s.images[0], d.pyramid);
    MatchPolicy policy;
    FrameSamples with_ignore = collect_from_frame(pyr, marked, d, policy);
    FrameSamples without = collect_from_frame(pyr, s.frames[0], d, policy);
    CHECK(with_ignore.negatives.size() <= without.negatives.size());
    auto window_box = [&](const TrainingWindow& w) {
        double inv_s = 1.0 / pyr.levels[size_t(w.level)].scale;
        return BBox{w.cell_x * 4 * inv_s, w.cell_y * 4 * inv_s, 32 * inv_s, 64 * inv_s};
    };
    for (const TrainingWindow& w : with_ignore.negatives)
        for (const GtBox& g : marked.boxes)
            if (g.ignore) CHECK(iou(window_box(w), g.box) <= policy.ignore_iou_max);
    for (const TrainingWindow& w : with_ignore.positives)
        for (const GtBox& g : marked.boxes)
            if (g.ignore) CHECK(iou(window_box(w), g.box) <= policy.ignore_iou_max);
}

TEST_CASE("stage-1 training: deterministic, cascade threshold installed") {
    Scene s = make_scene(4, 7);
    DetectorModel a = quick_stage1(s);
    DetectorModel b = quick_stage1(s);
    CHECK(a.forest.trees.size() == b.forest.trees.size());
    REQUIRE(!a.forest.trees.empty());
    for (size_t t = 0; t < a.forest.trees.size(); ++t) {
        REQUIRE(a.forest.trees[t].nodes.size() == b.forest.trees[t].nodes.size());
        for (size_t n = 0; n < a.forest.trees[t].nodes.size(); ++n) {
            CHECK(a.forest.trees[t].nodes[n].feature == b.forest.trees[t].nodes[n].feature);
            CHECK(a.forest.trees[t].nodes[n].threshold == b.forest.trees[t].nodes[n].threshold);
            CHECK(a.forest.trees[t].nodes[n].value == b.forest.trees[t].nodes[n].value);
        }
    }
    CHECK(a.forest.cascade_threshold == -1.0f);
}

TEST_CASE("bootstrap: appends monotonically, dedups, reproducible") {
    Scene s = make_scene(8, 3);
    DetectorModel d = random_detector(s, 9, 30.0);

    MatchPolicy policy;
    TrainingSet initial = collect_initial_set(s.frames, s.loader(), d, policy, 6.0);
    REQUIRE(!initial.positives.empty());
    REQUIRE(!initial.negatives.empty());

    SgdConfig sgd;
    sgd.batch_size = 64;
    sgd.max_epochs = 3;
    sgd.lr = 0.01;
    BootstrapConfig cfg;
    cfg.max_rounds = 2;
    cfg.init_std = 0.02;
    cfg.seed = 12;
    cfg.fppi_target = 1.0;

    BootstrapResult r1 = bootstrap_acnet(s.frames, s.loader(), d, policy, initial, sgd, cfg);
    BootstrapResult r2 = bootstrap_acnet(s.frames, s.loader(), d, policy, initial, sgd, cfg);
    CHECK(r1.set.negatives.size() == r2.set.negatives.size());
    CHECK(r1.set.positives.size() == r2.set.positives.size());
    REQUIRE(!r1.rounds.empty());
    CHECK(r1.set.negatives.size() >= initial.negatives.size());  // grows monotonically

    // models agree on a probe window
    FeatureWindow probe = initial.positives[0].win;
    CHECK(score_proposal(r1.model, probe) == score_proposal(r2.model, probe));

    // dedup: no repeated negative keys
    std::set<std::tuple<int, int, int, int>> keys;
    for (const TrainingWindow& w : r1.set.negatives) {
        auto key = std::make_tuple(w.frame_id, w.level, w.cell_x, w.cell_y);
        CHECK(keys.insert(key).second);
    }
}

TEST_CASE("train_brf: no cascade, per-node subsets of ceil(10080/16)") {
    Scene s = make_scene(3, 29);
    DetectorModel d = random_detector(s, 10, 15.0);
    MatchPolicy policy;
    TrainingSet set = collect_initial_set(s.frames, s.loader(), d, policy, 3.0);
    REQUIRE(!set.positives.empty());
    REQUIRE(!set.negatives.empty());

    CnnModel cnn = build_acnet(40);
    init_gaussian(cnn, 0.02, 5);

    BoostTrainConfig cfg;
    cfg.n_trees = 8;
    cfg.max_depth = 5;
    cfg.feature_subset_fraction = 1.0 / 16.0;
    cfg.rng_seed = 31;
    BoostedForest brf = train_brf(cnn, set, cfg);
    CHECK(!brf.has_cascade());
    CHECK(brf.feature_len == 10080);
    CHECK(size_t(std::ceil(10080.0 / 16.0)) == 630);

    auto hist = brf_selection_histogram(brf, AcnetVariant::Acnet, 4);
    REQUIRE(hist.size() == (brf.trees.size() + 3) / 4);
    uint64_t total = 0;
    for (auto& chunk : hist) total += chunk[0] + chunk[1] + chunk[2] + chunk[3];
    uint64_t internal = 0;
    for (const DecisionTree& t : brf.trees)
        for (const TreeNode& n : t.nodes) internal += !is_leaf(n);
    CHECK(total == internal);
}

TEST_CASE("gt projection picks the level whose window height matches") {
    Scene s = make_scene(1, 53);
    DetectorModel d = random_detector(s, 11, 20.0);
    Pyramid pyr = build_pyramid(s.images[0], d.pyramid);
    for (const GtBox& g : s.frames[0].boxes) {
        if (g.ignore) continue;
        auto proj = project_gt_to_window(pyr, g.box, d);
        REQUIRE(proj.has_value());
        double win_h = 64.0 / pyr.levels[size_t(proj->level)].scale;
        // no other level is closer in log-height
        for (size_t li = 0; li < pyr.levels.size(); ++li) {
            double other = 64.0 / pyr.levels[li].scale;
            CHECK(std::abs(std::log(win_h / g.box.h)) <=
                  std::abs(std::log(other / g.box.h)) + 1e-12);
        }
    }
}
