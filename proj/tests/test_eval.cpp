#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "acdet/errors.hpp"
#include "acdet/eval.hpp"
#include "oracles.hpp"

using namespace acdet;

namespace {

Detection det(double x, double y, double w, double h, double score) {
    Detection d;
    d.bbox = {x, y, w, h};
    d.score = score;
    return d;
}

GtBox gt(double x, double y, double w, double h, bool ignore = false) {
    return {{x, y, w, h}, ignore};
}

EvalProtocol proto(double min_h = 0.0) {
    EvalProtocol p;
    p.min_gt_height = min_h;
    return p;
}

}  // namespace

TEST_CASE("match_frame: canonical micro-cases") {
    // one GT, one detection at IoU 0.6
    auto c = match_frame({det(0, 0, 10, 17, 0.9)}, {gt(0, 0, 10, 10)}, proto());
    CHECK(c.tp == 1);
    CHECK(c.fp == 0);
    CHECK(c.n_miss == 0);

    // duplicate detection becomes a false positive
    c = match_frame({det(0, 0, 10, 10, 0.9), det(1, 0, 10, 10, 0.8)}, {gt(0, 0, 10, 10)}, proto());
    CHECK(c.tp == 1);
    CHECK(c.fp == 1);
    CHECK(c.n_miss == 0);

    // nothing detected
    c = match_frame({}, {gt(0, 0, 10, 10)}, proto());
    CHECK(c.tp == 0);
    CHECK(c.fp == 0);
    CHECK(c.n_miss == 1);
}

TEST_CASE("match_frame: ignore boxes absorb detections, short GT is ignored") {
    auto c = match_frame({det(0, 0, 10, 10, 0.9)}, {gt(0, 0, 10, 10, true)}, proto());
    CHECK(c.tp == 0);
    CHECK(c.fp == 0);
    CHECK(c.n_miss == 0);

    c = match_frame({det(0, 0, 10, 30, 0.9)}, {gt(0, 0, 10, 30)}, proto(50.0));
    CHECK(c.tp == 0);
    CHECK(c.fp == 0);  // matches the under-height GT, counted as neither
    CHECK(c.n_miss == 0);
}

TEST_CASE("MR: perfect detector clamps to the floor, silent detector gives 1") {
    std::vector<LabeledFrame> frames;
    for (int f = 0; f < 10; ++f) {
        LabeledFrame lf;
        lf.n_eligible_gt = 2;
        lf.dets = {{0.9, DetKind::TruePos}, {0.8, DetKind::TruePos}};
        frames.push_back(lf);
    }
    MrResult perfect = log_average_miss_rate(frames, proto());
    CHECK(perfect.mr == doctest::Approx(1e-4));

    for (auto& lf : frames) lf.dets.clear();
    MrResult silent = log_average_miss_rate(frames, proto());
    CHECK(silent.mr == doctest::Approx(1.0));
}

TEST_CASE("AP: perfect ranking 1.0, no detections 0.0") {
    std::vector<LabeledFrame> frames(4);
    for (auto& lf : frames) {
        lf.n_eligible_gt = 1;
        lf.dets = {{0.9, DetKind::TruePos}};
    }
    CHECK(average_precision(frames, proto()).ap == doctest::Approx(1.0));

    for (auto& lf : frames) lf.dets.clear();
    CHECK(average_precision(frames, proto()).ap == doctest::Approx(0.0));
}

TEST_CASE("AP: hand-built 3-detection / 2-GT case against direct enumeration") {
    // scores descending: TP, FP, TP; 2 eligible GT in one frame
    LabeledFrame lf;
    lf.n_eligible_gt = 2;
    lf.dets = {{0.9, DetKind::TruePos}, {0.8, DetKind::FalsePos}, {0.7, DetKind::TruePos}};
    ApResult r = average_precision({lf}, proto());
    // PR points: (0.5, 1), (0.5, 0.5), (1.0, 2/3)
    // 11-point: recall 0..0.5 -> max precision 1; 0.6..1.0 -> 2/3
    double expected = (6 * 1.0 + 5 * (2.0 / 3.0)) / 11.0;
    CHECK(r.ap == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("curves are monotone under threshold sweeps") {
    std::mt19937_64 rng(3);
    std::vector<LabeledFrame> frames;
    for (int f = 0; f < 30; ++f) {
        LabeledFrame lf;
        lf.n_eligible_gt = int(rng() % 3);
        int n = int(rng() % 6);
        int available_tp = lf.n_eligible_gt;
        for (int i = 0; i < n; ++i) {
            bool tp = available_tp > 0 && (rng() & 1);
            if (tp) --available_tp;
            lf.dets.push_back({double(rng() % 1000) / 1000.0,
                               tp ? DetKind::TruePos : DetKind::FalsePos});
        }
        frames.push_back(lf);
    }
    MrResult r = log_average_miss_rate(frames, proto());
    for (size_t i = 1; i < r.curve.pts.size(); ++i) {
        CHECK(r.curve.pts[i].first >= r.curve.pts[i - 1].first);    // fppi grows
        CHECK(r.curve.pts[i].second <= r.curve.pts[i - 1].second);  // miss rate falls
    }
}

TEST_CASE("MR and AP are rank statistics: invariant under monotone score maps") {
    std::mt19937_64 rng(17);
    std::vector<LabeledFrame> frames, scaled;
    for (int f = 0; f < 25; ++f) {
        LabeledFrame lf;
        lf.n_eligible_gt = 1 + int(rng() % 2);
        int budget = lf.n_eligible_gt;
        for (int i = 0; i < int(rng() % 5); ++i) {
            bool tp = budget > 0 && (rng() % 3) != 0;
            if (tp) --budget;
            lf.dets.push_back({double(rng() % 997) / 997.0,
                               tp ? DetKind::TruePos : DetKind::FalsePos});
        }
        LabeledFrame lf2 = lf;
        for (auto& d : lf2.dets) d.first = 3.0 * d.first + 7.0;  // strictly monotone
        frames.push_back(lf);
        scaled.push_back(lf2);
    }
    CHECK(log_average_miss_rate(frames, proto()).mr ==
          doctest::Approx(log_average_miss_rate(scaled, proto()).mr).epsilon(1e-12));
    CHECK(average_precision(frames, proto()).ap ==
          doctest::Approx(average_precision(scaled, proto()).ap).epsilon(1e-12));
}

TEST_CASE("greedy matching equals exhaustive assignment on disjoint-GT micro-cases") {
    std::mt19937_64 rng(29);
    EvalProtocol p = proto();
    for (int trial = 0; trial < 400; ++trial) {
        // up to 3 disjoint GT boxes on a grid
        std::vector<GtBox> gts;
        int n_gt = 1 + int(rng() % 3);
        for (int g = 0; g < n_gt; ++g)
            gts.push_back(gt(double(g) * 40.0, double(rng() % 20), 10 + double(rng() % 10),
                             10 + double(rng() % 10)));
        std::vector<Detection> dets;
        int n_det = 1 + int(rng() % 5);
        for (int i = 0; i < n_det; ++i) {
            const GtBox& target = gts[rng() % gts.size()];
            double jx = double(int(rng() % 9)) - 4.0, jy = double(int(rng() % 9)) - 4.0;
            dets.push_back(det(target.box.x + jx, target.box.y + jy, target.box.w, target.box.h,
                               double(rng() % 1000) / 1000.0));
        }
        // skip cases with tied IoUs
        std::vector<double> ious;
        std::vector<std::vector<int>> admissible(dets.size());
        bool tie = false;
        for (size_t d = 0; d < dets.size(); ++d)
            for (size_t g = 0; g < gts.size(); ++g) {
                double ov = iou(dets[d].bbox, gts[g].box);
                if (ov >= p.iou_threshold) admissible[d].push_back(int(g));
                for (double prev : ious)
                    if (ov > 0 && ov == prev) tie = true;
                if (ov > 0) ious.push_back(ov);
            }
        if (tie) continue;
        MatchCounts c = match_frame(dets, gts, p);
        int best = oracle::max_assignment_ref(admissible, int(gts.size()));
        CHECK(c.tp == best);
        CHECK(c.tp + c.fp == int(dets.size()));
        CHECK(c.n_miss == int(gts.size()) - c.tp);
    }
}

TEST_CASE("curve CSV: round trip, fppi column increasing, empty curve") {
    Curve c;
    c.x_name = "fppi";
    c.y_name = "miss_rate";
    c.pts = {{0.0, 1.0}, {0.125, 0.5}, {1.5, 0.0625}};
    std::string path = "curve_roundtrip.csv";
    emit_curve(c, path);
    Curve d = parse_curve(path);
    CHECK(d.x_name == c.x_name);
    CHECK(d.y_name == c.y_name);
    REQUIRE(d.pts.size() == c.pts.size());
    for (size_t i = 0; i < c.pts.size(); ++i) {
        CHECK(d.pts[i].first == doctest::Approx(c.pts[i].first).epsilon(1e-9));
        CHECK(d.pts[i].second == doctest::Approx(c.pts[i].second).epsilon(1e-9));
        if (i > 0) CHECK(d.pts[i].first > d.pts[i - 1].first);
    }
    Curve empty;
    empty.x_name = "recall";
    empty.y_name = "precision";
    emit_curve(empty, path);
    Curve e = parse_curve(path);
    CHECK(e.pts.empty());
    CHECK(e.x_name == "recall");
    std::remove(path.c_str());
}

TEST_CASE("no frames or no eligible GT raise errors") {
    CHECK_THROWS_AS(log_average_miss_rate({}, proto()), DataError);
    std::vector<LabeledFrame> frames(3);
    CHECK_THROWS_AS(log_average_miss_rate(frames, proto()), DataError);
}
