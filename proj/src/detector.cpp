#include "acdet/detector.hpp"

#include <algorithm>
#include <cmath>

#include "acdet/errors.hpp"

namespace acdet {

double iou(const BBox& a, const BBox& b) {
    double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
    double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
    double inter = ix * iy;
    if (inter <= 0.0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

namespace {

// (channel, dy, dx) for each flat feature index; hoists the div/mod out of
// the sliding-window inner loop.
struct FeatureMap {
    std::vector<uint16_t> c, dy, dx;

    FeatureMap(int cells_h, int cells_w) {
        const int per_ch = cells_h * cells_w;
        const int total = per_ch * kNumChannels;
        c.resize(total);
        dy.resize(total);
        dx.resize(total);
        for (int f = 0; f < total; ++f) {
            c[f] = uint16_t(f / per_ch);
            int r = f % per_ch;
            dy[f] = uint16_t(r / cells_w);
            dx[f] = uint16_t(r % cells_w);
        }
    }
};

// Cascade evaluation reading features straight from the level planes, with
// the same arithmetic as cascade_evaluate on the flattened vector.
CascadeResult cascade_at(const BoostedForest& forest, const FeatureMap& fm,
                         const AggregatedChannels& agg, int cy, int cx) {
    CascadeResult r;
    const bool cascade = forest.has_cascade();
    const double thr = cascade ? double(forest.cascade_threshold) : 0.0;
    for (const DecisionTree& t : forest.trees) {
        int i = 0;
        while (!is_leaf(t.nodes[i])) {
            const TreeNode& n = t.nodes[i];
            float v = agg.ch[fm.c[n.feature]].at(cy + fm.dy[n.feature], cx + fm.dx[n.feature]);
            i = v < n.threshold ? n.left : n.right;
        }
        r.score += t.nodes[i].value;
        r.trees_evaluated++;
        if (cascade && r.score < thr) {
            r.rejected = true;
            return r;
        }
    }
    return r;
}

void check_geometry(const Pyramid& pyr, const DetectorModel& model) {
    if (pyr.cfg.block != model.pyramid.block || pyr.cfg.win_h != model.pyramid.win_h ||
        pyr.cfg.win_w != model.pyramid.win_w)
        throw ModelMismatchError("detector: pyramid was built with a different window/block config");
}

void check_compatible(const Pyramid& pyr, const DetectorModel& model) {
    check_geometry(pyr, model);
    if (int(model.forest.feature_len) != model.feature_len())
        throw ModelMismatchError("detector: forest feature length does not match window size");
}

}  // namespace

std::vector<Detection> detect_proposals(const Pyramid& pyr, const DetectorModel& model) {
    check_compatible(pyr, model);
    const int ch = model.cells_h(), cw = model.cells_w();
    const int block = model.pyramid.block;
    const double accept = model.forest.acceptance_threshold;
    FeatureMap fm(ch, cw);
    std::vector<Detection> out;
    for (size_t li = 0; li < pyr.levels.size(); ++li) {
        const PyramidLevel& lvl = pyr.levels[li];
        const double inv_s = 1.0 / lvl.scale;
        for (int cy = 0; cy + ch <= lvl.agg.h; ++cy)
            for (int cx = 0; cx + cw <= lvl.agg.w; ++cx) {
                CascadeResult r = cascade_at(model.forest, fm, lvl.agg, cy, cx);
                if (r.rejected || r.score < accept) continue;
                Detection d;
                d.score = r.score;
                d.level = int(li);
                d.cell_x = cx;
                d.cell_y = cy;
                d.bbox = {cx * block * inv_s, cy * block * inv_s, model.pyramid.win_w * inv_s,
                          model.pyramid.win_h * inv_s};
                out.push_back(d);
            }
    }
    return out;  // already ordered by (level, cell_y, cell_x)
}

FeatureWindow extract_window(const Pyramid& pyr, const Detection& det,
                             const DetectorModel& model) {
    check_geometry(pyr, model);
    if (det.level < 0 || det.level >= int(pyr.levels.size()))
        throw DataError("extract_window: detection level out of range");
    const AggregatedChannels& agg = pyr.levels[det.level].agg;
    const int ch = model.cells_h(), cw = model.cells_w();
    if (det.cell_y < 0 || det.cell_x < 0 || det.cell_y + ch > agg.h || det.cell_x + cw > agg.w)
        throw DataError("extract_window: window outside level bounds");
    FeatureWindow win(ch, cw, kNumChannels);
    for (int c = 0; c < kNumChannels; ++c)
        for (int y = 0; y < ch; ++y) {
            const float* src = agg.ch[c].row(det.cell_y + y) + det.cell_x;
            std::copy(src, src + cw, &win.at(c, y, 0));
        }
    return win;
}

std::vector<Detection> nms(std::vector<Detection> dets, double overlap, bool use_iou) {
    if (!(overlap > 0.0 && overlap < 1.0)) throw DataError("nms: overlap must be in (0,1)");
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.bbox.x != b.bbox.x) return a.bbox.x < b.bbox.x;
        return a.bbox.y < b.bbox.y;
    });
    std::vector<Detection> kept;
    for (const Detection& d : dets) {
        bool ok = true;
        for (const Detection& k : kept) {
            double ov;
            if (use_iou) {
                ov = iou(d.bbox, k.bbox);
            } else {
                double ix = std::max(
                    0.0, std::min(d.bbox.x2(), k.bbox.x2()) - std::max(d.bbox.x, k.bbox.x));
                double iy = std::max(
                    0.0, std::min(d.bbox.y2(), k.bbox.y2()) - std::max(d.bbox.y, k.bbox.y));
                ov = ix * iy / std::min(d.bbox.area(), k.bbox.area());
            }
            if (ov > overlap) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(d);
    }
    return kept;
}

std::vector<double> window_scores(const Pyramid& pyr, const DetectorModel& model) {
    DetectorModel open = model;
    open.forest.acceptance_threshold = -std::numeric_limits<float>::infinity();
    std::vector<double> scores;
    for (const Detection& d : detect_proposals(pyr, open)) scores.push_back(d.score);
    return scores;
}

std::vector<WindowScore> window_scores_open(const Pyramid& pyr, const DetectorModel& model) {
    check_compatible(pyr, model);
    const int ch = model.cells_h(), cw = model.cells_w();
    FeatureMap fm(ch, cw);
    std::vector<WindowScore> out;
    for (const PyramidLevel& lvl : pyr.levels)
        for (int cy = 0; cy + ch <= lvl.agg.h; ++cy)
            for (int cx = 0; cx + cw <= lvl.agg.w; ++cx) {
                WindowScore w;
                double sum = 0.0, lowest = std::numeric_limits<double>::infinity();
                for (const DecisionTree& t : model.forest.trees) {
                    int i = 0;
                    while (!is_leaf(t.nodes[i])) {
                        const TreeNode& n = t.nodes[i];
                        float v = lvl.agg.ch[fm.c[n.feature]].at(cy + fm.dy[n.feature],
                                                                 cx + fm.dx[n.feature]);
                        i = v < n.threshold ? n.left : n.right;
                    }
                    sum += t.nodes[i].value;
                    lowest = std::min(lowest, sum);
                }
                w.score = sum;
                w.min_prefix = model.forest.trees.empty() ? 0.0 : lowest;
                out.push_back(w);
            }
    return out;
}

CalibrationResult calibrate_operating_point(const DetectorModel& model,
                                            const std::vector<Pyramid>& frames, double target) {
    if (frames.empty()) throw DataError("calibrate_operating_point: no calibration frames");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<WindowScore> all;
    for (const Pyramid& p : frames) {
        auto ws = window_scores_open(p, model);
        all.insert(all.end(), ws.begin(), ws.end());
    }
    CalibrationResult r;
    r.cascade_threshold = -inf;
    const double n_frames = double(frames.size());
    if (all.empty() || double(all.size()) / n_frames < 0.9 * target) {
        // even accepting everything stays under target
        r.threshold = -inf;
        r.achieved_per_frame = double(all.size()) / n_frames;
        r.ok = false;
        return r;
    }
    std::sort(all.begin(), all.end(),
              [](const WindowScore& a, const WindowScore& b) { return a.score > b.score; });
    size_t want = size_t(std::llround(target * n_frames));
    size_t best_count;
    if (want >= all.size()) {
        best_count = all.size();
        r.threshold = -inf;
    } else {
        // the exact budget may sit inside a tie block; take the closer edge
        size_t lo = want, hi = want;
        while (lo > 0 && all[lo - 1].score == all[want - 1].score) --lo;
        while (hi < all.size() && all[hi].score == all[want - 1].score) ++hi;
        best_count = hi;
        if (lo > 0 &&
            std::llabs(int64_t(lo) - int64_t(want)) < std::llabs(int64_t(hi) - int64_t(want)))
            best_count = lo;
        r.threshold = best_count == 0 ? std::nextafter(all.front().score, inf)
                                      : all[best_count - 1].score;
    }
    size_t kept = 0;
    for (const WindowScore& w : all) kept += w.score >= r.threshold;
    // loosen the cascade just below the deepest dip of any accepted window
    double dip = 0.0;
    for (size_t i = 0; i < kept; ++i) dip = std::min(dip, all[i].min_prefix);
    r.cascade_threshold = dip - 1e-3;
    r.achieved_per_frame = double(kept) / n_frames;
    r.ok = r.achieved_per_frame >= 0.9 * target && r.achieved_per_frame <= 1.1 * target;
    return r;
}

}  // namespace acdet
