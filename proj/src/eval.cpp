#include "acdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

bool effectively_ignored(const GtBox& g, const EvalProtocol& p) {
    return g.ignore || g.box.h < p.min_gt_height;
}

}  // namespace

LabeledFrame label_frame(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                         const EvalProtocol& protocol) {
    std::vector<Detection> sorted = dets;
    std::sort(sorted.begin(), sorted.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.bbox.x != b.bbox.x) return a.bbox.x < b.bbox.x;
        return a.bbox.y < b.bbox.y;
    });

    LabeledFrame out;
    std::vector<bool> matched(gts.size(), false);
    for (const GtBox& g : gts)
        if (!effectively_ignored(g, protocol)) out.n_eligible_gt++;

    for (const Detection& d : sorted) {
        int best = -1;
        double best_iou = 0.0;
        for (size_t gi = 0; gi < gts.size(); ++gi) {
            if (matched[gi] || effectively_ignored(gts[gi], protocol)) continue;
            double ov = iou(d.bbox, gts[gi].box);
            if (ov >= protocol.iou_threshold && ov > best_iou) {
                best_iou = ov;
                best = int(gi);
            }
        }
        if (best >= 0) {
            matched[size_t(best)] = true;
            out.dets.emplace_back(d.score, DetKind::TruePos);
            continue;
        }
        bool hits_ignore = false;
        for (const GtBox& g : gts)
            if (effectively_ignored(g, protocol) && iou(d.bbox, g.box) >= protocol.iou_threshold) {
                hits_ignore = true;
                break;
            }
        out.dets.emplace_back(d.score, hits_ignore ? DetKind::Ignored : DetKind::FalsePos);
    }
    return out;
}

MatchCounts match_frame(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                        const EvalProtocol& protocol) {
    LabeledFrame lf = label_frame(dets, gts, protocol);
    MatchCounts c;
    for (auto& [score, kind] : lf.dets) {
        if (kind == DetKind::TruePos) c.tp++;
        if (kind == DetKind::FalsePos) c.fp++;
    }
    c.n_miss = lf.n_eligible_gt - c.tp;
    return c;
}

namespace {

struct SweepPoint {
    double fppi, miss_rate, recall, precision;
};

// One point per distinct score threshold, from +inf down.
std::vector<SweepPoint> sweep(const std::vector<LabeledFrame>& frames, long long& total_gt) {
    std::vector<std::pair<double, DetKind>> all;
    total_gt = 0;
    for (const LabeledFrame& f : frames) {
        total_gt += f.n_eligible_gt;
        for (auto& d : f.dets)
            if (d.second != DetKind::Ignored) all.push_back(d);
    }
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    const double n_frames = double(frames.size());
    std::vector<SweepPoint> pts;
    pts.push_back({0.0, 1.0, 0.0, 1.0});  // threshold above every score
    long long tp = 0, fp = 0;
    for (size_t i = 0; i < all.size(); ++i) {
        if (all[i].second == DetKind::TruePos) tp++;
        else fp++;
        if (i + 1 < all.size() && all[i + 1].first == all[i].first) continue;
        SweepPoint p;
        p.fppi = double(fp) / n_frames;
        p.miss_rate = total_gt > 0 ? 1.0 - double(tp) / double(total_gt) : 0.0;
        p.recall = total_gt > 0 ? double(tp) / double(total_gt) : 0.0;
        p.precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 1.0;
        pts.push_back(p);
    }
    return pts;
}

}  // namespace

MrResult log_average_miss_rate(const std::vector<LabeledFrame>& frames,
                               const EvalProtocol& protocol) {
    if (frames.empty()) throw DataError("log_average_miss_rate: no frames");
    long long total_gt = 0;
    auto pts = sweep(frames, total_gt);
    if (total_gt == 0) throw DataError("log_average_miss_rate: no eligible ground truth");

    MrResult r;
    r.curve.x_name = "fppi";
    r.curve.y_name = "miss_rate";
    for (const SweepPoint& p : pts) r.curve.pts.emplace_back(p.fppi, p.miss_rate);

    double log_sum = 0.0;
    const double lmin = std::log(protocol.fppi_min), lmax = std::log(protocol.fppi_max);
    for (int k = 0; k < protocol.n_fppi_points; ++k) {
        double f = std::exp(lmin + (lmax - lmin) * double(k) /
                                       double(std::max(1, protocol.n_fppi_points - 1)));
        double best = 1.0;  // the empty-detection point (fppi 0) always qualifies
        for (const SweepPoint& p : pts)
            if (p.fppi <= f + 1e-12) best = std::min(best, p.miss_rate);
        log_sum += std::log(std::max(best, protocol.mr_floor));
    }
    r.mr = std::exp(log_sum / double(protocol.n_fppi_points));
    return r;
}

ApResult average_precision(const std::vector<LabeledFrame>& frames, const EvalProtocol& protocol) {
    if (frames.empty()) throw DataError("average_precision: no frames");
    long long total_gt = 0;
    auto pts = sweep(frames, total_gt);
    if (total_gt == 0) throw DataError("average_precision: no eligible ground truth");

    ApResult r;
    r.curve.x_name = "recall";
    r.curve.y_name = "precision";
    for (size_t i = 1; i < pts.size(); ++i) r.curve.pts.emplace_back(pts[i].recall, pts[i].precision);

    std::vector<double> env(pts.size(), 0.0);  // suffix max of precision
    for (size_t i = pts.size(); i-- > 1;)
        env[i] = std::max(pts[i].precision, i + 1 < pts.size() ? env[i + 1] : 0.0);

    if (protocol.ap_all_points) {
        double prev_recall = 0.0, ap = 0.0;
        for (size_t i = 1; i < pts.size(); ++i) {
            ap += (pts[i].recall - prev_recall) * env[i];
            prev_recall = pts[i].recall;
        }
        r.ap = ap;
        return r;
    }
    double ap = 0.0;
    for (int k = 0; k <= 10; ++k) {
        double rec = double(k) / 10.0;
        double best = 0.0;
        for (size_t i = 1; i < pts.size(); ++i)
            if (pts[i].recall >= rec - 1e-12) {
                best = env[i];
                break;
            }
        ap += best;
    }
    r.ap = ap / 11.0;
    return r;
}

void emit_curve(const Curve& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write curve: " + path);
    f << curve.x_name << "," << curve.y_name << "\n";
    f.precision(9);
    for (auto& [x, y] : curve.pts) f << x << "," << y << "\n";
}

Curve parse_curve(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open curve: " + path);
    Curve c;
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty curve file: " + path);
    auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("bad curve header: " + path);
    c.x_name = line.substr(0, comma);
    c.y_name = line.substr(comma + 1);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        double x, y;
        char sep;
        if (!(ss >> x >> sep >> y) || sep != ',') throw DataError("bad curve row: " + path);
        c.pts.emplace_back(x, y);
    }
    return c;
}

}  // namespace acdet
