#include "acdet/purge.hpp"

#include <algorithm>
#include <cmath>

#include "acdet/errors.hpp"

namespace acdet {

GeometryFit fit_geometry(const std::vector<GtBox>& gts, double coverage, int frame_height) {
    std::vector<std::pair<double, double>> pts;  // (y_bottom, height)
    for (const GtBox& g : gts)
        if (!g.ignore) pts.emplace_back(g.box.y2(), g.box.h);
    if (pts.size() < 10) throw DataError("fit_geometry: need at least 10 non-ignore boxes");

    GeometryFit fit;
    fit.model.frame_height = frame_height;

    double sy = 0, sh = 0, syy = 0, syh = 0;
    for (auto& [y, h] : pts) {
        sy += y;
        sh += h;
        syy += y * y;
        syh += y * h;
    }
    const double n = double(pts.size());
    const double var = syy - sy * sy / n;
    if (var <= 1e-9) {  // all boxes at one y: fall back to pass-through
        fit.degenerate = true;
        return fit;
    }
    fit.model.slope = (syh - sy * sh / n) / var;
    fit.model.intercept = (sh - fit.model.slope * sy) / n;

    std::vector<double> ratios;
    ratios.reserve(pts.size());
    for (auto& [y, h] : pts) {
        double e = fit.model.expected_height(y);
        if (e <= 0.0) {
            fit.model = GeometryModel{};
            fit.model.frame_height = frame_height;
            fit.degenerate = true;
            return fit;
        }
        ratios.push_back(h / e);
    }
    std::sort(ratios.begin(), ratios.end());
    coverage = std::clamp(coverage, 0.0, 1.0);
    const double tail = (1.0 - coverage) / 2.0;
    size_t lo = size_t(std::floor(tail * (n - 1)));
    size_t hi = size_t(std::ceil((1.0 - tail) * (n - 1)));
    fit.model.r_lo = ratios[lo] / 1.1;
    fit.model.r_hi = ratios[hi] * 1.1;
    return fit;
}

std::vector<Detection> purge(const std::vector<Detection>& dets, const GeometryModel& model) {
    if (model.pass_through()) return dets;
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (const Detection& d : dets) {
        double e = model.expected_height(d.bbox.y2());
        if (e <= 0.0) continue;  // above the fitted horizon
        double r = d.bbox.h / e;
        if (r >= model.r_lo && r <= model.r_hi) kept.push_back(d);
    }
    return kept;
}

}  // namespace acdet
