#pragma once

#include <vector>

#include "acdet/dataset.hpp"

namespace acdet {

// Expected height at a bottom-edge y is slope*y + intercept; detections are
// kept while r_lo <= h / expected <= r_hi.
struct GeometryModel {
    double slope = 0.0, intercept = 0.0;
    double r_lo = 0.0, r_hi = std::numeric_limits<double>::infinity();
    int frame_height = 0;

    bool pass_through() const {
        return r_lo <= 0.0 && r_hi == std::numeric_limits<double>::infinity();
    }
    double expected_height(double y_bottom) const { return slope * y_bottom + intercept; }
};

struct GeometryFit {
    GeometryModel model;
    bool degenerate = false;  // fit fell back to pass-through
};

// Least squares of GT height against bottom-edge y; the ratio band covers the
// central `coverage` mass of h/expected and is widened by 10%. Needs at least
// 10 non-ignore boxes.
GeometryFit fit_geometry(const std::vector<GtBox>& gts, double coverage = 0.99,
                         int frame_height = 0);

// Order-preserving filter; never rescores.
std::vector<Detection> purge(const std::vector<Detection>& dets, const GeometryModel& model);

}  // namespace acdet
