#pragma once

#include <string>
#include <vector>

#include "acdet/dataset.hpp"

namespace acdet {

struct EvalProtocol {
    double iou_threshold = 0.5;
    double min_gt_height = 50.0;  // 50 "reasonable", 25 for small-object settings
    double fppi_min = 1e-2, fppi_max = 1.0;
    int n_fppi_points = 9;
    double mr_floor = 1e-4;       // zero miss rates are clamped here before the log
    bool ap_all_points = false;   // default: 11-point interpolated AP
};

struct MatchCounts {
    int tp = 0, fp = 0, n_miss = 0;
};

// Greedy matching, detections in descending score order: each detection takes
// the unmatched eligible GT with the highest IoU when that IoU passes the
// threshold; detections overlapping only ignore boxes count as neither.
// GT below min_gt_height (or flagged ignore) is ignored on both sides.
MatchCounts match_frame(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                        const EvalProtocol& protocol);

// Per-detection labels from the same greedy pass, for threshold sweeps.
enum class DetKind : int8_t { FalsePos = 0, TruePos = 1, Ignored = 2 };
struct LabeledFrame {
    std::vector<std::pair<double, DetKind>> dets;  // (score, label)
    int n_eligible_gt = 0;
};
LabeledFrame label_frame(const std::vector<Detection>& dets, const std::vector<GtBox>& gts,
                         const EvalProtocol& protocol);

struct Curve {
    std::string x_name, y_name;
    std::vector<std::pair<double, double>> pts;
};

struct MrResult {
    double mr = 1.0;
    Curve curve;  // (fppi, miss rate), fppi increasing
};

// Score sweep over all frames; miss rate sampled at n_fppi_points log-spaced
// FPPI values in [fppi_min, fppi_max] (lowest miss rate at FPPI <= sample),
// MR = geometric mean of the samples with mr_floor clamping.
MrResult log_average_miss_rate(const std::vector<LabeledFrame>& frames,
                               const EvalProtocol& protocol);

struct ApResult {
    double ap = 0.0;
    Curve curve;  // (recall, precision)
};
ApResult average_precision(const std::vector<LabeledFrame>& frames, const EvalProtocol& protocol);

// CSV with a header row and 9-significant-digit values.
void emit_curve(const Curve& curve, const std::string& path);
Curve parse_curve(const std::string& path);

}  // namespace acdet
