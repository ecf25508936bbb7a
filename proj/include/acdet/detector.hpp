#pragma once

#include <cstdint>
#include <vector>

#include "acdet/boost.hpp"
#include "acdet/channels.hpp"

namespace acdet {

struct BBox {
    double x = 0, y = 0, w = 0, h = 0;  // top-left + extents, pixels

    double x2() const { return x + w; }
    double y2() const { return y + h; }
    double area() const { return w * h; }
};

double iou(const BBox& a, const BBox& b);

enum class ScoreSource : uint8_t { Detector = 0, Cnn = 1, Brf = 2 };

struct Detection {
    BBox bbox;               // image coordinates
    double score = 0.0;
    int level = 0;           // pyramid level index
    int cell_x = 0, cell_y = 0;  // window origin in aggregated cells
    ScoreSource scored_by = ScoreSource::Detector;
};

struct DetectorModel {
    BoostedForest forest;
    PyramidConfig pyramid;  // window size, block, channel config
    double nms_overlap = 0.65;
    bool nms_use_iou = false;

    int cells_h() const { return pyramid.win_h / pyramid.block; }
    int cells_w() const { return pyramid.win_w / pyramid.block; }
    int feature_len() const { return cells_h() * cells_w() * kNumChannels; }
};

// Every window position at stride one aggregated cell, flattened channel-major
// through the soft cascade; survivors with score >= acceptance_threshold become
// detections. Output sorted by (level, cell_y, cell_x).
std::vector<Detection> detect_proposals(const Pyramid& pyr, const DetectorModel& model);

// The exact aggregated sub-volume the cascade scored; no resampling.
FeatureWindow extract_window(const Pyramid& pyr, const Detection& det, const DetectorModel& model);

// Greedy suppression, highest score first; a detection survives iff its
// overlap with every accepted one is <= `overlap`. Overlap is
// intersection/min-area by default, IoU behind the flag.
std::vector<Detection> nms(std::vector<Detection> dets, double overlap, bool use_iou = false);

struct CalibrationResult {
    double threshold = 0.0;          // acceptance threshold on final scores
    double cascade_threshold = 0.0;  // loosened so every accepted window survives
    double achieved_per_frame = 0.0;
    bool ok = false;  // false when the target is unreachable
};

// Evaluates every window with the cascade open, picks the acceptance
// threshold whose mean accepted count per frame lands closest to the target
// (within +-10% for ok), and sets the cascade constant just below the lowest
// running-sum dip of any accepted window.
CalibrationResult calibrate_operating_point(const DetectorModel& model,
                                            const std::vector<Pyramid>& frames, double target);

// Per-frame final scores of all cascade survivors (acceptance ignored).
std::vector<double> window_scores(const Pyramid& pyr, const DetectorModel& model);

struct WindowScore {
    double score = 0.0;       // full forest sum
    double min_prefix = 0.0;  // lowest running sum along the tree order
};

// Full-forest scores of every window, cascade disabled.
std::vector<WindowScore> window_scores_open(const Pyramid& pyr, const DetectorModel& model);

}  // namespace acdet
