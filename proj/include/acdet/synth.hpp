#pragma once

#include <string>
#include <vector>

#include "acdet/dataset.hpp"
#include "acdet/image.hpp"

namespace acdet {

// Desk-scale street-scene stand-in: textured backgrounds with clutter and
// person-shaped figures placed on a ground plane, h = slope*y_bottom + intercept.
struct SyntheticSceneSpec {
    int frame_w = 320, frame_h = 240;
    double plane_slope = 0.9, plane_intercept = -40.0;
    double height_noise = 0.04;  // multiplicative sigma on the plane law
    double min_height = 52.0, max_height = 176.0;
    double mean_objects = 2.0;  // per frame
    int max_objects = 4;
    int distractors = 5;   // person-like clutter off the plane statistics
    int clutter = 14;      // plain rectangles
    double edge_ignore_fraction = 0.04;  // chance of an ignore-flagged truncated figure
    uint64_t seed = 7;
    int n_frames = 500;
};

struct SynthFrame {
    Image img;
    std::vector<GtBox> gts;
};

// Deterministic per (spec.seed, frame_index).
SynthFrame render_synth_frame(const SyntheticSceneSpec& spec, int frame_index);

// Writes frames/NNNNNN.ppm plus annotations.jsonl under out_dir.
void generate_synthetic(const SyntheticSceneSpec& spec, const std::string& out_dir);

}  // namespace acdet
