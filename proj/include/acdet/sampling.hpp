#pragma once

#include <functional>
#include <optional>

#include "acdet/acnet.hpp"
#include "acdet/dataset.hpp"
#include "acdet/detector.hpp"

namespace acdet {

enum class PositiveMode { GtOnly, GtPlusJittered };

struct MatchPolicy {
    PositiveMode positive_mode = PositiveMode::GtPlusJittered;
    double pos_iou_min = 0.5;
    double neg_iou_max = 0.5;     // strict: IoU must be < this
    double ignore_iou_max = 0.1;  // windows above this against any ignore box are dropped
};

struct TrainingWindow {
    FeatureWindow win;
    int frame_id = 0;
    double source_iou = 0.0;  // IoU against the matched GT (0 for negatives)
    int level = 0, cell_x = 0, cell_y = 0;
};

struct TrainingSet {
    std::vector<TrainingWindow> positives, negatives;
    int bootstrap_round = 0;
};

using FrameLoader = std::function<Image(const AnnotatedFrame&)>;

// Best window placement for a GT box: the level whose window height most
// closely matches the box height, centered on the box and clamped to bounds.
struct GtProjection {
    int level = 0, cell_x = 0, cell_y = 0;
    double iou = 0.0;
};
std::optional<GtProjection> project_gt_to_window(const Pyramid& pyr, const BBox& gt,
                                                 const DetectorModel& model);

struct FrameSamples {
    std::vector<TrainingWindow> positives, negatives;
    int skipped_gts = 0;  // GT with no usable window placement
};

// Positives per policy (GT-projected windows, plus per GT the single
// highest-scoring proposal with IoU > pos_iou_min in jittered mode);
// negatives are proposals under neg_iou_max against every non-ignore GT.
// Windows overlapping ignore boxes are dropped from both classes.
FrameSamples collect_from_frame(const Pyramid& pyr, const AnnotatedFrame& frame,
                                const DetectorModel& model, const MatchPolicy& policy);

// Smallest threshold keeping mean false positives per frame at or below
// target_fppi; +inf when there are no scores at all.
double fppi_threshold(const std::vector<std::vector<double>>& per_frame_scores,
                      double target_fppi = 1.0);

struct BootstrapConfig {
    AcnetVariant variant = AcnetVariant::Acnet;
    int fc_hidden = 40;
    double init_std = 0.2;
    uint64_t seed = 1;
    int max_rounds = 4;        // mining rounds after the initial one
    double fppi_target = 1.0;  // per-round hard-negative budget
    // Round-0 negatives come from the detector at its operating point; a
    // finite value here bounds them with the same per-frame-rate rule.
    double round0_fppi_target = std::numeric_limits<double>::infinity();
    double val_fraction = 0.1;  // held-out windows for the round metric
};

struct BootstrapRoundStats {
    int round = 0;
    size_t n_pos = 0, n_neg = 0, new_negatives = 0;
    double val_loss = 0.0;
    int epochs = 0;
};

struct BootstrapResult {
    CnnModel model;
    TrainingSet set;
    std::vector<BootstrapRoundStats> rounds;
};

// Trains on the initial set, then alternates mining (network scores above the
// FPPI threshold, deduplicated by frame/level/cell) with retraining until the
// round metric stops improving, nothing new is mined, or max_rounds.
BootstrapResult bootstrap_acnet(const std::vector<AnnotatedFrame>& frames,
                                const FrameLoader& loader, const DetectorModel& detector,
                                const MatchPolicy& policy, TrainingSet initial,
                                const SgdConfig& sgd, const BootstrapConfig& cfg);

// Initial training set for round 0 over all frames.
TrainingSet collect_initial_set(const std::vector<AnnotatedFrame>& frames,
                                const FrameLoader& loader, const DetectorModel& detector,
                                const MatchPolicy& policy,
                                double round0_fppi_target =
                                    std::numeric_limits<double>::infinity());

// AdaBoost re-scorer over concatenated window + conv features; no cascade.
BoostedForest train_brf(const CnnModel& cnn, const TrainingSet& set, BoostTrainConfig cfg,
                        std::vector<BoostRound>* log = nullptr);

// Split-feature usage counted per chunk of `chunk` trees and per feature
// segment (input, conv1, conv2, conv3).
std::vector<std::array<uint64_t, 4>> brf_selection_histogram(const BoostedForest& forest,
                                                             AcnetVariant variant,
                                                             int chunk = 512);

struct Stage1Config {
    BoostTrainConfig boost;                  // final round tree budget
    std::vector<int> round_trees = {64, 256};  // per-round budgets before the final
    int random_negs_per_frame = 20;
    int hard_negs_per_frame = 10;
    double cascade_threshold = -1.0;
    uint64_t seed = 1;
};

// Random negatives + GT positives, then hard-negative rounds mined with the
// growing forest.
DetectorModel train_stage1(const std::vector<AnnotatedFrame>& frames, const FrameLoader& loader,
                           const PyramidConfig& pyramid, const MatchPolicy& policy,
                           const Stage1Config& cfg);

}  // namespace acdet
