#pragma once

#include <optional>
#include <string>
#include <vector>

#include "acdet/acnet.hpp"
#include "acdet/dataset.hpp"
#include "acdet/detector.hpp"
#include "acdet/purge.hpp"

namespace acdet {

struct PipelineModels {
    DetectorModel detector;
    std::optional<CnnModel> cnn;
    std::optional<BoostedForest> brf;
    std::optional<GeometryModel> geometry;
};

struct PipelineOptions {
    bool use_cnn = true;
    bool use_brf = false;
    bool use_purge = true;
    bool rescore_before_nms = true;  // rescoring after NMS available for comparison
    double final_threshold = -std::numeric_limits<double>::infinity();
};

struct StageTimes {
    double pyramid = 0, cascade = 0, purge = 0, cnn = 0, brf = 0, nms = 0;
    double total = 0;
    int frames = 0;

    void accumulate(const StageTimes& o) {
        pyramid += o.pyramid;
        cascade += o.cascade;
        purge += o.purge;
        cnn += o.cnn;
        brf += o.brf;
        nms += o.nms;
        total += o.total;
        frames += o.frames;
    }
};

// pyramid -> cascade proposals at the operating point -> purge -> CNN rescoring
// (score replaces the detector's) -> BRF rescoring (replaces again) -> NMS ->
// final threshold. Rescoring runs before NMS by default.
std::vector<Detection> run_pipeline(const Image& img, const PipelineModels& models,
                                    const PipelineOptions& opt, StageTimes* timing = nullptr);

// Warm-cache single-threaded per-stage means over the given frames.
StageTimes benchmark(const std::vector<Image>& frames, const PipelineModels& models,
                     const PipelineOptions& opt, int warmup_frames = 1);

std::string format_benchmark_tsv(const StageTimes& t);

}  // namespace acdet
