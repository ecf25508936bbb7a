#pragma once

#include <optional>
#include <string>

#include "acdet/eval.hpp"
#include "acdet/pipeline.hpp"
#include "acdet/sampling.hpp"
#include "acdet/synth.hpp"

namespace acdet {

// Everything a full train/detect/eval run needs, persisted as plain
// key = value text with [section] headers.
struct RunConfig {
    PyramidConfig pyramid;          // includes the channel settings
    Stage1Config stage1;
    SgdConfig sgd;
    BootstrapConfig bootstrap;
    BoostTrainConfig brf;
    MatchPolicy policy;
    PipelineOptions pipeline;
    double operating_target = 40.0;
    double nms_overlap = 0.65;
    bool nms_use_iou = false;
    EvalProtocol eval;
    SyntheticSceneSpec synth;
    std::optional<GeometryModel> geometry;
    uint64_t seed = 1;

    void apply_seed();  // pushes `seed` into the per-stage seeds
};

RunConfig default_config();
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

// Flat binary channel dump: "ACCH", u32 h, u32 w, u32 c, u32 block, then
// c*h*w little-endian f32 in channel-major order.
void save_channels(const std::string& path, const AggregatedChannels& agg);
AggregatedChannels load_channels(const std::string& path);

// Window cache: data file reuses the ACCH layout per window; the index file
// is JSON lines with per-window metadata.
void save_training_set(const std::string& data_path, const std::string& index_path,
                       const TrainingSet& set);
TrainingSet load_training_set(const std::string& data_path, const std::string& index_path);

}  // namespace acdet
