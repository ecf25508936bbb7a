#pragma once

#include <array>
#include <cstdint>

#include "acdet/channels.hpp"
#include "acdet/nn.hpp"

namespace acdet {

enum class AcnetVariant : uint32_t { Acnet = 1, AcnetPlus = 2 };

// Input cell dims for each variant (channels always 10).
Shape acnet_input_shape(AcnetVariant v);

// conv 5x3 10->40 pad(1,1), ReLU, conv 5x3 40->40, ReLU, conv 5x3 40->80,
// ReLU, dropout 0.5, flatten, dense 1920->fc_hidden, sigmoid, dense
// fc_hidden->1, sigmoid. Activations 14x8x40, 10x6x40, 6x4x80 on 16x8x10 input.
CnnModel build_acnet(int fc_hidden = 40);

// Same tail; conv1 runs pad(0,1) on 32x16x10 giving 28x16x40 and a 2x2
// max-pool brings it back to 14x8x40.
CnnModel build_acnet_plus(int fc_hidden = 40);

AcnetVariant model_variant(const CnnModel& m);

// Inference-mode forward; scalar score in (0,1).
double score_proposal(const CnnModel& m, const FeatureWindow& window);

Tensor window_to_tensor(const FeatureWindow& window);

struct BrfFeatures {
    std::vector<double> values;         // input, conv1, conv2, conv3 segments
    std::array<size_t, 5> offsets{};    // segment boundaries, offsets[4] = total
    double score = 0.0;                 // head output of the same forward pass
};

// Concatenates the flattened input with the post-ReLU outputs of the three
// convolution layers (post-pool for the ACF+ variant), channel-major.
// Lengths: 10080 for Acnet, 13920 for AcnetPlus.
BrfFeatures extract_brf_features(const CnnModel& m, const FeatureWindow& window);

size_t brf_feature_len(AcnetVariant v);

}  // namespace acdet
