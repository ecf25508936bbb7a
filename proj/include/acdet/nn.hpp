#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace acdet {

// Dense tensor, channel-major: data[(c*h + y)*w + x].
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(size_t(h_) * w_ * c_, 0.0) {}
    size_t size() const { return data.size(); }
    double& at(int ci, int y, int x) { return data[(size_t(ci) * h + y) * w + x]; }
    double at(int ci, int y, int x) const { return data[(size_t(ci) * h + y) * w + x]; }
};

enum class LayerKind : uint32_t { Conv, MaxPool2x2, ReLU, Sigmoid, Dropout, Flatten, Dense };

struct ConvSpec {
    int kh = 1, kw = 1;
    int c_in = 1, c_out = 1;
    int pad_h = 0, pad_w = 0;  // zero padding per side, stride fixed 1x1
};

struct DenseSpec {
    int n_in = 1, n_out = 1;
};

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    ConvSpec conv{};
    DenseSpec dense{};
    double dropout_p = 0.0;
};

struct Shape {
    int h = 0, w = 0, c = 0;
    bool operator==(const Shape&) const = default;
};

// Conv weights laid out [c_out][c_in][kh][kw]; dense weights [n_out][n_in].
struct LayerParams {
    std::vector<double> w, b;
};

struct CnnModel {
    std::vector<LayerSpec> layers;
    std::vector<LayerParams> params;  // one entry per layer, empty when non-parametric
    int in_h = 0, in_w = 0, in_c = 0;

    // metadata carried through serialization
    uint32_t variant_tag = 0;   // 0 generic, 1 ACF-paired, 2 ACF+-paired
    uint32_t fc_hidden = 0;
    uint32_t flatten_order = 0;  // 0 = channel-major
};

Shape output_shape(const LayerSpec& layer, const Shape& in);
Shape model_output_shape(const CnnModel& m);

enum class RunMode { Train, Eval };

struct ForwardCache {
    std::vector<Tensor> acts;                   // acts[i] = input to layer i; back() = output
    std::vector<std::vector<uint8_t>> masks;    // dropout keep masks
    std::vector<std::vector<int32_t>> argmax;   // max-pool winner indices
};

Tensor conv_forward(const Tensor& x, const ConvSpec& spec, std::span<const double> weights,
                    std::span<const double> bias);

// Dropout is active only in Train mode (inverted scaling); rng required then.
void forward(const CnnModel& m, const Tensor& x, RunMode mode, ForwardCache& cache,
             std::mt19937_64* rng = nullptr);

struct L2Result {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d outputs
};
L2Result l2_loss(std::span<const double> outputs, std::span<const double> targets);

using Gradients = std::vector<LayerParams>;
Gradients make_gradients(const CnnModel& m);
void zero_gradients(Gradients& g);

// Exact reverse-mode gradients; cache must come from a Train-mode forward
// when dropout layers are present.
void backward(const CnnModel& m, const ForwardCache& cache, std::span<const double> loss_grad,
              Gradients& grads);

struct SgdConfig {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 0.0005;  // applied to weights only, never biases
    int batch_size = 1000;
    double lr_drop_factor = 10.0;
    int plateau_patience = 5;
    double plateau_min_delta = 1e-4;
    int max_lr_drops = 2;
    int max_epochs = 100;
    uint64_t seed = 1;
};

// v <- momentum*v - lr*(g + wd*w); w <- w + v
void sgd_step(CnnModel& m, const Gradients& grads, Gradients& velocity, const SgdConfig& cfg);

// Weights ~ N(0, std^2) from the seeded generator, biases zero.
void init_gaussian(CnnModel& m, double std_dev, uint64_t seed);

struct MultCount {
    long long conv = 0;
    long long dense = 0;
    std::vector<long long> per_layer;
};
MultCount count_multiplications(const CnnModel& m);
long long count_parameters(const CnnModel& m);

struct TrainStats {
    std::vector<double> train_loss;  // per epoch, mean over samples
    std::vector<double> val_loss;
    int epochs = 0;
    double final_lr = 0.0;
};

// Mini-batch SGD with momentum on the mean L2 loss; the learning rate is
// divided by lr_drop_factor when the monitored loss stalls for
// plateau_patience epochs, and training stops after max_lr_drops drops
// (or max_epochs). Monitors val loss when a validation set is given.
TrainStats train_sgd(CnnModel& m, const std::vector<Tensor>& x, const std::vector<double>& t,
                     const std::vector<Tensor>& x_val, const std::vector<double>& t_val,
                     const SgdConfig& cfg);

void save_cnn(const std::string& path, const CnnModel& m);
CnnModel load_cnn(const std::string& path);

}  // namespace acdet
