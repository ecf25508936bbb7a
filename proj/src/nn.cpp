#include "acdet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

std::string layer_name(const LayerSpec& l, int idx) {
    static const char* names[] = {"Conv", "MaxPool2x2", "ReLU", "Sigmoid", "Dropout", "Flatten",
                                  "Dense"};
    return std::string(names[size_t(l.kind)]) + "[" + std::to_string(idx) + "]";
}

double uniform01(std::mt19937_64& rng) {
    // in (0,1]; 53-bit mantissa
    return (double(rng() >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

Shape output_shape(const LayerSpec& layer, const Shape& in) {
    switch (layer.kind) {
        case LayerKind::Conv: {
            const ConvSpec& c = layer.conv;
            if (in.c != c.c_in) throw ModelMismatchError("conv: channel mismatch");
            int oh = in.h + 2 * c.pad_h - c.kh + 1;
            int ow = in.w + 2 * c.pad_w - c.kw + 1;
            if (oh < 1 || ow < 1) throw ModelMismatchError("conv: kernel larger than padded input");
            return {oh, ow, c.c_out};
        }
        case LayerKind::MaxPool2x2:
            if (in.h < 2 || in.w < 2) throw ModelMismatchError("maxpool: input too small");
            return {in.h / 2, in.w / 2, in.c};
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Dropout:
            return in;
        case LayerKind::Flatten:
            return {1, 1, in.h * in.w * in.c};
        case LayerKind::Dense:
            if (in.h != 1 || in.w != 1 || in.c != layer.dense.n_in)
                throw ModelMismatchError("dense: expects flat input of length n_in");
            return {1, 1, layer.dense.n_out};
    }
    throw ModelMismatchError("unknown layer kind");
}

Shape model_output_shape(const CnnModel& m) {
    Shape s{m.in_h, m.in_w, m.in_c};
    for (const LayerSpec& l : m.layers) s = output_shape(l, s);
    return s;
}

namespace {

void im2col(const Tensor& x, const ConvSpec& c, int oh, int ow, std::vector<double>& cols) {
    const size_t n = size_t(oh) * ow;
    cols.assign(size_t(c.kh) * c.kw * c.c_in * n, 0.0);
    for (int ci = 0; ci < c.c_in; ++ci)
        for (int ky = 0; ky < c.kh; ++ky)
            for (int kx = 0; kx < c.kw; ++kx) {
                double* dst = cols.data() + ((size_t(ci) * c.kh + ky) * c.kw + kx) * n;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy + ky - c.pad_h;
                    if (iy < 0 || iy >= x.h) continue;
                    const double* src = &x.data[(size_t(ci) * x.h + iy) * x.w];
                    int x_lo = std::max(0, c.pad_w - kx);
                    int x_hi = std::min(ow, x.w + c.pad_w - kx);
                    for (int ox = x_lo; ox < x_hi; ++ox)
                        dst[size_t(oy) * ow + ox] = src[ox + kx - c.pad_w];
                }
            }
}

thread_local std::vector<double> g_cols;

}  // namespace

Tensor conv_forward(const Tensor& x, const ConvSpec& spec, std::span<const double> weights,
                    std::span<const double> bias) {
    Shape os = output_shape(LayerSpec{LayerKind::Conv, spec, {}, 0.0}, {x.h, x.w, x.c});
    const size_t k = size_t(spec.kh) * spec.kw * spec.c_in;
    if (weights.size() != k * spec.c_out || bias.size() != size_t(spec.c_out))
        throw ModelMismatchError("conv: parameter size mismatch");
    im2col(x, spec, os.h, os.w, g_cols);
    const size_t n = size_t(os.h) * os.w;
    Tensor out(os.h, os.w, os.c);
    for (int co = 0; co < spec.c_out; ++co) {
        double* o = out.data.data() + size_t(co) * n;
        std::fill(o, o + n, bias[co]);
        const double* wrow = weights.data() + size_t(co) * k;
        for (size_t r = 0; r < k; ++r) {
            const double a = wrow[r];
            const double* col = g_cols.data() + r * n;
            for (size_t j = 0; j < n; ++j) o[j] += a * col[j];
        }
    }
    return out;
}

namespace {

void conv_backward(const Tensor& x, const ConvSpec& c, std::span<const double> weights,
                   const Tensor& dout, LayerParams& g, Tensor& dx) {
    const size_t k = size_t(c.kh) * c.kw * c.c_in;
    const size_t n = size_t(dout.h) * dout.w;
    im2col(x, c, dout.h, dout.w, g_cols);
    // dW and db accumulate
    for (int co = 0; co < c.c_out; ++co) {
        const double* d = dout.data.data() + size_t(co) * n;
        double bs = 0.0;
        for (size_t j = 0; j < n; ++j) bs += d[j];
        g.b[co] += bs;
        double* gw = g.w.data() + size_t(co) * k;
        for (size_t r = 0; r < k; ++r) {
            const double* col = g_cols.data() + r * n;
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) acc += d[j] * col[j];
            gw[r] += acc;
        }
    }
    // dcols = W^T * dout, scattered back through the im2col map
    std::vector<double> dcol(n);
    dx = Tensor(x.h, x.w, x.c);
    for (int ci = 0; ci < c.c_in; ++ci)
        for (int ky = 0; ky < c.kh; ++ky)
            for (int kx = 0; kx < c.kw; ++kx) {
                const size_t r = (size_t(ci) * c.kh + ky) * c.kw + kx;
                std::fill(dcol.begin(), dcol.end(), 0.0);
                for (int co = 0; co < c.c_out; ++co) {
                    const double a = weights[size_t(co) * k + r];
                    const double* d = dout.data.data() + size_t(co) * n;
                    for (size_t j = 0; j < n; ++j) dcol[j] += a * d[j];
                }
                for (int oy = 0; oy < dout.h; ++oy) {
                    int iy = oy + ky - c.pad_h;
                    if (iy < 0 || iy >= x.h) continue;
                    double* dst = &dx.data[(size_t(ci) * x.h + iy) * x.w];
                    int x_lo = std::max(0, c.pad_w - kx);
                    int x_hi = std::min(dout.w, x.w + c.pad_w - kx);
                    for (int ox = x_lo; ox < x_hi; ++ox)
                        dst[ox + kx - c.pad_w] += dcol[size_t(oy) * dout.w + ox];
                }
            }
}

}  // namespace

void forward(const CnnModel& m, const Tensor& x, RunMode mode, ForwardCache& cache,
             std::mt19937_64* rng) {
    if (x.h != m.in_h || x.w != m.in_w || x.c != m.in_c)
        throw ModelMismatchError("forward: input shape mismatch");
    cache.acts.assign(m.layers.size() + 1, Tensor());
    cache.masks.assign(m.layers.size(), {});
    cache.argmax.assign(m.layers.size(), {});
    cache.acts[0] = x;
    for (size_t li = 0; li < m.layers.size(); ++li) {
        const LayerSpec& l = m.layers[li];
        const Tensor& in = cache.acts[li];
        Tensor& out = cache.acts[li + 1];
        switch (l.kind) {
            case LayerKind::Conv:
                out = conv_forward(in, l.conv, m.params[li].w, m.params[li].b);
                break;
            case LayerKind::MaxPool2x2: {
                Shape os = output_shape(l, {in.h, in.w, in.c});
                out = Tensor(os.h, os.w, os.c);
                auto& am = cache.argmax[li];
                am.assign(out.size(), 0);
                for (int ci = 0; ci < in.c; ++ci)
                    for (int oy = 0; oy < os.h; ++oy)
                        for (int ox = 0; ox < os.w; ++ox) {
                            int iy = oy * 2, ix = ox * 2;
                            int32_t best = int32_t((size_t(ci) * in.h + iy) * in.w + ix);
                            double bv = in.data[size_t(best)];
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    int yy = iy + dy, xx = ix + dx;
                                    if (yy >= in.h || xx >= in.w) continue;
                                    int32_t idx = int32_t((size_t(ci) * in.h + yy) * in.w + xx);
                                    if (in.data[size_t(idx)] > bv) {
                                        bv = in.data[size_t(idx)];
                                        best = idx;
                                    }
                                }
                            size_t oidx = (size_t(ci) * os.h + oy) * os.w + ox;
                            out.data[oidx] = bv;
                            am[oidx] = best;
                        }
                break;
            }
            case LayerKind::ReLU:
                out = in;
                for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                break;
            case LayerKind::Sigmoid:
                out = in;
                for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
                break;
            case LayerKind::Dropout: {
                if (l.dropout_p < 0.0 || l.dropout_p >= 1.0)
                    throw ModelMismatchError("dropout: p must be in [0,1)");
                out = in;
                if (mode == RunMode::Train && l.dropout_p > 0.0) {
                    if (!rng) throw ModelMismatchError("dropout: training forward needs an rng");
                    auto& mask = cache.masks[li];
                    mask.assign(in.size(), 1);
                    const double keep = 1.0 - l.dropout_p;
                    const double scale = 1.0 / keep;
                    for (size_t i = 0; i < out.size(); ++i) {
                        if (uniform01(*rng) <= keep) {
                            out.data[i] *= scale;
                        } else {
                            mask[i] = 0;
                            out.data[i] = 0.0;
                        }
                    }
                }
                break;
            }
            case LayerKind::Flatten: {
                Shape os = output_shape(l, {in.h, in.w, in.c});
                out = Tensor(os.h, os.w, os.c);
                out.data = in.data;  // channel-major data is already flat
                break;
            }
            case LayerKind::Dense: {
                Shape os = output_shape(l, {in.h, in.w, in.c});
                out = Tensor(os.h, os.w, os.c);
                const int ni = l.dense.n_in, no = l.dense.n_out;
                const auto& p = m.params[li];
                for (int o = 0; o < no; ++o) {
                    double acc = p.b[o];
                    const double* wr = p.w.data() + size_t(o) * ni;
                    for (int i = 0; i < ni; ++i) acc += wr[i] * in.data[i];
                    out.data[o] = acc;
                }
                break;
            }
        }
        if (out.h == 0 && out.w == 0) throw ModelMismatchError("forward failed at " + layer_name(l, int(li)));
    }
}

L2Result l2_loss(std::span<const double> outputs, std::span<const double> targets) {
    if (outputs.size() != targets.size()) throw DataError("l2_loss: length mismatch");
    L2Result r;
    r.grad.resize(outputs.size());
    for (size_t i = 0; i < outputs.size(); ++i) {
        double d = targets[i] - outputs[i];
        r.loss += 0.5 * d * d;
        r.grad[i] = outputs[i] - targets[i];
    }
    return r;
}

Gradients make_gradients(const CnnModel& m) {
    Gradients g(m.layers.size());
    for (size_t i = 0; i < m.layers.size(); ++i) {
        g[i].w.assign(m.params[i].w.size(), 0.0);
        g[i].b.assign(m.params[i].b.size(), 0.0);
    }
    return g;
}

void zero_gradients(Gradients& g) {
    for (LayerParams& p : g) {
        std::fill(p.w.begin(), p.w.end(), 0.0);
        std::fill(p.b.begin(), p.b.end(), 0.0);
    }
}

void backward(const CnnModel& m, const ForwardCache& cache, std::span<const double> loss_grad,
              Gradients& grads) {
    if (cache.acts.size() != m.layers.size() + 1)
        throw ModelMismatchError("backward: cache does not match model");
    const Tensor& out = cache.acts.back();
    if (loss_grad.size() != out.size()) throw ModelMismatchError("backward: loss grad size mismatch");
    Tensor d = out;
    std::copy(loss_grad.begin(), loss_grad.end(), d.data.begin());

    for (int li = int(m.layers.size()) - 1; li >= 0; --li) {
        const LayerSpec& l = m.layers[li];
        const Tensor& in = cache.acts[li];
        const Tensor& outl = cache.acts[li + 1];
        Tensor dprev;
        switch (l.kind) {
            case LayerKind::Conv:
                conv_backward(in, l.conv, m.params[li].w, d, grads[li], dprev);
                break;
            case LayerKind::MaxPool2x2: {
                dprev = Tensor(in.h, in.w, in.c);
                const auto& am = cache.argmax[li];
                for (size_t i = 0; i < d.size(); ++i) dprev.data[size_t(am[i])] += d.data[i];
                break;
            }
            case LayerKind::ReLU:
                dprev = Tensor(in.h, in.w, in.c);
                for (size_t i = 0; i < d.size(); ++i)
                    dprev.data[i] = in.data[i] > 0.0 ? d.data[i] : 0.0;
                break;
            case LayerKind::Sigmoid:
                dprev = Tensor(in.h, in.w, in.c);
                for (size_t i = 0; i < d.size(); ++i) {
                    double s = outl.data[i];
                    dprev.data[i] = d.data[i] * s * (1.0 - s);
                }
                break;
            case LayerKind::Dropout: {
                dprev = d;
                const auto& mask = cache.masks[li];
                if (!mask.empty()) {
                    const double scale = 1.0 / (1.0 - l.dropout_p);
                    for (size_t i = 0; i < dprev.size(); ++i)
                        dprev.data[i] = mask[i] ? dprev.data[i] * scale : 0.0;
                }
                break;
            }
            case LayerKind::Flatten:
                dprev = Tensor(in.h, in.w, in.c);
                dprev.data = d.data;
                break;
            case LayerKind::Dense: {
                const int ni = l.dense.n_in, no = l.dense.n_out;
                dprev = Tensor(1, 1, ni);
                auto& g = grads[li];
                const auto& p = m.params[li];
                for (int o = 0; o < no; ++o) {
                    const double dv = d.data[o];
                    g.b[o] += dv;
                    double* gw = g.w.data() + size_t(o) * ni;
                    const double* wr = p.w.data() + size_t(o) * ni;
                    for (int i = 0; i < ni; ++i) {
                        gw[i] += dv * in.data[i];
                        dprev.data[i] += dv * wr[i];
                    }
                }
                break;
            }
        }
        d = std::move(dprev);
    }
}

void sgd_step(CnnModel& m, const Gradients& grads, Gradients& velocity, const SgdConfig& cfg) {
    for (size_t li = 0; li < m.layers.size(); ++li) {
        LayerParams& p = m.params[li];
        const LayerParams& g = grads[li];
        LayerParams& v = velocity[li];
        for (size_t i = 0; i < p.w.size(); ++i) {
            v.w[i] = cfg.momentum * v.w[i] - cfg.lr * (g.w[i] + cfg.weight_decay * p.w[i]);
            p.w[i] += v.w[i];
        }
        for (size_t i = 0; i < p.b.size(); ++i) {
            v.b[i] = cfg.momentum * v.b[i] - cfg.lr * g.b[i];
            p.b[i] += v.b[i];
        }
    }
}

void init_gaussian(CnnModel& m, double std_dev, uint64_t seed) {
    std::mt19937_64 rng(seed);
    bool have_spare = false;
    double spare = 0.0;
    auto normal = [&]() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        double u1 = uniform01(rng), u2 = uniform01(rng);
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(a);
        have_spare = true;
        return r * std::cos(a);
    };
    for (LayerParams& p : m.params) {
        for (double& w : p.w) w = std_dev * normal();
        std::fill(p.b.begin(), p.b.end(), 0.0);
    }
}

MultCount count_multiplications(const CnnModel& m) {
    MultCount mc;
    Shape s{m.in_h, m.in_w, m.in_c};
    for (const LayerSpec& l : m.layers) {
        Shape os = output_shape(l, s);
        long long muls = 0;
        if (l.kind == LayerKind::Conv) {
            muls = 1LL * os.h * os.w * l.conv.c_out * l.conv.kh * l.conv.kw * l.conv.c_in;
            mc.conv += muls;
        } else if (l.kind == LayerKind::Dense) {
            muls = 1LL * l.dense.n_in * l.dense.n_out;
            mc.dense += muls;
        }
        mc.per_layer.push_back(muls);
        s = os;
    }
    return mc;
}

long long count_parameters(const CnnModel& m) {
    long long n = 0;
    for (const LayerParams& p : m.params) n += (long long)(p.w.size() + p.b.size());
    return n;
}

TrainStats train_sgd(CnnModel& m, const std::vector<Tensor>& x, const std::vector<double>& t,
                     const std::vector<Tensor>& x_val, const std::vector<double>& t_val,
                     const SgdConfig& cfg) {
    if (x.empty() || x.size() != t.size()) throw DataError("train_sgd: bad training set");
    if (x_val.size() != t_val.size()) throw DataError("train_sgd: bad validation set");
    std::mt19937_64 rng(cfg.seed);
    Gradients grads = make_gradients(m);
    Gradients velocity = make_gradients(m);
    ForwardCache cache;
    SgdConfig step_cfg = cfg;

    TrainStats stats;
    std::vector<size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), size_t(0));

    double best = std::numeric_limits<double>::infinity();
    int stall = 0, drops = 0;

    auto eval_loss = [&](const std::vector<Tensor>& xs, const std::vector<double>& ts) {
        double sum = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            forward(m, xs[i], RunMode::Eval, cache);
            double o = cache.acts.back().data[0];
            sum += 0.5 * (ts[i] - o) * (ts[i] - o);
        }
        return xs.empty() ? 0.0 : sum / double(xs.size());
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Fisher-Yates with the pinned generator
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[size_t(rng() % uint64_t(i))]);

        double epoch_loss = 0.0;
        for (size_t start = 0; start < idx.size(); start += size_t(cfg.batch_size)) {
            size_t end = std::min(idx.size(), start + size_t(cfg.batch_size));
            zero_gradients(grads);
            for (size_t k = start; k < end; ++k) {
                const size_t i = idx[k];
                forward(m, x[i], RunMode::Train, cache, &rng);
                double o = cache.acts.back().data[0];
                double d = o - t[i];
                epoch_loss += 0.5 * d * d;
                double lg[1] = {d};
                backward(m, cache, lg, grads);
            }
            const double inv = 1.0 / double(end - start);
            for (LayerParams& g : grads) {
                for (double& v : g.w) v *= inv;
                for (double& v : g.b) v *= inv;
            }
            sgd_step(m, grads, velocity, step_cfg);
        }
        stats.train_loss.push_back(epoch_loss / double(x.size()));
        double monitored = stats.train_loss.back();
        if (!x_val.empty()) {
            stats.val_loss.push_back(eval_loss(x_val, t_val));
            monitored = stats.val_loss.back();
        }
        stats.epochs = epoch + 1;

        if (monitored < best - cfg.plateau_min_delta) {
            best = monitored;
            stall = 0;
        } else if (++stall >= cfg.plateau_patience) {
            if (drops >= cfg.max_lr_drops) break;
            step_cfg.lr /= cfg.lr_drop_factor;
            ++drops;
            stall = 0;
        }
    }
    stats.final_lr = step_cfg.lr;
    return stats;
}

namespace {

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& f) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

constexpr char kCnnMagic[4] = {'A', 'C', 'N', 'N'};
constexpr uint32_t kCnnVersion = 1;

}  // namespace

void save_cnn(const std::string& path, const CnnModel& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write model: " + path);
    f.write(kCnnMagic, 4);
    put<uint32_t>(f, kCnnVersion);
    put<uint32_t>(f, m.variant_tag);
    put<uint32_t>(f, m.fc_hidden);
    put<uint32_t>(f, m.flatten_order);
    put<int32_t>(f, m.in_h);
    put<int32_t>(f, m.in_w);
    put<int32_t>(f, m.in_c);
    put<uint32_t>(f, uint32_t(m.layers.size()));
    for (const LayerSpec& l : m.layers) {
        put<uint32_t>(f, uint32_t(l.kind));
        put<int32_t>(f, l.conv.kh);
        put<int32_t>(f, l.conv.kw);
        put<int32_t>(f, l.conv.c_in);
        put<int32_t>(f, l.conv.c_out);
        put<int32_t>(f, l.conv.pad_h);
        put<int32_t>(f, l.conv.pad_w);
        put<int32_t>(f, l.dense.n_in);
        put<int32_t>(f, l.dense.n_out);
        put<double>(f, l.dropout_p);
    }
    for (const LayerParams& p : m.params) {
        put<uint64_t>(f, uint64_t(p.w.size()));
        f.write(reinterpret_cast<const char*>(p.w.data()), std::streamsize(p.w.size() * 8));
        put<uint64_t>(f, uint64_t(p.b.size()));
        f.write(reinterpret_cast<const char*>(p.b.data()), std::streamsize(p.b.size() * 8));
    }
    if (!f) throw DataError("short write: " + path);
}

CnnModel load_cnn(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open model: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCnnMagic, 4) != 0) throw DataError("not a model file: " + path);
    if (get<uint32_t>(f) != kCnnVersion) throw DataError("unsupported model version: " + path);
    CnnModel m;
    m.variant_tag = get<uint32_t>(f);
    m.fc_hidden = get<uint32_t>(f);
    m.flatten_order = get<uint32_t>(f);
    m.in_h = get<int32_t>(f);
    m.in_w = get<int32_t>(f);
    m.in_c = get<int32_t>(f);
    uint32_t n_layers = get<uint32_t>(f);
    m.layers.resize(n_layers);
    for (LayerSpec& l : m.layers) {
        l.kind = LayerKind(get<uint32_t>(f));
        l.conv.kh = get<int32_t>(f);
        l.conv.kw = get<int32_t>(f);
        l.conv.c_in = get<int32_t>(f);
        l.conv.c_out = get<int32_t>(f);
        l.conv.pad_h = get<int32_t>(f);
        l.conv.pad_w = get<int32_t>(f);
        l.dense.n_in = get<int32_t>(f);
        l.dense.n_out = get<int32_t>(f);
        l.dropout_p = get<double>(f);
    }
    m.params.resize(n_layers);
    for (LayerParams& p : m.params) {
        p.w.resize(size_t(get<uint64_t>(f)));
        f.read(reinterpret_cast<char*>(p.w.data()), std::streamsize(p.w.size() * 8));
        p.b.resize(size_t(get<uint64_t>(f)));
        f.read(reinterpret_cast<char*>(p.b.data()), std::streamsize(p.b.size() * 8));
    }
    if (!f) throw DataError("truncated model file: " + path);
    model_output_shape(m);  // validates layer chain
    return m;
}

}  // namespace acdet
