#include "acdet/acnet.hpp"

#include <algorithm>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

LayerSpec conv(int kh, int kw, int c_in, int c_out, int pad_h, int pad_w) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.conv = {kh, kw, c_in, c_out, pad_h, pad_w};
    return l;
}
LayerSpec dense(int n_in, int n_out) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.dense = {n_in, n_out};
    return l;
}
LayerSpec simple(LayerKind k) {
    LayerSpec l;
    l.kind = k;
    return l;
}
LayerSpec dropout(double p) {
    LayerSpec l;
    l.kind = LayerKind::Dropout;
    l.dropout_p = p;
    return l;
}

void allocate_params(CnnModel& m) {
    m.params.resize(m.layers.size());
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        if (l.kind == LayerKind::Conv) {
            m.params[i].w.assign(size_t(l.conv.c_out) * l.conv.c_in * l.conv.kh * l.conv.kw, 0.0);
            m.params[i].b.assign(size_t(l.conv.c_out), 0.0);
        } else if (l.kind == LayerKind::Dense) {
            m.params[i].w.assign(size_t(l.dense.n_out) * l.dense.n_in, 0.0);
            m.params[i].b.assign(size_t(l.dense.n_out), 0.0);
        }
    }
}

void append_tail(CnnModel& m, int fc_hidden) {
    m.layers.push_back(conv(5, 3, 40, 40, 0, 0));
    m.layers.push_back(simple(LayerKind::ReLU));
    m.layers.push_back(conv(5, 3, 40, 80, 0, 0));
    m.layers.push_back(simple(LayerKind::ReLU));
    m.layers.push_back(dropout(0.5));
    m.layers.push_back(simple(LayerKind::Flatten));
    m.layers.push_back(dense(6 * 4 * 80, fc_hidden));
    m.layers.push_back(simple(LayerKind::Sigmoid));
    m.layers.push_back(dense(fc_hidden, 1));
    m.layers.push_back(simple(LayerKind::Sigmoid));
}

}  // namespace

Shape acnet_input_shape(AcnetVariant v) {
    return v == AcnetVariant::Acnet ? Shape{16, 8, 10} : Shape{32, 16, 10};
}

CnnModel build_acnet(int fc_hidden) {
    CnnModel m;
    m.in_h = 16;
    m.in_w = 8;
    m.in_c = 10;
    m.variant_tag = uint32_t(AcnetVariant::Acnet);
    m.fc_hidden = uint32_t(fc_hidden);
    m.layers.push_back(conv(5, 3, 10, 40, 1, 1));
    m.layers.push_back(simple(LayerKind::ReLU));
    append_tail(m, fc_hidden);
    allocate_params(m);
    model_output_shape(m);
    return m;
}

CnnModel build_acnet_plus(int fc_hidden) {
    CnnModel m;
    m.in_h = 32;
    m.in_w = 16;
    m.in_c = 10;
    m.variant_tag = uint32_t(AcnetVariant::AcnetPlus);
    m.fc_hidden = uint32_t(fc_hidden);
    m.layers.push_back(conv(5, 3, 10, 40, 0, 1));
    m.layers.push_back(simple(LayerKind::ReLU));
    m.layers.push_back(simple(LayerKind::MaxPool2x2));
    append_tail(m, fc_hidden);
    allocate_params(m);
    model_output_shape(m);
    return m;
}

AcnetVariant model_variant(const CnnModel& m) {
    if (m.variant_tag == uint32_t(AcnetVariant::AcnetPlus)) return AcnetVariant::AcnetPlus;
    return AcnetVariant::Acnet;
}

Tensor window_to_tensor(const FeatureWindow& window) {
    Tensor t(window.h, window.w, window.c);
    for (size_t i = 0; i < window.data.size(); ++i) t.data[i] = double(window.data[i]);
    return t;
}

double score_proposal(const CnnModel& m, const FeatureWindow& window) {
    if (window.h != m.in_h || window.w != m.in_w || window.c != m.in_c)
        throw ModelMismatchError("score_proposal: window does not match model input");
    ForwardCache cache;
    forward(m, window_to_tensor(window), RunMode::Eval, cache);
    return cache.acts.back().data[0];
}

size_t brf_feature_len(AcnetVariant v) {
    Shape in = acnet_input_shape(v);
    return size_t(in.h) * in.w * in.c + size_t(14 * 8 * 40) + size_t(10 * 6 * 40) +
           size_t(6 * 4 * 80);
}

BrfFeatures extract_brf_features(const CnnModel& m, const FeatureWindow& window) {
    if (window.h != m.in_h || window.w != m.in_w || window.c != m.in_c)
        throw ModelMismatchError("extract_brf_features: window does not match model input");
    ForwardCache cache;
    forward(m, window_to_tensor(window), RunMode::Eval, cache);

    // Each conv contributes its output as seen downstream: after the ReLU,
    // and after a directly following pool.
    std::vector<const Tensor*> segments;
    segments.push_back(&cache.acts[0]);
    for (size_t li = 0; li < m.layers.size(); ++li) {
        if (m.layers[li].kind != LayerKind::Conv) continue;
        size_t end = li + 1;
        while (end < m.layers.size() && (m.layers[end].kind == LayerKind::ReLU ||
                                         m.layers[end].kind == LayerKind::MaxPool2x2))
            ++end;
        segments.push_back(&cache.acts[end]);
    }
    if (segments.size() != 4)
        throw ModelMismatchError("extract_brf_features: model does not have three conv layers");

    BrfFeatures out;
    size_t total = 0;
    for (size_t s = 0; s < 4; ++s) {
        out.offsets[s] = total;
        total += segments[s]->size();
    }
    out.offsets[4] = total;
    out.values.reserve(total);
    for (const Tensor* t : segments)
        out.values.insert(out.values.end(), t->data.begin(), t->data.end());
    out.score = cache.acts.back().data[0];
    return out;
}

}  // namespace acdet
