#include "acdet/config.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Kv {
    std::map<std::string, std::map<std::string, std::string>> sections;

    bool has(const std::string& sec, const std::string& key) const {
        auto s = sections.find(sec);
        return s != sections.end() && s->second.count(key) > 0;
    }
    std::string raw(const std::string& sec, const std::string& key) const {
        return sections.at(sec).at(key);
    }
    double num(const std::string& sec, const std::string& key, double dflt) const {
        if (!has(sec, key)) return dflt;
        const std::string v = raw(sec, key);
        if (v == "inf") return std::numeric_limits<double>::infinity();
        if (v == "-inf") return -std::numeric_limits<double>::infinity();
        try {
            return std::stod(v);
        } catch (...) {
            throw DataError("config: bad number for " + sec + "." + key + ": " + v);
        }
    }
    int integer(const std::string& sec, const std::string& key, int dflt) const {
        return int(std::llround(num(sec, key, double(dflt))));
    }
    bool boolean(const std::string& sec, const std::string& key, bool dflt) const {
        if (!has(sec, key)) return dflt;
        const std::string v = raw(sec, key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw DataError("config: bad boolean for " + sec + "." + key + ": " + v);
    }
    std::string text(const std::string& sec, const std::string& key,
                     const std::string& dflt) const {
        return has(sec, key) ? raw(sec, key) : dflt;
    }
};

Kv parse_kv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config: " + path);
    Kv kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected key = value");
        kv.sections[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

void RunConfig::apply_seed() {
    stage1.seed = mix64(seed + 1);
    stage1.boost.rng_seed = mix64(seed + 2);
    sgd.seed = mix64(seed + 3);
    bootstrap.seed = mix64(seed + 4);
    brf.rng_seed = mix64(seed + 5);
    synth.seed = mix64(seed + 6);
}

RunConfig default_config() {
    RunConfig c;
    c.stage1.boost.n_trees = 2048;
    c.stage1.boost.max_depth = 2;
    c.stage1.boost.feature_subset_fraction = 1.0 / 16.0;
    c.brf.n_trees = 4096;
    c.brf.max_depth = 5;
    c.brf.feature_subset_fraction = 1.0 / 16.0;
    c.apply_seed();
    return c;
}

RunConfig load_config(const std::string& path) {
    Kv kv = parse_kv(path);
    RunConfig c = default_config();

    c.seed = uint64_t(kv.num("seeds", "master", double(c.seed)));
    c.apply_seed();

    c.pyramid.scales_per_octave = kv.integer("pyramid", "scales_per_octave", 8);
    c.pyramid.min_object_height = kv.integer("pyramid", "min_object_height", 50);
    c.pyramid.block = kv.integer("pyramid", "block", 4);
    c.pyramid.win_h = kv.integer("pyramid", "win_h", 64);
    c.pyramid.win_w = kv.integer("pyramid", "win_w", 32);
    ChannelConfig& ch = c.pyramid.channels;
    ch.pre_smooth_radius = kv.integer("channels", "pre_smooth_radius", 1);
    ch.norm_radius = kv.integer("channels", "norm_radius", 5);
    ch.norm_const = float(kv.num("channels", "norm_const", 0.005));
    ch.agg_smooth_radius = kv.integer("channels", "agg_smooth_radius", 1);
    ch.agg_smooth = kv.boolean("channels", "agg_smooth", true);

    c.stage1.boost.n_trees = kv.integer("detector", "n_trees", c.stage1.boost.n_trees);
    c.stage1.boost.max_depth = kv.integer("detector", "max_depth", c.stage1.boost.max_depth);
    c.stage1.boost.feature_subset_fraction =
        kv.num("detector", "feature_subset_fraction", c.stage1.boost.feature_subset_fraction);
    c.stage1.cascade_threshold = kv.num("detector", "cascade_threshold", -1.0);
    c.stage1.random_negs_per_frame = kv.integer("detector", "random_negs_per_frame", 20);
    c.stage1.hard_negs_per_frame = kv.integer("detector", "hard_negs_per_frame", 10);
    if (kv.has("detector", "round_trees")) {
        c.stage1.round_trees.clear();
        std::istringstream ss(kv.raw("detector", "round_trees"));
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!trim(tok).empty()) c.stage1.round_trees.push_back(std::stoi(trim(tok)));
    }
    c.nms_overlap = kv.num("detector", "nms_overlap", 0.65);
    c.nms_use_iou = kv.boolean("detector", "nms_use_iou", false);

    std::string variant = kv.text("cnn", "variant", "acnet");
    if (variant == "acnet") {
        c.bootstrap.variant = AcnetVariant::Acnet;
    } else if (variant == "acnet_plus") {
        c.bootstrap.variant = AcnetVariant::AcnetPlus;
    } else {
        throw DataError("config: unknown cnn variant: " + variant);
    }
    c.bootstrap.fc_hidden = kv.integer("cnn", "fc_hidden", 40);
    c.bootstrap.init_std = kv.num("cnn", "init_std", 0.2);
    c.sgd.lr = kv.num("cnn", "lr", 0.02);
    c.sgd.momentum = kv.num("cnn", "momentum", 0.9);
    c.sgd.weight_decay = kv.num("cnn", "weight_decay", 0.0005);
    c.sgd.batch_size = kv.integer("cnn", "batch_size", 1000);
    c.sgd.lr_drop_factor = kv.num("cnn", "lr_drop_factor", 10.0);
    c.sgd.plateau_patience = kv.integer("cnn", "plateau_patience", 5);
    c.sgd.plateau_min_delta = kv.num("cnn", "plateau_min_delta", 1e-4);
    c.sgd.max_lr_drops = kv.integer("cnn", "max_lr_drops", 2);
    c.sgd.max_epochs = kv.integer("cnn", "max_epochs", 100);

    std::string mode = kv.text("sampling", "positive_mode", "gt_plus_jittered");
    if (mode == "gt_only") {
        c.policy.positive_mode = PositiveMode::GtOnly;
    } else if (mode == "gt_plus_jittered") {
        c.policy.positive_mode = PositiveMode::GtPlusJittered;
    } else {
        throw DataError("config: unknown positive_mode: " + mode);
    }
    c.policy.pos_iou_min = kv.num("sampling", "pos_iou_min", 0.5);
    c.policy.neg_iou_max = kv.num("sampling", "neg_iou_max", 0.5);
    c.policy.ignore_iou_max = kv.num("sampling", "ignore_iou_max", 0.1);
    c.bootstrap.fppi_target = kv.num("sampling", "fppi_target", 1.0);
    c.bootstrap.round0_fppi_target =
        kv.num("sampling", "round0_fppi_target", std::numeric_limits<double>::infinity());
    c.bootstrap.max_rounds = kv.integer("sampling", "max_bootstrap_rounds", 4);
    c.bootstrap.val_fraction = kv.num("sampling", "val_fraction", 0.1);

    c.brf.n_trees = kv.integer("brf", "n_trees", c.brf.n_trees);
    c.brf.max_depth = kv.integer("brf", "max_depth", c.brf.max_depth);
    c.brf.feature_subset_fraction =
        kv.num("brf", "feature_subset_fraction", c.brf.feature_subset_fraction);

    c.pipeline.use_cnn = kv.boolean("pipeline", "use_cnn", true);
    c.pipeline.use_brf = kv.boolean("pipeline", "use_brf", false);
    c.pipeline.use_purge = kv.boolean("pipeline", "use_purge", true);
    c.pipeline.rescore_before_nms = kv.boolean("pipeline", "rescore_before_nms", true);
    c.pipeline.final_threshold =
        kv.num("pipeline", "final_threshold", -std::numeric_limits<double>::infinity());
    c.operating_target = kv.num("pipeline", "operating_target", 40.0);

    c.eval.iou_threshold = kv.num("eval", "iou_threshold", 0.5);
    c.eval.min_gt_height = kv.num("eval", "min_gt_height", 50.0);
    c.eval.ap_all_points = kv.boolean("eval", "ap_all_points", false);

    c.synth.frame_w = kv.integer("synth", "frame_w", c.synth.frame_w);
    c.synth.frame_h = kv.integer("synth", "frame_h", c.synth.frame_h);
    c.synth.plane_slope = kv.num("synth", "plane_slope", c.synth.plane_slope);
    c.synth.plane_intercept = kv.num("synth", "plane_intercept", c.synth.plane_intercept);
    c.synth.height_noise = kv.num("synth", "height_noise", c.synth.height_noise);
    c.synth.min_height = kv.num("synth", "min_height", c.synth.min_height);
    c.synth.max_height = kv.num("synth", "max_height", c.synth.max_height);
    c.synth.mean_objects = kv.num("synth", "mean_objects", c.synth.mean_objects);
    c.synth.max_objects = kv.integer("synth", "max_objects", c.synth.max_objects);
    c.synth.distractors = kv.integer("synth", "distractors", c.synth.distractors);
    c.synth.clutter = kv.integer("synth", "clutter", c.synth.clutter);
    c.synth.edge_ignore_fraction =
        kv.num("synth", "edge_ignore_fraction", c.synth.edge_ignore_fraction);
    c.synth.n_frames = kv.integer("synth", "n_frames", c.synth.n_frames);

    if (kv.has("geometry", "slope")) {
        GeometryModel g;
        g.slope = kv.num("geometry", "slope", 0.0);
        g.intercept = kv.num("geometry", "intercept", 0.0);
        g.r_lo = kv.num("geometry", "r_lo", 0.0);
        g.r_hi = kv.num("geometry", "r_hi", std::numeric_limits<double>::infinity());
        g.frame_height = kv.integer("geometry", "frame_height", 0);
        c.geometry = g;
    }

    // explicit per-stage seed overrides
    c.synth.seed = uint64_t(kv.num("seeds", "synth", double(c.synth.seed)));
    return c;
}

void save_config(const std::string& path, const RunConfig& c) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write config: " + path);
    f << "[pyramid]\n";
    f << "scales_per_octave = " << c.pyramid.scales_per_octave << "\n";
    f << "min_object_height = " << c.pyramid.min_object_height << "\n";
    f << "block = " << c.pyramid.block << "\n";
    f << "win_h = " << c.pyramid.win_h << "\n";
    f << "win_w = " << c.pyramid.win_w << "\n\n";
    f << "[channels]\n";
    f << "pre_smooth_radius = " << c.pyramid.channels.pre_smooth_radius << "\n";
    f << "norm_radius = " << c.pyramid.channels.norm_radius << "\n";
    f << "norm_const = " << fmt(c.pyramid.channels.norm_const) << "\n";
    f << "agg_smooth_radius = " << c.pyramid.channels.agg_smooth_radius << "\n";
    f << "agg_smooth = " << (c.pyramid.channels.agg_smooth ? "true" : "false") << "\n\n";
    f << "[detector]\n";
    f << "n_trees = " << c.stage1.boost.n_trees << "\n";
    f << "max_depth = " << c.stage1.boost.max_depth << "\n";
    f << "feature_subset_fraction = " << fmt(c.stage1.boost.feature_subset_fraction) << "\n";
    f << "cascade_threshold = " << fmt(c.stage1.cascade_threshold) << "\n";
    f << "random_negs_per_frame = " << c.stage1.random_negs_per_frame << "\n";
    f << "hard_negs_per_frame = " << c.stage1.hard_negs_per_frame << "\n";
    f << "round_trees = ";
    for (size_t i = 0; i < c.stage1.round_trees.size(); ++i)
        f << (i ? "," : "") << c.stage1.round_trees[i];
    f << "\n";
    f << "nms_overlap = " << fmt(c.nms_overlap) << "\n";
    f << "nms_use_iou = " << (c.nms_use_iou ? "true" : "false") << "\n\n";
    f << "[cnn]\n";
    f << "variant = " << (c.bootstrap.variant == AcnetVariant::Acnet ? "acnet" : "acnet_plus")
      << "\n";
    f << "fc_hidden = " << c.bootstrap.fc_hidden << "\n";
    f << "init_std = " << fmt(c.bootstrap.init_std) << "\n";
    f << "lr = " << fmt(c.sgd.lr) << "\n";
    f << "momentum = " << fmt(c.sgd.momentum) << "\n";
    f << "weight_decay = " << fmt(c.sgd.weight_decay) << "\n";
    f << "batch_size = " << c.sgd.batch_size << "\n";
    f << "lr_drop_factor = " << fmt(c.sgd.lr_drop_factor) << "\n";
    f << "plateau_patience = " << c.sgd.plateau_patience << "\n";
    f << "plateau_min_delta = " << fmt(c.sgd.plateau_min_delta) << "\n";
    f << "max_lr_drops = " << c.sgd.max_lr_drops << "\n";
    f << "max_epochs = " << c.sgd.max_epochs << "\n\n";
    f << "[sampling]\n";
    f << "positive_mode = "
      << (c.policy.positive_mode == PositiveMode::GtOnly ? "gt_only" : "gt_plus_jittered") << "\n";
    f << "pos_iou_min = " << fmt(c.policy.pos_iou_min) << "\n";
    f << "neg_iou_max = " << fmt(c.policy.neg_iou_max) << "\n";
    f << "ignore_iou_max = " << fmt(c.policy.ignore_iou_max) << "\n";
    f << "fppi_target = " << fmt(c.bootstrap.fppi_target) << "\n";
    f << "round0_fppi_target = " << fmt(c.bootstrap.round0_fppi_target) << "\n";
    f << "max_bootstrap_rounds = " << c.bootstrap.max_rounds << "\n";
    f << "val_fraction = " << fmt(c.bootstrap.val_fraction) << "\n\n";
    f << "[brf]\n";
    f << "n_trees = " << c.brf.n_trees << "\n";
    f << "max_depth = " << c.brf.max_depth << "\n";
    f << "feature_subset_fraction = " << fmt(c.brf.feature_subset_fraction) << "\n\n";
    f << "[pipeline]\n";
    f << "use_cnn = " << (c.pipeline.use_cnn ? "true" : "false") << "\n";
    f << "use_brf = " << (c.pipeline.use_brf ? "true" : "false") << "\n";
    f << "use_purge = " << (c.pipeline.use_purge ? "true" : "false") << "\n";
    f << "rescore_before_nms = " << (c.pipeline.rescore_before_nms ? "true" : "false") << "\n";
    f << "final_threshold = " << fmt(c.pipeline.final_threshold) << "\n";
    f << "operating_target = " << fmt(c.operating_target) << "\n\n";
    f << "[eval]\n";
    f << "iou_threshold = " << fmt(c.eval.iou_threshold) << "\n";
    f << "min_gt_height = " << fmt(c.eval.min_gt_height) << "\n";
    f << "ap_all_points = " << (c.eval.ap_all_points ? "true" : "false") << "\n\n";
    f << "[synth]\n";
    f << "frame_w = " << c.synth.frame_w << "\n";
    f << "frame_h = " << c.synth.frame_h << "\n";
    f << "plane_slope = " << fmt(c.synth.plane_slope) << "\n";
    f << "plane_intercept = " << fmt(c.synth.plane_intercept) << "\n";
    f << "height_noise = " << fmt(c.synth.height_noise) << "\n";
    f << "min_height = " << fmt(c.synth.min_height) << "\n";
    f << "max_height = " << fmt(c.synth.max_height) << "\n";
    f << "mean_objects = " << fmt(c.synth.mean_objects) << "\n";
    f << "max_objects = " << c.synth.max_objects << "\n";
    f << "distractors = " << c.synth.distractors << "\n";
    f << "clutter = " << c.synth.clutter << "\n";
    f << "edge_ignore_fraction = " << fmt(c.synth.edge_ignore_fraction) << "\n";
    f << "n_frames = " << c.synth.n_frames << "\n\n";
    if (c.geometry) {
        f << "[geometry]\n";
        f << "slope = " << fmt(c.geometry->slope) << "\n";
        f << "intercept = " << fmt(c.geometry->intercept) << "\n";
        f << "r_lo = " << fmt(c.geometry->r_lo) << "\n";
        f << "r_hi = " << fmt(c.geometry->r_hi) << "\n";
        f << "frame_height = " << c.geometry->frame_height << "\n\n";
    }
    f << "[seeds]\n";
    f << "master = " << c.seed << "\n";
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
constexpr char kChMagic[4] = {'A', 'C', 'C', 'H'};

void write_acch_block(std::ofstream& f, int h, int w, int c, int block, const float* data) {
    f.write(kChMagic, 4);
    put<uint32_t>(f, uint32_t(h));
    put<uint32_t>(f, uint32_t(w));
    put<uint32_t>(f, uint32_t(c));
    put<uint32_t>(f, uint32_t(block));
    f.write(reinterpret_cast<const char*>(data), std::streamsize(size_t(h) * w * c * 4));
}

}  // namespace

void save_channels(const std::string& path, const AggregatedChannels& agg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write channels: " + path);
    std::vector<float> flat;
    flat.reserve(size_t(agg.h) * agg.w * kNumChannels);
    for (int c = 0; c < kNumChannels; ++c)
        flat.insert(flat.end(), agg.ch[c].v.begin(), agg.ch[c].v.end());
    write_acch_block(f, agg.h, agg.w, kNumChannels, agg.block, flat.data());
    if (!f) throw DataError("short write: " + path);
}

AggregatedChannels load_channels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open channels: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kChMagic, 4) != 0) throw DataError("not a channel dump: " + path);
    AggregatedChannels agg;
    agg.h = int(get<uint32_t>(f));
    agg.w = int(get<uint32_t>(f));
    uint32_t c = get<uint32_t>(f);
    agg.block = int(get<uint32_t>(f));
    if (c != kNumChannels) throw DataError("unexpected channel count: " + path);
    for (uint32_t ci = 0; ci < c; ++ci) {
        agg.ch[ci] = Plane(agg.h, agg.w);
        f.read(reinterpret_cast<char*>(agg.ch[ci].v.data()),
               std::streamsize(agg.ch[ci].v.size() * 4));
    }
    if (!f) throw DataError("truncated channel dump: " + path);
    return agg;
}

void save_training_set(const std::string& data_path, const std::string& index_path,
                       const TrainingSet& set) {
    std::ofstream f(data_path, std::ios::binary);
    std::ofstream ix(index_path);
    if (!f || !ix) throw DataError("cannot write training set cache");
    auto dump = [&](const TrainingWindow& w, int label) {
        write_acch_block(f, w.win.h, w.win.w, w.win.c, 0, w.win.data.data());
        nlohmann::json j = {{"frame_id", w.frame_id}, {"label", label},
                            {"iou", w.source_iou},   {"level", w.level},
                            {"cell_x", w.cell_x},    {"cell_y", w.cell_y}};
        ix << j.dump() << "\n";
    };
    for (const TrainingWindow& w : set.positives) dump(w, 1);
    for (const TrainingWindow& w : set.negatives) dump(w, 0);
}

TrainingSet load_training_set(const std::string& data_path, const std::string& index_path) {
    std::ifstream f(data_path, std::ios::binary);
    std::ifstream ix(index_path);
    if (!f || !ix) throw DataError("cannot open training set cache");
    TrainingSet set;
    std::string line;
    while (std::getline(ix, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, kChMagic, 4) != 0)
            throw DataError("corrupt training set data: " + data_path);
        TrainingWindow w;
        int h = int(get<uint32_t>(f));
        int wd = int(get<uint32_t>(f));
        int c = int(get<uint32_t>(f));
        get<uint32_t>(f);  // block, unused for windows
        w.win = FeatureWindow(h, wd, c);
        f.read(reinterpret_cast<char*>(w.win.data.data()),
               std::streamsize(w.win.data.size() * 4));
        w.frame_id = j.at("frame_id").get<int>();
        w.source_iou = j.at("iou").get<double>();
        w.level = j.at("level").get<int>();
        w.cell_x = j.at("cell_x").get<int>();
        w.cell_y = j.at("cell_y").get<int>();
        if (j.at("label").get<int>() == 1)
            set.positives.push_back(std::move(w));
        else
            set.negatives.push_back(std::move(w));
    }
    if (!f) throw DataError("truncated training set data: " + data_path);
    return set;
}

}  // namespace acdet
