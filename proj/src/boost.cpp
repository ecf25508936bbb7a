#include "acdet/boost.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "acdet/errors.hpp"

namespace acdet {

double tree_eval(const DecisionTree& t, const float* x) {
    int i = 0;
    while (!is_leaf(t.nodes[i]))
        i = x[t.nodes[i].feature] < t.nodes[i].threshold ? t.nodes[i].left : t.nodes[i].right;
    return t.nodes[i].value;
}

namespace {

// Per-feature sample orders, sorted by (value, sample index).
std::vector<std::vector<uint32_t>> presort(const FeatureMatrix& m) {
    std::vector<std::vector<uint32_t>> order(m.f);
    for (size_t f = 0; f < m.f; ++f) {
        auto& idx = order[f];
        idx.resize(m.n);
        std::iota(idx.begin(), idx.end(), 0u);
        std::sort(idx.begin(), idx.end(), [&](uint32_t a, uint32_t b) {
            float va = m.row(a)[f], vb = m.row(b)[f];
            return va < vb || (va == vb && a < b);
        });
    }
    return order;
}

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& m, std::span<const int> labels,
                const std::vector<std::vector<uint32_t>>& order, const BoostTrainConfig& cfg,
                std::mt19937_64& rng)
        : m_(m), labels_(labels), order_(order), cfg_(cfg), rng_(rng), stamp_(m.n, 0),
          pool_(m.f) {
        std::iota(pool_.begin(), pool_.end(), 0u);
        subset_size_ = size_t(std::ceil(cfg.feature_subset_fraction * double(m.f)));
        subset_size_ = std::clamp<size_t>(subset_size_, 1, m.f);
    }

    DecisionTree build(std::span<const double> weights) {
        weights_ = weights;
        DecisionTree t;
        std::vector<uint32_t> all(m_.n);
        std::iota(all.begin(), all.end(), 0u);
        grow(t, std::move(all), 0);
        return t;
    }

private:
    struct Split {
        bool found = false;
        uint32_t feature = 0;
        float threshold = 0.f;
        double error = 0.0;
    };

    int grow(DecisionTree& t, std::vector<uint32_t> samples, int depth) {
        double wpos = 0.0, wneg = 0.0;
        for (uint32_t i : samples) (labels_[i] > 0 ? wpos : wneg) += weights_[i];

        int node = int(t.nodes.size());
        t.nodes.emplace_back();
        if (depth >= cfg_.max_depth || wpos == 0.0 || wneg == 0.0 || samples.size() < 2) {
            t.nodes[node].value = wpos >= wneg ? 1.f : -1.f;
            return node;
        }
        Split s = best_split(samples, wpos, wneg);
        if (!s.found) {
            t.nodes[node].value = wpos >= wneg ? 1.f : -1.f;
            return node;
        }
        std::vector<uint32_t> left, right;
        left.reserve(samples.size());
        right.reserve(samples.size());
        for (uint32_t i : samples)
            (m_.row(i)[s.feature] < s.threshold ? left : right).push_back(i);
        samples.clear();
        samples.shrink_to_fit();
        t.nodes[node].feature = s.feature;
        t.nodes[node].threshold = s.threshold;
        int l = grow(t, std::move(left), depth + 1);
        int r = grow(t, std::move(right), depth + 1);
        t.nodes[node].left = l;
        t.nodes[node].right = r;
        return node;
    }

    Split best_split(const std::vector<uint32_t>& samples, double wpos, double wneg) {
        ++stamp_id_;
        for (uint32_t i : samples) stamp_[i] = stamp_id_;

        // Fresh feature subset, without replacement; scanned in ascending
        // feature order so ties resolve to the lowest index.
        for (size_t i = 0; i < subset_size_; ++i) {
            size_t j = i + size_t(rng_() % uint64_t(pool_.size() - i));
            std::swap(pool_[i], pool_[j]);
        }
        subset_.assign(pool_.begin(), pool_.begin() + subset_size_);
        std::sort(subset_.begin(), subset_.end());

        Split best;
        best.error = std::min(wpos, wneg);  // error of not splitting
        for (uint32_t f : subset_) {
            const auto& idx = order_[f];
            double wpl = 0.0, wnl = 0.0;
            bool have_prev = false;
            float prev_val = 0.f;
            for (uint32_t i : idx) {
                if (stamp_[i] != stamp_id_) continue;
                float v = m_.row(i)[f];
                if (have_prev && v > prev_val) {
                    float thr = float(0.5 * (double(prev_val) + double(v)));
                    if (prev_val < thr && thr <= v) {
                        double err = std::min(wpl, wnl) + std::min(wpos - wpl, wneg - wnl);
                        if (err < best.error - 1e-15) {
                            best.found = true;
                            best.feature = f;
                            best.threshold = thr;
                            best.error = err;
                        }
                    }
                }
                (labels_[i] > 0 ? wpl : wnl) += weights_[i];
                prev_val = v;
                have_prev = true;
            }
        }
        return best;
    }

    const FeatureMatrix& m_;
    std::span<const int> labels_;
    std::span<const double> weights_;
    const std::vector<std::vector<uint32_t>>& order_;
    const BoostTrainConfig& cfg_;
    std::mt19937_64& rng_;
    std::vector<uint32_t> stamp_;
    uint32_t stamp_id_ = 0;
    std::vector<uint32_t> pool_, subset_;
    size_t subset_size_ = 1;
};

void validate_training_input(const FeatureMatrix& m, std::span<const int> labels,
                             bool need_both_classes) {
    if (m.n == 0) throw DataError("boost: empty sample set");
    if (labels.size() != m.n) throw DataError("boost: labels/samples size mismatch");
    int pos = 0, neg = 0;
    for (int y : labels) {
        if (y != 1 && y != -1) throw DataError("boost: labels must be +1/-1");
        (y > 0 ? pos : neg)++;
    }
    if (need_both_classes && (pos == 0 || neg == 0))
        throw DataError("boost: both classes must be present");
}

}  // namespace

DecisionTree train_tree(const FeatureMatrix& samples, std::span<const int> labels,
                        std::span<const double> weights, const BoostTrainConfig& cfg) {
    validate_training_input(samples, labels, false);
    if (weights.size() != samples.n) throw DataError("boost: weights/samples size mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw DataError("boost: negative sample weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw DataError("boost: weights sum to zero");
    auto order = presort(samples);
    std::mt19937_64 rng(cfg.rng_seed);
    TreeBuilder b(samples, labels, order, cfg, rng);
    return b.build(weights);
}

BoostedForest adaboost_train(const FeatureMatrix& samples, std::span<const int> labels,
                             const BoostTrainConfig& cfg, std::vector<BoostRound>* log) {
    validate_training_input(samples, labels, true);
    const size_t n = samples.n;
    auto order = presort(samples);
    std::mt19937_64 rng(cfg.rng_seed);
    TreeBuilder builder(samples, labels, order, cfg, rng);

    BoostedForest forest;
    forest.feature_len = uint32_t(samples.f);
    std::vector<double> weights(n, 1.0 / double(n));
    std::vector<double> ensemble(n, 0.0);

    for (int t = 0; t < cfg.n_trees; ++t) {
        DecisionTree tree = builder.build(weights);
        std::vector<int8_t> pred(n);
        double eps = 0.0;
        for (size_t i = 0; i < n; ++i) {
            pred[i] = tree_eval(tree, samples.row(i)) >= 0.0 ? 1 : -1;
            if (pred[i] != labels[i]) eps += weights[i];
        }
        if (eps >= 0.5) break;  // uninformative weak learner, discard and stop

        double eps_c = std::max(eps, 1e-12);
        double alpha = 0.5 * std::log((1.0 - eps_c) / eps_c);
        for (TreeNode& node : tree.nodes)
            if (is_leaf(node)) node.value = float(alpha * double(node.value));
        forest.trees.push_back(std::move(tree));

        double train_err = 0.0;
        for (size_t i = 0; i < n; ++i) {
            ensemble[i] += alpha * pred[i];
            if ((ensemble[i] >= 0.0 ? 1 : -1) != labels[i]) train_err += 1.0;
        }
        train_err /= double(n);

        double wsum_err = 0.0;
        if (eps > 1e-12) {
            double wsum = 0.0;
            for (size_t i = 0; i < n; ++i) {
                weights[i] *= std::exp(-alpha * labels[i] * pred[i]);
                wsum += weights[i];
            }
            for (double& w : weights) w /= wsum;
            double check = 0.0;
            for (double w : weights) check += w;
            wsum_err = std::abs(check - 1.0);
        }
        if (log) log->push_back({eps, alpha, wsum_err, train_err});
        if (eps <= 1e-12) break;  // perfect weak learner, nothing left to reweight
    }
    return forest;
}

double forest_score(const BoostedForest& forest, std::span<const float> x) {
    if (x.size() != forest.feature_len) throw ModelMismatchError("forest_score: feature length mismatch");
    double s = 0.0;
    for (const DecisionTree& t : forest.trees) s += tree_eval(t, x.data());
    return s;
}

CascadeResult cascade_evaluate(const BoostedForest& forest, std::span<const float> x) {
    if (x.size() != forest.feature_len)
        throw ModelMismatchError("cascade_evaluate: feature length mismatch");
    CascadeResult r;
    const bool cascade = forest.has_cascade();
    const double thr = cascade ? double(forest.cascade_threshold) : 0.0;
    for (const DecisionTree& t : forest.trees) {
        r.score += tree_eval(t, x.data());
        r.trees_evaluated++;
        if (cascade && r.score < thr) {
            r.rejected = true;
            return r;
        }
    }
    return r;
}

double threshold_for_mean_count(const std::vector<std::vector<double>>& per_frame_scores,
                                double target) {
    const double inf = std::numeric_limits<double>::infinity();
    if (per_frame_scores.empty()) throw DataError("threshold_for_mean_count: no frames");
    std::vector<double> all;
    for (const auto& f : per_frame_scores) all.insert(all.end(), f.begin(), f.end());
    if (all.empty()) return inf;
    const double n_frames = double(per_frame_scores.size());
    if (double(all.size()) / n_frames <= target) return -inf;

    std::sort(all.begin(), all.end(), std::greater<>());
    size_t budget = size_t(std::floor(target * n_frames + 1e-9));
    if (budget == 0) return std::nextafter(all.front(), inf);
    // all[budget-1] admits `budget` scores unless tied with all[budget]; ties
    // force the threshold up to the next distinct value.
    size_t k = budget;
    while (k > 0 && all[k - 1] == all[budget]) --k;
    if (k == 0) return std::nextafter(all.front(), inf);
    return all[k - 1];
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

constexpr char kForestMagic[4] = {'A', 'C', 'B', 'F'};
constexpr uint32_t kForestVersion = 1;

}  // namespace

void save_forest(const std::string& path, const BoostedForest& forest) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write forest: " + path);
    f.write(kForestMagic, 4);
    put<uint32_t>(f, kForestVersion);
    put<uint32_t>(f, forest.feature_len);
    put<float>(f, forest.cascade_threshold);
    put<float>(f, forest.acceptance_threshold);
    put<uint32_t>(f, uint32_t(forest.trees.size()));
    for (const DecisionTree& t : forest.trees) {
        put<uint32_t>(f, uint32_t(t.nodes.size()));
        for (const TreeNode& n : t.nodes) {
            put<uint32_t>(f, n.feature);
            put<float>(f, n.threshold);
            put<int32_t>(f, n.left);
            put<int32_t>(f, n.right);
            put<float>(f, n.value);
        }
    }
    if (!f) throw DataError("short write: " + path);
}

BoostedForest load_forest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open forest: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kForestMagic, 4) != 0)
        throw DataError("not a forest file: " + path);
    uint32_t version = get<uint32_t>(f);
    if (version != kForestVersion) throw DataError("unsupported forest version: " + path);
    BoostedForest forest;
    forest.feature_len = get<uint32_t>(f);
    forest.cascade_threshold = get<float>(f);
    forest.acceptance_threshold = get<float>(f);
    uint32_t n_trees = get<uint32_t>(f);
    forest.trees.resize(n_trees);
    for (DecisionTree& t : forest.trees) {
        uint32_t n_nodes = get<uint32_t>(f);
        t.nodes.resize(n_nodes);
        for (TreeNode& n : t.nodes) {
            n.feature = get<uint32_t>(f);
            n.threshold = get<float>(f);
            n.left = get<int32_t>(f);
            n.right = get<int32_t>(f);
            n.value = get<float>(f);
        }
        for (const TreeNode& n : t.nodes)
            if (!is_leaf(n) && (n.feature >= forest.feature_len || n.left >= int(n_nodes) ||
                                n.right >= int(n_nodes)))
                throw DataError("corrupt forest file: " + path);
    }
    if (!f) throw DataError("truncated forest file: " + path);
    return forest;
}

}  // namespace acdet
