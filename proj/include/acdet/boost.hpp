#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace acdet {

struct TreeNode {
    uint32_t feature = 0;
    float threshold = 0.f;
    int32_t left = -1, right = -1;  // negative child index marks leaf
    float value = 0.f;              // leaf output, weak-learner weight folded in
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // node 0 is the root
};

inline bool is_leaf(const TreeNode& n) { return n.left < 0; }

// Descends x[feature] < threshold ? left : right and returns the leaf value.
double tree_eval(const DecisionTree& t, const float* x);

struct BoostedForest {
    std::vector<DecisionTree> trees;
    // NaN encodes "no cascade": evaluation never early-rejects.
    float cascade_threshold = std::numeric_limits<float>::quiet_NaN();
    float acceptance_threshold = -std::numeric_limits<float>::infinity();
    uint32_t feature_len = 0;

    bool has_cascade() const { return !std::isnan(cascade_threshold); }
};

struct BoostTrainConfig {
    int n_trees = 2048;
    int max_depth = 2;
    double feature_subset_fraction = 1.0 / 16.0;  // per-node random subset
    uint64_t rng_seed = 1;
};

// Rows of `samples` are feature vectors of length feature_len.
struct FeatureMatrix {
    size_t n = 0, f = 0;
    std::vector<float> data;  // n * f, row-major

    const float* row(size_t i) const { return data.data() + i * f; }
    float* row(size_t i) { return data.data() + i * f; }
    void resize(size_t n_, size_t f_) {
        n = n_;
        f = f_;
        data.assign(n_ * f_, 0.f);
    }
};

// Greedy top-down tree: at every non-leaf node a fresh random subset of
// ceil(fraction * f) features is drawn and the (feature, midpoint threshold)
// pair with the lowest weighted misclassification error wins; ties go to the
// lowest feature index, then the lowest threshold. Leaves hold the weighted
// majority label (+1/-1).
DecisionTree train_tree(const FeatureMatrix& samples, std::span<const int> labels,
                        std::span<const double> weights, const BoostTrainConfig& cfg);

struct BoostRound {
    double epsilon = 0.0;
    double alpha = 0.0;
    double weight_sum_error = 0.0;  // |sum(w) - 1| after renormalization
    double train_error = 0.0;       // 0/1 error of the forest so far
};

// Discrete AdaBoost. Stops at n_trees, or when a round's weighted error
// reaches 0 (clamped to 1e-12, tree kept) or >= 0.5 (tree discarded).
BoostedForest adaboost_train(const FeatureMatrix& samples, std::span<const int> labels,
                             const BoostTrainConfig& cfg, std::vector<BoostRound>* log = nullptr);

double forest_score(const BoostedForest& forest, std::span<const float> x);

struct CascadeResult {
    bool rejected = false;
    double score = 0.0;
    int trees_evaluated = 0;
};

// Trees in order with a running sum; drops below cascade_threshold -> rejected.
CascadeResult cascade_evaluate(const BoostedForest& forest, std::span<const float> x);

// Smallest threshold keeping the mean per-frame count of scores >= threshold
// at or below `target`; +inf when even an empty selection is required.
double threshold_for_mean_count(const std::vector<std::vector<double>>& per_frame_scores,
                                double target);

void save_forest(const std::string& path, const BoostedForest& forest);
BoostedForest load_forest(const std::string& path);

}  // namespace acdet
