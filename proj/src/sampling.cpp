#include "acdet/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t window_key(int frame_id, int level, int cx, int cy) {
    return (uint64_t(uint32_t(frame_id)) << 40) ^ (uint64_t(uint32_t(level)) << 32) ^
           (uint64_t(uint32_t(cy)) << 16) ^ uint64_t(uint32_t(cx));
}

BBox window_bbox(const Pyramid& pyr, const DetectorModel& model, int level, int cx, int cy) {
    const double inv_s = 1.0 / pyr.levels[level].scale;
    const int block = model.pyramid.block;
    return {cx * block * inv_s, cy * block * inv_s, model.pyramid.win_w * inv_s,
            model.pyramid.win_h * inv_s};
}

bool overlaps_ignore(const BBox& b, const std::vector<GtBox>& gts, double ignore_iou_max) {
    for (const GtBox& g : gts)
        if (g.ignore && iou(b, g.box) > ignore_iou_max) return true;
    return false;
}

}  // namespace

std::optional<GtProjection> project_gt_to_window(const Pyramid& pyr, const BBox& gt,
                                                 const DetectorModel& model) {
    if (pyr.levels.empty()) return std::nullopt;
    const int block = model.pyramid.block;
    const int ch = model.cells_h(), cw = model.cells_w();

    int best_level = -1;
    double best_diff = std::numeric_limits<double>::infinity();
    for (size_t li = 0; li < pyr.levels.size(); ++li) {
        double win_h_img = model.pyramid.win_h / pyr.levels[li].scale;
        double diff = std::abs(std::log(win_h_img / gt.h));
        if (diff < best_diff) {
            best_diff = diff;
            best_level = int(li);
        }
    }
    const PyramidLevel& lvl = pyr.levels[best_level];
    double s = lvl.scale;
    double cx_cells = (gt.x + gt.w / 2) * s / block - cw / 2.0;
    double cy_cells = (gt.y + gt.h / 2) * s / block - ch / 2.0;
    GtProjection p;
    p.level = best_level;
    p.cell_x = std::clamp(int(std::lround(cx_cells)), 0, lvl.agg.w - cw);
    p.cell_y = std::clamp(int(std::lround(cy_cells)), 0, lvl.agg.h - ch);
    if (lvl.agg.w < cw || lvl.agg.h < ch) return std::nullopt;
    p.iou = iou(window_bbox(pyr, model, p.level, p.cell_x, p.cell_y), gt);
    return p;
}

FrameSamples collect_from_frame(const Pyramid& pyr, const AnnotatedFrame& frame,
                                const DetectorModel& model, const MatchPolicy& policy) {
    if (policy.neg_iou_max > policy.pos_iou_min)
        throw DataError("collect_from_frame: neg_iou_max must be <= pos_iou_min");
    FrameSamples out;
    std::vector<Detection> proposals = detect_proposals(pyr, model);

    std::vector<const GtBox*> real;
    for (const GtBox& g : frame.boxes)
        if (!g.ignore) real.push_back(&g);

    // per-GT best-scoring jitter candidate
    std::vector<int> jitter_best(real.size(), -1);
    for (size_t pi = 0; pi < proposals.size(); ++pi) {
        const Detection& d = proposals[pi];
        double max_iou = 0.0;
        for (size_t gi = 0; gi < real.size(); ++gi) {
            double ov = iou(d.bbox, real[gi]->box);
            max_iou = std::max(max_iou, ov);
            if (ov > policy.pos_iou_min &&
                (jitter_best[gi] < 0 || d.score > proposals[jitter_best[gi]].score))
                jitter_best[gi] = int(pi);
        }
        if (max_iou < policy.neg_iou_max &&
            !overlaps_ignore(d.bbox, frame.boxes, policy.ignore_iou_max)) {
            TrainingWindow w;
            w.win = extract_window(pyr, d, model);
            w.frame_id = frame.frame_id;
            w.source_iou = max_iou;
            w.level = d.level;
            w.cell_x = d.cell_x;
            w.cell_y = d.cell_y;
            out.negatives.push_back(std::move(w));
        }
    }

    for (size_t gi = 0; gi < real.size(); ++gi) {
        auto proj = project_gt_to_window(pyr, real[gi]->box, model);
        bool have_any = false;
        if (proj && proj->iou >= policy.pos_iou_min) {
            BBox wb = window_bbox(pyr, model, proj->level, proj->cell_x, proj->cell_y);
            if (!overlaps_ignore(wb, frame.boxes, policy.ignore_iou_max)) {
                Detection d;
                d.level = proj->level;
                d.cell_x = proj->cell_x;
                d.cell_y = proj->cell_y;
                TrainingWindow w;
                w.win = extract_window(pyr, d, model);
                w.frame_id = frame.frame_id;
                w.source_iou = proj->iou;
                w.level = proj->level;
                w.cell_x = proj->cell_x;
                w.cell_y = proj->cell_y;
                out.positives.push_back(std::move(w));
                have_any = true;
            }
        }
        if (policy.positive_mode == PositiveMode::GtPlusJittered && jitter_best[gi] >= 0) {
            const Detection& d = proposals[jitter_best[gi]];
            bool same_as_proj = proj && proj->level == d.level && proj->cell_x == d.cell_x &&
                                proj->cell_y == d.cell_y && have_any;
            if (!same_as_proj && !overlaps_ignore(d.bbox, frame.boxes, policy.ignore_iou_max)) {
                TrainingWindow w;
                w.win = extract_window(pyr, d, model);
                w.frame_id = frame.frame_id;
                w.source_iou = iou(d.bbox, real[gi]->box);
                w.level = d.level;
                w.cell_x = d.cell_x;
                w.cell_y = d.cell_y;
                out.positives.push_back(std::move(w));
                have_any = true;
            }
        }
        if (!have_any) out.skipped_gts++;
    }
    return out;
}

double fppi_threshold(const std::vector<std::vector<double>>& per_frame_scores,
                      double target_fppi) {
    return threshold_for_mean_count(per_frame_scores, target_fppi);
}

TrainingSet collect_initial_set(const std::vector<AnnotatedFrame>& frames,
                                const FrameLoader& loader, const DetectorModel& detector,
                                const MatchPolicy& policy, double round0_fppi_target) {
    TrainingSet set;
    std::vector<FrameSamples> per_frame;
    std::vector<std::vector<double>> neg_det_scores;
    for (const AnnotatedFrame& fr : frames) {
        Pyramid pyr = build_pyramid(loader(fr), detector.pyramid);
        FrameSamples s = collect_from_frame(pyr, fr, detector, policy);
        // remember the detector score of each negative for the round-0 budget
        std::vector<double> scores;
        for (const TrainingWindow& w : s.negatives) {
            CascadeResult r = cascade_evaluate(
                detector.forest, std::span<const float>(w.win.data.data(), w.win.data.size()));
            scores.push_back(r.score);
        }
        neg_det_scores.push_back(std::move(scores));
        per_frame.push_back(std::move(s));
    }
    double thr = -std::numeric_limits<double>::infinity();
    if (std::isfinite(round0_fppi_target))
        thr = fppi_threshold(neg_det_scores, round0_fppi_target);
    for (size_t fi = 0; fi < per_frame.size(); ++fi) {
        for (auto& p : per_frame[fi].positives) set.positives.push_back(std::move(p));
        for (size_t ni = 0; ni < per_frame[fi].negatives.size(); ++ni)
            if (neg_det_scores[fi][ni] >= thr)
                set.negatives.push_back(std::move(per_frame[fi].negatives[ni]));
    }
    return set;
}

namespace {

void set_to_tensors(const TrainingSet& set, std::vector<Tensor>& x, std::vector<double>& t) {
    x.clear();
    t.clear();
    x.reserve(set.positives.size() + set.negatives.size());
    for (const TrainingWindow& w : set.positives) {
        x.push_back(window_to_tensor(w.win));
        t.push_back(1.0);
    }
    for (const TrainingWindow& w : set.negatives) {
        x.push_back(window_to_tensor(w.win));
        t.push_back(0.0);
    }
}

CnnModel build_variant(const BootstrapConfig& cfg) {
    return cfg.variant == AcnetVariant::Acnet ? build_acnet(cfg.fc_hidden)
                                              : build_acnet_plus(cfg.fc_hidden);
}

}  // namespace

BootstrapResult bootstrap_acnet(const std::vector<AnnotatedFrame>& frames,
                                const FrameLoader& loader, const DetectorModel& detector,
                                const MatchPolicy& policy, TrainingSet initial,
                                const SgdConfig& sgd, const BootstrapConfig& cfg) {
    Shape in = acnet_input_shape(cfg.variant);
    if (in.h != detector.cells_h() || in.w != detector.cells_w())
        throw ModelMismatchError("bootstrap_acnet: variant does not match the detector window");

    BootstrapResult result;
    result.set = std::move(initial);

    std::unordered_set<uint64_t> seen;
    for (const TrainingWindow& w : result.set.negatives)
        seen.insert(window_key(w.frame_id, w.level, w.cell_x, w.cell_y));

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> x, xt, xv;
    std::vector<double> t, tt, tv;

    for (int round = 0;; ++round) {
        result.set.bootstrap_round = round;
        set_to_tensors(result.set, x, t);
        if (x.empty()) throw DataError("bootstrap_acnet: empty training set");

        // deterministic held-out split
        std::vector<size_t> idx(x.size());
        std::iota(idx.begin(), idx.end(), size_t(0));
        std::mt19937_64 rng(mix64(cfg.seed + 0x5151u) ^ uint64_t(round));
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[size_t(rng() % uint64_t(i))]);
        size_t n_val = size_t(double(x.size()) * cfg.val_fraction);
        xt.clear(); tt.clear(); xv.clear(); tv.clear();
        for (size_t k = 0; k < idx.size(); ++k) {
            if (k < n_val) {
                xv.push_back(x[idx[k]]);
                tv.push_back(t[idx[k]]);
            } else {
                xt.push_back(x[idx[k]]);
                tt.push_back(t[idx[k]]);
            }
        }

        CnnModel model = build_variant(cfg);
        init_gaussian(model, cfg.init_std, mix64(cfg.seed) ^ uint64_t(round));
        SgdConfig round_sgd = sgd;
        round_sgd.seed = mix64(cfg.seed + 17) ^ uint64_t(round);
        TrainStats stats = train_sgd(model, xt, tt, xv, tv, round_sgd);
        double val = stats.val_loss.empty() ? stats.train_loss.back() : stats.val_loss.back();

        BootstrapRoundStats rs;
        rs.round = round;
        rs.n_pos = result.set.positives.size();
        rs.n_neg = result.set.negatives.size();
        rs.val_loss = val;
        rs.epochs = stats.epochs;

        bool improved = val < best_val - 1e-6;
        if (improved) {
            best_val = val;
            result.model = model;
        }
        if (round > 0 && !improved) {
            result.rounds.push_back(rs);
            break;  // saturated
        }
        if (round >= cfg.max_rounds) {
            result.rounds.push_back(rs);
            break;
        }

        // mine hard negatives with this round's network
        std::vector<std::vector<double>> fp_scores(frames.size());
        std::vector<std::vector<TrainingWindow>> candidates(frames.size());
        for (size_t fi = 0; fi < frames.size(); ++fi) {
            Pyramid pyr = build_pyramid(loader(frames[fi]), detector.pyramid);
            FrameSamples s = collect_from_frame(pyr, frames[fi], detector, policy);
            for (TrainingWindow& w : s.negatives) {
                double score = score_proposal(model, w.win);
                fp_scores[fi].push_back(score);
                candidates[fi].push_back(std::move(w));
            }
        }
        double thr = fppi_threshold(fp_scores, cfg.fppi_target);
        size_t added = 0;
        for (size_t fi = 0; fi < frames.size(); ++fi)
            for (size_t ci = 0; ci < candidates[fi].size(); ++ci) {
                if (fp_scores[fi][ci] < thr) continue;
                const TrainingWindow& w = candidates[fi][ci];
                uint64_t key = window_key(w.frame_id, w.level, w.cell_x, w.cell_y);
                if (!seen.insert(key).second) continue;
                result.set.negatives.push_back(candidates[fi][ci]);
                ++added;
            }
        rs.new_negatives = added;
        result.rounds.push_back(rs);
        if (added == 0) break;
    }
    return result;
}

BoostedForest train_brf(const CnnModel& cnn, const TrainingSet& set, BoostTrainConfig cfg,
                        std::vector<BoostRound>* log) {
    const size_t n = set.positives.size() + set.negatives.size();
    if (n == 0) throw DataError("train_brf: empty training set");
    const size_t flen = brf_feature_len(model_variant(cnn));
    FeatureMatrix m;
    m.resize(n, flen);
    std::vector<int> labels(n);
    size_t row = 0;
    for (const TrainingWindow& w : set.positives) {
        BrfFeatures f = extract_brf_features(cnn, w.win);
        for (size_t i = 0; i < flen; ++i) m.row(row)[i] = float(f.values[i]);
        labels[row++] = 1;
    }
    for (const TrainingWindow& w : set.negatives) {
        BrfFeatures f = extract_brf_features(cnn, w.win);
        for (size_t i = 0; i < flen; ++i) m.row(row)[i] = float(f.values[i]);
        labels[row++] = -1;
    }
    BoostedForest forest = adaboost_train(m, labels, cfg, log);
    // pure re-scorer: no cascade, accept everything
    forest.cascade_threshold = std::numeric_limits<float>::quiet_NaN();
    forest.acceptance_threshold = -std::numeric_limits<float>::infinity();
    return forest;
}

std::vector<std::array<uint64_t, 4>> brf_selection_histogram(const BoostedForest& forest,
                                                             AcnetVariant variant, int chunk) {
    Shape in = acnet_input_shape(variant);
    const size_t seg_end[4] = {size_t(in.h) * in.w * in.c,
                               size_t(in.h) * in.w * in.c + 14 * 8 * 40,
                               size_t(in.h) * in.w * in.c + 14 * 8 * 40 + 10 * 6 * 40,
                               brf_feature_len(variant)};
    std::vector<std::array<uint64_t, 4>> hist;
    for (size_t ti = 0; ti < forest.trees.size(); ++ti) {
        size_t ci = ti / size_t(chunk);
        if (ci >= hist.size()) hist.push_back({0, 0, 0, 0});
        for (const TreeNode& node : forest.trees[ti].nodes) {
            if (is_leaf(node)) continue;
            int seg = 0;
            while (node.feature >= seg_end[seg]) ++seg;
            hist[ci][size_t(seg)]++;
        }
    }
    return hist;
}

DetectorModel train_stage1(const std::vector<AnnotatedFrame>& frames, const FrameLoader& loader,
                           const PyramidConfig& pyramid, const MatchPolicy& policy,
                           const Stage1Config& cfg) {
    if (frames.empty()) throw DataError("train_stage1: no training frames");
    DetectorModel model;
    model.pyramid = pyramid;
    const int flen = model.feature_len();
    const int ch = model.cells_h(), cw = model.cells_w();

    std::vector<TrainingWindow> positives, negatives;
    std::unordered_set<uint64_t> neg_seen;

    // GT positives and random negatives
    for (const AnnotatedFrame& fr : frames) {
        Pyramid pyr = build_pyramid(loader(fr), pyramid);
        for (const GtBox& g : fr.boxes) {
            if (g.ignore) continue;
            auto proj = project_gt_to_window(pyr, g.box, model);
            if (!proj || proj->iou < policy.pos_iou_min) continue;
            Detection d;
            d.level = proj->level;
            d.cell_x = proj->cell_x;
            d.cell_y = proj->cell_y;
            TrainingWindow w;
            w.win = extract_window(pyr, d, model);
            w.frame_id = fr.frame_id;
            w.source_iou = proj->iou;
            w.level = proj->level;
            w.cell_x = proj->cell_x;
            w.cell_y = proj->cell_y;
            positives.push_back(std::move(w));
        }
        std::mt19937_64 rng(mix64(cfg.seed) ^ mix64(uint64_t(fr.frame_id) + 1));
        int placed = 0, attempts = 0;
        while (placed < cfg.random_negs_per_frame && attempts < cfg.random_negs_per_frame * 50) {
            ++attempts;
            int li = int(rng() % pyr.levels.size());
            const AggregatedChannels& agg = pyr.levels[li].agg;
            if (agg.h < ch || agg.w < cw) continue;
            int cy = int(rng() % uint64_t(agg.h - ch + 1));
            int cx = int(rng() % uint64_t(agg.w - cw + 1));
            BBox wb = window_bbox(pyr, model, li, cx, cy);
            double max_iou = 0.0;
            for (const GtBox& g : fr.boxes)
                if (!g.ignore) max_iou = std::max(max_iou, iou(wb, g.box));
            if (max_iou >= policy.neg_iou_max) continue;
            if (overlaps_ignore(wb, fr.boxes, policy.ignore_iou_max)) continue;
            if (!neg_seen.insert(window_key(fr.frame_id, li, cx, cy)).second) continue;
            Detection d;
            d.level = li;
            d.cell_x = cx;
            d.cell_y = cy;
            TrainingWindow w;
            w.win = extract_window(pyr, d, model);
            w.frame_id = fr.frame_id;
            w.level = li;
            w.cell_x = cx;
            w.cell_y = cy;
            negatives.push_back(std::move(w));
            ++placed;
        }
    }
    if (positives.empty()) throw DataError("train_stage1: no usable positives");
    if (negatives.empty()) throw DataError("train_stage1: no usable negatives");

    std::vector<int> budgets(cfg.round_trees.begin(), cfg.round_trees.end());
    budgets.push_back(cfg.boost.n_trees);

    auto fit = [&](int n_trees, uint64_t seed) {
        FeatureMatrix m;
        m.resize(positives.size() + negatives.size(), size_t(flen));
        std::vector<int> labels(m.n);
        size_t row = 0;
        for (const TrainingWindow& w : positives) {
            std::copy(w.win.data.begin(), w.win.data.end(), m.row(row));
            labels[row++] = 1;
        }
        for (const TrainingWindow& w : negatives) {
            std::copy(w.win.data.begin(), w.win.data.end(), m.row(row));
            labels[row++] = -1;
        }
        BoostTrainConfig bc = cfg.boost;
        bc.n_trees = n_trees;
        bc.rng_seed = seed;
        return adaboost_train(m, labels, bc);
    };

    model.forest = fit(budgets[0], mix64(cfg.seed + 101));
    model.forest.cascade_threshold = float(cfg.cascade_threshold);
    model.forest.acceptance_threshold = -std::numeric_limits<float>::infinity();

    for (size_t r = 1; r < budgets.size(); ++r) {
        // mine hard negatives with the current forest
        for (const AnnotatedFrame& fr : frames) {
            Pyramid pyr = build_pyramid(loader(fr), pyramid);
            std::vector<Detection> dets = detect_proposals(pyr, model);
            std::sort(dets.begin(), dets.end(),
                      [](const Detection& a, const Detection& b) { return a.score > b.score; });
            int taken = 0;
            for (const Detection& d : dets) {
                if (taken >= cfg.hard_negs_per_frame) break;
                double max_iou = 0.0;
                for (const GtBox& g : fr.boxes)
                    if (!g.ignore) max_iou = std::max(max_iou, iou(d.bbox, g.box));
                if (max_iou >= policy.neg_iou_max) continue;
                if (overlaps_ignore(d.bbox, fr.boxes, policy.ignore_iou_max)) continue;
                if (!neg_seen.insert(window_key(fr.frame_id, d.level, d.cell_x, d.cell_y)).second)
                    continue;
                TrainingWindow w;
                w.win = extract_window(pyr, d, model);
                w.frame_id = fr.frame_id;
                w.level = d.level;
                w.cell_x = d.cell_x;
                w.cell_y = d.cell_y;
                negatives.push_back(std::move(w));
                ++taken;
            }
        }
        model.forest = fit(budgets[r], mix64(cfg.seed + 101 + r));
        model.forest.cascade_threshold = float(cfg.cascade_threshold);
        model.forest.acceptance_threshold = -std::numeric_limits<float>::infinity();
    }
    return model;
}

}  // namespace acdet
