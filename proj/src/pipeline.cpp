#include "acdet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void rescore(std::vector<Detection>& dets, const Pyramid& pyr, const PipelineModels& models,
             const PipelineOptions& opt, StageTimes* t) {
    if (opt.use_cnn && models.cnn) {
        double t0 = now_s();
        for (Detection& d : dets) {
            FeatureWindow win = extract_window(pyr, d, models.detector);
            d.score = score_proposal(*models.cnn, win);
            d.scored_by = ScoreSource::Cnn;
        }
        if (t) t->cnn += now_s() - t0;
        if (opt.use_brf && models.brf) {
            double t1 = now_s();
            for (Detection& d : dets) {
                FeatureWindow win = extract_window(pyr, d, models.detector);
                BrfFeatures f = extract_brf_features(*models.cnn, win);
                std::vector<float> x(f.values.begin(), f.values.end());
                d.score = forest_score(*models.brf, x);
                d.scored_by = ScoreSource::Brf;
            }
            if (t) t->brf += now_s() - t1;
        }
    }
}

}  // namespace

std::vector<Detection> run_pipeline(const Image& img, const PipelineModels& models,
                                    const PipelineOptions& opt, StageTimes* timing) {
    if (opt.use_brf && models.brf && !(opt.use_cnn && models.cnn))
        throw ModelMismatchError("run_pipeline: BRF rescoring requires the CNN");

    double t0 = now_s();
    Pyramid pyr = build_pyramid(img, models.detector.pyramid);
    double t1 = now_s();
    std::vector<Detection> dets = detect_proposals(pyr, models.detector);
    double t2 = now_s();
    if (opt.use_purge && models.geometry) dets = purge(dets, *models.geometry);
    double t3 = now_s();

    if (timing) {
        timing->pyramid += t1 - t0;
        timing->cascade += t2 - t1;
        timing->purge += t3 - t2;
    }

    if (opt.rescore_before_nms) rescore(dets, pyr, models, opt, timing);

    double t4 = now_s();
    dets = nms(dets, models.detector.nms_overlap, models.detector.nms_use_iou);
    if (timing) timing->nms += now_s() - t4;

    if (!opt.rescore_before_nms) rescore(dets, pyr, models, opt, timing);

    if (std::isfinite(opt.final_threshold)) {
        std::vector<Detection> kept;
        for (const Detection& d : dets)
            if (d.score >= opt.final_threshold) kept.push_back(d);
        dets = std::move(kept);
    }
    if (timing) {
        timing->total += now_s() - t0;
        timing->frames += 1;
    }
    return dets;
}

StageTimes benchmark(const std::vector<Image>& frames, const PipelineModels& models,
                     const PipelineOptions& opt, int warmup_frames) {
    if (frames.empty()) throw DataError("benchmark: no frames");
    for (int i = 0; i < warmup_frames && i < int(frames.size()); ++i)
        run_pipeline(frames[size_t(i)], models, opt);
    StageTimes acc;
    for (const Image& img : frames) run_pipeline(img, models, opt, &acc);
    return acc;
}

std::string format_benchmark_tsv(const StageTimes& t) {
    const double n = t.frames > 0 ? double(t.frames) : 1.0;
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << "stage\tseconds_per_frame\n";
    os << "pyramid\t" << t.pyramid / n << "\n";
    os << "cascade\t" << t.cascade / n << "\n";
    os << "purge\t" << t.purge / n << "\n";
    os << "cnn\t" << t.cnn / n << "\n";
    os << "brf\t" << t.brf / n << "\n";
    os << "nms\t" << t.nms / n << "\n";
    os << "total\t" << t.total / n << "\n";
    return os.str();
}

}  // namespace acdet
