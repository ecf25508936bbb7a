#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "acdet/config.hpp"
#include "acdet/errors.hpp"
#include "acdet/pipeline.hpp"
#include "acdet/sampling.hpp"
#include "acdet/synth.hpp"

using namespace acdet;
namespace fs = std::filesystem;

namespace {

struct Dataset {
    std::vector<AnnotatedFrame> frames;
    fs::path root;  // image paths are resolved against this

    FrameLoader loader() const {
        fs::path base = root;
        return [base](const AnnotatedFrame& f) { return load_image((base / f.image).string()); };
    }
};

// --in accepts an annotation file (frames + boxes) or a directory of images.
Dataset load_dataset(const std::string& in) {
    Dataset d;
    if (fs::is_directory(in)) {
        d.root = in;
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(in)) {
            std::string ext = e.path().extension().string();
            if (ext == ".ppm" || ext == ".png") names.push_back(e.path().filename().string());
        }
        std::sort(names.begin(), names.end());
        if (names.empty()) throw DataError("no .ppm/.png images in " + in);
        for (size_t i = 0; i < names.size(); ++i) {
            AnnotatedFrame f;
            f.frame_id = int(i);
            f.image = names[i];
            d.frames.push_back(std::move(f));
        }
        return d;
    }
    d.root = fs::path(in).parent_path();
    d.frames = load_annotations(in);
    return d;
}

RunConfig load_cfg(const std::string& path) {
    if (path.empty()) return default_config();
    return load_config(path);
}

DetectorModel assemble_detector(const RunConfig& cfg, const std::string& forest_path) {
    DetectorModel m;
    m.pyramid = cfg.pyramid;
    m.nms_overlap = cfg.nms_overlap;
    m.nms_use_iou = cfg.nms_use_iou;
    m.forest = load_forest(forest_path);
    if (int(m.forest.feature_len) != m.feature_len())
        throw ModelMismatchError("detector model does not match the configured window/block");
    return m;
}

PipelineModels assemble_models(const RunConfig& cfg, const std::string& forest_path,
                               const std::string& cnn_path, const std::string& brf_path) {
    PipelineModels models;
    models.detector = assemble_detector(cfg, forest_path);
    if (!cnn_path.empty()) {
        CnnModel cnn = load_cnn(cnn_path);
        Shape in = acnet_input_shape(model_variant(cnn));
        if (in.h != models.detector.cells_h() || in.w != models.detector.cells_w())
            throw ModelMismatchError("cnn variant does not match the detector block size");
        models.cnn = std::move(cnn);
    }
    if (!brf_path.empty()) {
        if (!models.cnn) throw ModelMismatchError("brf model requires a cnn model");
        BoostedForest brf = load_forest(brf_path);
        if (size_t(brf.feature_len) != brf_feature_len(model_variant(*models.cnn)))
            throw ModelMismatchError("brf model does not match the cnn variant");
        models.brf = std::move(brf);
    }
    models.geometry = cfg.geometry;
    return models;
}

int run_detect(const RunConfig& cfg, const Dataset& data, const PipelineModels& models,
               const std::string& out, const std::string& format, int threads) {
    PipelineOptions opt = cfg.pipeline;
    if (!models.cnn) opt.use_cnn = false;
    if (!models.brf) opt.use_brf = false;
    if (!models.geometry) opt.use_purge = false;

    std::vector<FrameDetections> results(data.frames.size());
    FrameLoader loader = data.loader();
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= data.frames.size()) break;
            Image img = loader(data.frames[i]);
            results[i].frame_id = data.frames[i].frame_id;
            results[i].dets = run_pipeline(img, models, opt);
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (format == "kitti")
        save_detections_kitti(out, results);
    else
        save_detections_jsonl(out, results);
    size_t total = 0;
    for (const auto& r : results) total += r.dets.size();
    std::cout << "frames=" << results.size() << " detections=" << total << " -> " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aggregated-channel pedestrian detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, format = "json";
    uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    app.add_option("--config", config_path, "run configuration file");
    app.add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--threads", threads, "worker threads (detection only)");
    app.add_option("--format", format, "detections format: json|kitti")
        ->check(CLI::IsMember({"json", "kitti"}));

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out;
    int synth_frames = -1;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--frames", synth_frames, "frame count override");

    auto* train1 = app.add_subcommand("train-stage1", "train the sliding-window detector");
    std::string t1_data, t1_out;
    train1->add_option("--data", t1_data, "training annotations (jsonl)")->required();
    train1->add_option("--out", t1_out, "output detector model (.acbf)")->required();

    auto* calib = app.add_subcommand("calibrate", "tune the acceptance threshold");
    std::string cal_model, cal_data, cal_out;
    double cal_target = -1;
    calib->add_option("--model", cal_model, "detector model")->required();
    calib->add_option("--data", cal_data, "calibration annotations")->required();
    calib->add_option("--out", cal_out, "output model path (defaults to --model)");
    calib->add_option("--target", cal_target, "candidates per image (default from config)");

    auto* collect = app.add_subcommand("collect", "mine the initial training windows");
    std::string col_model, col_data, col_out_data, col_out_index;
    collect->add_option("--model", col_model, "calibrated detector model")->required();
    collect->add_option("--data", col_data, "training annotations")->required();
    collect->add_option("--out-data", col_out_data, "window cache data file")->required();
    collect->add_option("--out-index", col_out_index, "window cache index file")->required();

    auto* traincnn = app.add_subcommand("train-cnn", "bootstrap-train the proposal scorer");
    std::string tc_model, tc_data, tc_out, tc_set_data, tc_set_index, tc_cache_out_data,
        tc_cache_out_index;
    traincnn->add_option("--model", tc_model, "calibrated detector model")->required();
    traincnn->add_option("--data", tc_data, "training annotations")->required();
    traincnn->add_option("--out", tc_out, "output cnn model (.acnn)")->required();
    traincnn->add_option("--set-data", tc_set_data, "precollected window cache data");
    traincnn->add_option("--set-index", tc_set_index, "precollected window cache index");
    traincnn->add_option("--out-set-data", tc_cache_out_data, "write the bootstrapped cache here");
    traincnn->add_option("--out-set-index", tc_cache_out_index, "its index file");

    auto* trainbrf = app.add_subcommand("train-brf", "train the boosted re-scorer");
    std::string tb_cnn, tb_set_data, tb_set_index, tb_out, tb_hist;
    trainbrf->add_option("--cnn", tb_cnn, "trained cnn model")->required();
    trainbrf->add_option("--set-data", tb_set_data, "bootstrapped window cache data")->required();
    trainbrf->add_option("--set-index", tb_set_index, "its index file")->required();
    trainbrf->add_option("--out", tb_out, "output forest (.acbf)")->required();
    trainbrf->add_option("--hist", tb_hist, "write the split-feature histogram (tsv)");

    auto* fitgeo = app.add_subcommand("fit-geometry", "fit the ground-plane plausibility band");
    std::string fg_data, fg_out;
    double fg_coverage = 0.99;
    fitgeo->add_option("--data", fg_data, "training annotations")->required();
    fitgeo->add_option("--out", fg_out, "output config with the [geometry] section")->required();
    fitgeo->add_option("--coverage", fg_coverage, "central ratio mass the band must cover");

    auto* detect = app.add_subcommand("detect", "run the pipeline over frames");
    std::string det_model, det_cnn, det_brf, det_in, det_out;
    detect->add_option("--model", det_model, "detector model")->required();
    detect->add_option("--cnn", det_cnn, "cnn model (optional)");
    detect->add_option("--brf", det_brf, "brf model (optional)");
    detect->add_option("--in", det_in, "annotations file or image directory")->required();
    detect->add_option("--out", det_out, "detections output")->required();

    auto* evalc = app.add_subcommand("eval", "score detections against ground truth");
    std::string ev_dets, ev_gt, ev_protocol = "reasonable", ev_summary, ev_curve;
    evalc->add_option("--dets", ev_dets, "detections (jsonl)")->required();
    evalc->add_option("--gt", ev_gt, "annotations (jsonl)")->required();
    evalc->add_option("--protocol", ev_protocol, "reasonable|moderate")
        ->check(CLI::IsMember({"reasonable", "moderate"}));
    evalc->add_option("--out", ev_summary, "summary json");
    evalc->add_option("--curve", ev_curve, "miss-rate curve csv");

    auto* bench = app.add_subcommand("bench", "per-stage latency over frames");
    std::string be_model, be_cnn, be_brf, be_in;
    bench->add_option("--model", be_model, "detector model")->required();
    bench->add_option("--cnn", be_cnn, "cnn model (optional)");
    bench->add_option("--brf", be_brf, "brf model (optional)");
    bench->add_option("--in", be_in, "annotations file or image directory")->required();

    auto* dump = app.add_subcommand("dump-channels", "aggregated channels of one image");
    std::string dc_in, dc_out;
    dump->add_option("--in", dc_in, "input image (ppm/png)")->required();
    dump->add_option("--out", dc_out, "output channel dump (.acch)")->required();

    try {
        app.parse(argc, argv);

        RunConfig cfg = load_cfg(config_path);
        if (seed_set) {
            cfg.seed = seed;
            cfg.apply_seed();
        }

        if (*synth) {
            SyntheticSceneSpec spec = cfg.synth;
            if (synth_frames > 0) spec.n_frames = synth_frames;
            generate_synthetic(spec, synth_out);
            std::cout << "wrote " << spec.n_frames << " frames under " << synth_out << "\n";
        } else if (*train1) {
            Dataset data = load_dataset(t1_data);
            DetectorModel m =
                train_stage1(data.frames, data.loader(), cfg.pyramid, cfg.policy, cfg.stage1);
            save_forest(t1_out, m.forest);
            std::cout << "trained " << m.forest.trees.size() << " trees -> " << t1_out << "\n";
        } else if (*calib) {
            DetectorModel m = assemble_detector(cfg, cal_model);
            Dataset data = load_dataset(cal_data);
            std::vector<Pyramid> pyramids;
            FrameLoader loader = data.loader();
            for (const AnnotatedFrame& f : data.frames)
                pyramids.push_back(build_pyramid(loader(f), m.pyramid));
            double target = cal_target > 0 ? cal_target : cfg.operating_target;
            CalibrationResult r = calibrate_operating_point(m, pyramids, target);
            m.forest.acceptance_threshold = float(r.threshold);
            m.forest.cascade_threshold = float(r.cascade_threshold);
            save_forest(cal_out.empty() ? cal_model : cal_out, m.forest);
            std::cout << "threshold=" << r.threshold << " cascade=" << r.cascade_threshold
                      << " candidates/frame=" << r.achieved_per_frame
                      << (r.ok ? "" : " (warning: target missed)") << "\n";
            if (!r.ok) return 2;
        } else if (*collect) {
            DetectorModel m = assemble_detector(cfg, col_model);
            Dataset data = load_dataset(col_data);
            TrainingSet set = collect_initial_set(data.frames, data.loader(), m, cfg.policy,
                                                  cfg.bootstrap.round0_fppi_target);
            save_training_set(col_out_data, col_out_index, set);
            std::cout << "positives=" << set.positives.size()
                      << " negatives=" << set.negatives.size() << "\n";
        } else if (*traincnn) {
            DetectorModel m = assemble_detector(cfg, tc_model);
            Dataset data = load_dataset(tc_data);
            TrainingSet initial;
            if (!tc_set_data.empty())
                initial = load_training_set(tc_set_data, tc_set_index);
            else
                initial = collect_initial_set(data.frames, data.loader(), m, cfg.policy,
                                              cfg.bootstrap.round0_fppi_target);
            BootstrapResult r = bootstrap_acnet(data.frames, data.loader(), m, cfg.policy,
                                                std::move(initial), cfg.sgd, cfg.bootstrap);
            save_cnn(tc_out, r.model);
            if (!tc_cache_out_data.empty())
                save_training_set(tc_cache_out_data, tc_cache_out_index, r.set);
            for (const BootstrapRoundStats& rs : r.rounds)
                std::cout << "round " << rs.round << ": pos=" << rs.n_pos << " neg=" << rs.n_neg
                          << " val_loss=" << rs.val_loss << " epochs=" << rs.epochs << "\n";
            std::cout << "wrote " << tc_out << "\n";
        } else if (*trainbrf) {
            CnnModel cnn = load_cnn(tb_cnn);
            TrainingSet set = load_training_set(tb_set_data, tb_set_index);
            BoostedForest brf = train_brf(cnn, set, cfg.brf);
            save_forest(tb_out, brf);
            if (!tb_hist.empty()) {
                auto hist = brf_selection_histogram(brf, model_variant(cnn));
                std::ofstream hf(tb_hist);
                hf << "chunk\tinput\tconv1\tconv2\tconv3\n";
                for (size_t i = 0; i < hist.size(); ++i)
                    hf << i << "\t" << hist[i][0] << "\t" << hist[i][1] << "\t" << hist[i][2]
                       << "\t" << hist[i][3] << "\n";
            }
            std::cout << "trained " << brf.trees.size() << " trees -> " << tb_out << "\n";
        } else if (*fitgeo) {
            Dataset data = load_dataset(fg_data);
            std::vector<GtBox> gts;
            int frame_h = 0;
            FrameLoader loader = data.loader();
            if (!data.frames.empty()) frame_h = loader(data.frames[0]).h;
            for (const AnnotatedFrame& f : data.frames)
                for (const GtBox& g : f.boxes) gts.push_back(g);
            GeometryFit fit = fit_geometry(gts, fg_coverage, frame_h);
            if (fit.degenerate) std::cerr << "warning: degenerate fit, purging disabled\n";
            cfg.geometry = fit.model;
            save_config(fg_out, cfg);
            std::cout << "h(y) = " << fit.model.slope << "*y + " << fit.model.intercept
                      << ", band [" << fit.model.r_lo << ", " << fit.model.r_hi << "] -> "
                      << fg_out << "\n";
        } else if (*detect) {
            Dataset data = load_dataset(det_in);
            PipelineModels models = assemble_models(cfg, det_model, det_cnn, det_brf);
            return run_detect(cfg, data, models, det_out, format, threads);
        } else if (*evalc) {
            auto gt_frames = load_annotations(ev_gt);
            auto det_frames = load_detections_jsonl(ev_dets);
            EvalProtocol protocol = cfg.eval;
            protocol.min_gt_height = ev_protocol == "moderate" ? 25.0 : 50.0;
            std::map<int, const std::vector<Detection>*> by_id;
            for (const auto& fd : det_frames) by_id[fd.frame_id] = &fd.dets;
            std::vector<LabeledFrame> labeled;
            for (const AnnotatedFrame& f : gt_frames) {
                auto it = by_id.find(f.frame_id);
                static const std::vector<Detection> none;
                labeled.push_back(
                    label_frame(it == by_id.end() ? none : *it->second, f.boxes, protocol));
            }
            MrResult mr = log_average_miss_rate(labeled, protocol);
            ApResult ap = average_precision(labeled, protocol);
            nlohmann::json summary = {{"mr", mr.mr},
                                      {"ap", ap.ap},
                                      {"n_frames", labeled.size()},
                                      {"protocol", ev_protocol}};
            std::string text = summary.dump(2);
            std::cout << text << "\n";
            if (!ev_summary.empty()) {
                std::ofstream sf(ev_summary);
                sf << text << "\n";
            }
            if (!ev_curve.empty()) emit_curve(mr.curve, ev_curve);
        } else if (*bench) {
            Dataset data = load_dataset(be_in);
            PipelineModels models = assemble_models(cfg, be_model, be_cnn, be_brf);
            PipelineOptions opt = cfg.pipeline;
            if (!models.cnn) opt.use_cnn = false;
            if (!models.brf) opt.use_brf = false;
            if (!models.geometry) opt.use_purge = false;
            std::vector<Image> images;
            FrameLoader loader = data.loader();
            for (const AnnotatedFrame& f : data.frames) images.push_back(loader(f));
            StageTimes t = benchmark(images, models, opt);
            std::cout << format_benchmark_tsv(t);
        } else if (*dump) {
            Image img = load_image(dc_in);
            ChannelStack s = compute_channels(img, cfg.pyramid.channels);
            AggregatedChannels agg = aggregate(s, cfg.pyramid.block, cfg.pyramid.channels);
            save_channels(dc_out, agg);
            std::cout << agg.h << "x" << agg.w << "x" << kNumChannels << " -> " << dc_out << "\n";
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ModelMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
