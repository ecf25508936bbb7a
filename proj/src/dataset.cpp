#include "acdet/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "acdet/errors.hpp"

namespace acdet {

using nlohmann::json;

std::vector<AnnotatedFrame> load_annotations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open annotations: " + path);
    std::vector<AnnotatedFrame> frames;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        AnnotatedFrame fr;
        fr.frame_id = j.at("frame_id").get<int>();
        fr.image = j.value("image", std::string());
        for (const json& b : j.value("boxes", json::array())) {
            GtBox g;
            g.box = {b.at("x").get<double>(), b.at("y").get<double>(), b.at("w").get<double>(),
                     b.at("h").get<double>()};
            g.ignore = b.value("ignore", false);
            if (g.box.w <= 0 || g.box.h <= 0)
                throw DataError(path + ":" + std::to_string(lineno) + ": box with non-positive extent");
            fr.boxes.push_back(g);
        }
        frames.push_back(std::move(fr));
    }
    return frames;
}

void save_annotations(const std::string& path, const std::vector<AnnotatedFrame>& frames) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write annotations: " + path);
    for (const AnnotatedFrame& fr : frames) {
        json boxes = json::array();
        for (const GtBox& g : fr.boxes)
            boxes.push_back({{"x", g.box.x},
                             {"y", g.box.y},
                             {"w", g.box.w},
                             {"h", g.box.h},
                             {"ignore", g.ignore}});
        json j = {{"frame_id", fr.frame_id}, {"image", fr.image}, {"boxes", boxes}};
        f << j.dump() << "\n";
    }
}

void save_detections_jsonl(const std::string& path, const std::vector<FrameDetections>& frames) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write detections: " + path);
    for (const FrameDetections& fr : frames)
        for (const Detection& d : fr.dets) {
            json j = {{"frame_id", fr.frame_id}, {"x", d.bbox.x}, {"y", d.bbox.y},
                      {"w", d.bbox.w},           {"h", d.bbox.h}, {"score", d.score}};
            f << j.dump() << "\n";
        }
}

std::vector<FrameDetections> load_detections_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open detections: " + path);
    std::vector<FrameDetections> frames;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        int id = j.at("frame_id").get<int>();
        if (frames.empty() || frames.back().frame_id != id) frames.push_back({id, {}});
        Detection d;
        d.bbox = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
                  j.at("h").get<double>()};
        d.score = j.at("score").get<double>();
        frames.back().dets.push_back(d);
    }
    return frames;
}

void save_detections_kitti(const std::string& path, const std::vector<FrameDetections>& frames) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write detections: " + path);
    f << std::setprecision(9);
    for (const FrameDetections& fr : frames)
        for (const Detection& d : fr.dets)
            f << fr.frame_id << " " << d.bbox.x << " " << d.bbox.y << " " << d.bbox.x2() << " "
              << d.bbox.y2() << " " << d.score << "\n";
}

}  // namespace acdet
