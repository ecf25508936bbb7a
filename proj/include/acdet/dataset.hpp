#pragma once

#include <string>
#include <vector>

#include "acdet/detector.hpp"

namespace acdet {

struct GtBox {
    BBox box;
    bool ignore = false;
};

struct AnnotatedFrame {
    int frame_id = 0;
    std::string image;  // path, relative to the annotation file's directory
    std::vector<GtBox> boxes;
};

struct FrameDetections {
    int frame_id = 0;
    std::vector<Detection> dets;
};

// One JSON object per line: {"frame_id":..,"image":"..","boxes":[{"x":..,"y":..,"w":..,"h":..,"ignore":..}]}
std::vector<AnnotatedFrame> load_annotations(const std::string& path);
void save_annotations(const std::string& path, const std::vector<AnnotatedFrame>& frames);

// One JSON object per line: {"frame_id":..,"x":..,"y":..,"w":..,"h":..,"score":..}
void save_detections_jsonl(const std::string& path, const std::vector<FrameDetections>& frames);
std::vector<FrameDetections> load_detections_jsonl(const std::string& path);

// Whitespace text, one line per detection: frame_id x1 y1 x2 y2 score
void save_detections_kitti(const std::string& path, const std::vector<FrameDetections>& frames);

}  // namespace acdet
