#pragma once

#include "hardmine/geometry.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hardmine {

// Ground truth for one image. Dimensions come from the sidecar manifest
// (this library never decodes image files), so width/height are 0 on records
// parsed straight from an annotation file until merge_manifest() runs.
struct ImageRecord {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<Ellipse> faces;
    // honored by split_folds when every record carries one
    std::optional<int> preset_fold;
};

struct Fold {
    int fold_index = 0;  // 1-based
    std::vector<ImageRecord> records;
};

struct DetectionRecord {
    std::string image_id;
    std::vector<Detection> detections;
};

struct ManifestEntry {
    std::string image_id;
    int width = 0;
    int height = 0;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// FDDB ellipse-list format: image-id line, face-count line, then per face
// "major_radius minor_radius angle center_x center_y 1" (angle in radians).
std::vector<ImageRecord> parse_annotation_file(const std::string& content);
std::string write_annotation_file(const std::vector<ImageRecord>& records);

// Detection files: image-id line, count line, then per detection
// "x_min y_min width height score", 6-decimal fixed point. Detections are
// sorted by descending score on write.
std::vector<DetectionRecord> parse_detection_file(const std::string& content);
std::string write_detection_file(std::vector<DetectionRecord> records);

// Manifest: one "image_id width height" line per image.
std::vector<ManifestEntry> parse_manifest(const std::string& content);
std::string write_manifest(const std::vector<ManifestEntry>& entries);

// Fold lists: one image id per line.
std::vector<std::string> parse_fold_list(const std::string& content);
std::string write_fold_list(const std::vector<std::string>& image_ids);

// Attach manifest dimensions to annotation records. Throws if a record has
// no manifest entry or an annotation lies wildly outside the image.
std::vector<ImageRecord> merge_manifest(std::vector<ImageRecord> records,
                                        const std::vector<ManifestEntry>& manifest);

// Uniform rescale so min(width, height) lands on target_shorter_side.
// Radii and centers scale, the angle does not. Returns the scale factor so
// detections can be mapped back to original coordinates.
std::pair<ImageRecord, double> rescale_record(const ImageRecord& r, double target_shorter_side);

// Deterministic seeded partition into k folds with sizes differing by at
// most 1. If every record carries preset_fold, those assignments are honored
// instead of the seed. Throws when k < 2, records is empty, or k exceeds the
// record count.
std::vector<Fold> split_folds(const std::vector<ImageRecord>& records, int k, std::uint64_t seed);

// Bounding boxes of the annotated faces, in annotation order.
std::vector<Box> face_boxes(const ImageRecord& r);

}  // namespace hardmine
