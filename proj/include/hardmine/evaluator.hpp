#pragma once

#include "hardmine/annotations.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hardmine {

enum class MatchPolicy { GreedyByScore, OptimalAssignment };
enum class RocFlavor { Discrete, Continuous };

// A detection is accepted as matched when its region overlap with the
// assigned annotation reaches this value (the de facto protocol convention).
inline constexpr double kMatchOverlapThreshold = 0.5;

struct DetectionMatch {
    std::string image_id;
    double score = 0.0;
    bool matched = false;
    double overlap = 0.0;                    // 0 unless matched
    std::optional<std::size_t> annotation;   // face index within its image
};

struct MatchResult {
    std::vector<DetectionMatch> entries;
    std::size_t total_faces = 0;
    std::size_t total_images = 0;
};

// Matches the detections of one image against its annotated faces.
//   GreedyByScore: detections in descending score order each take the
//     unmatched face with the largest overlap; matched iff overlap >= 0.5.
//   OptimalAssignment: one-to-one assignment maximizing total overlap,
//     overlaps below 0.5 forbidden.
// Entries come back in descending score order; unmatched entries carry
// overlap 0. Overlap is box_ellipse_overlap at `overlap_resolution`.
std::vector<DetectionMatch> match_image(const std::string& image_id, std::vector<Detection> dets,
                                        const std::vector<Ellipse>& faces, MatchPolicy policy,
                                        int overlap_resolution = kDefaultOverlapResolution);

// Matches every record of the set (parallel over images, deterministic
// aggregation over sorted image ids). Detection records naming an unknown
// image are an error; images without detections still count their faces.
MatchResult match_records(const std::vector<DetectionRecord>& detections,
                          const std::vector<ImageRecord>& records, MatchPolicy policy,
                          int overlap_resolution = kDefaultOverlapResolution, int workers = 1);

struct RocPoint {
    long long false_positives = 0;
    double tp_measure = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    RocFlavor flavor = RocFlavor::Discrete;
};

// Sweeps the score threshold over all distinct detection scores descending.
// Discrete counts matched faces / total faces; Continuous sums matched
// overlaps / total faces. Empty matches give the single point (0, 0).
RocCurve build_roc(const MatchResult& matches, RocFlavor flavor);

// Pools detections and faces across folds into one MatchResult and builds
// (discrete, continuous). Pooled aggregation, not curve averaging.
std::pair<RocCurve, RocCurve> aggregate_folds(const std::vector<MatchResult>& per_fold);

// tp_measure of the curve at `fp` false positives (step interpolation;
// 0 before the first point, final value beyond the last).
double tp_at_fp(const RocCurve& curve, long long fp);

// Mean tp_measure over false positives in [0, max_fp].
double area_under_curve(const RocCurve& curve, long long max_fp);

// CSV with header "false_positives,tp_measure".
std::string write_roc_csv(const RocCurve& curve);

// JSON summary: totals, per-flavor AUC, and the scoring conventions in force
// (continuous scores cover matched detections only; overlap is plain
// box-ellipse region IoU).
std::string write_summary_json(const MatchResult& matches, const RocCurve& discrete,
                               const RocCurve& continuous, MatchPolicy policy,
                               int overlap_resolution);

}  // namespace hardmine
