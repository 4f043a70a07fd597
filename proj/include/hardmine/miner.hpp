#pragma once

#include "hardmine/annotations.hpp"
#include "hardmine/roi_sampler.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hardmine {

// A confident detector false positive: a detection whose max IoU with every
// ground-truth face box of its image stays below the harvest threshold.
struct HardNegative {
    std::string image_id;
    Box region;
    double detector_score = 0.0;
    double max_iou = 0.0;
};

struct HarvestConfig {
    double score_threshold = 0.8;  // pinned by the experiment recipe, not a constant
    double iou_threshold = 0.5;
    int workers = 1;  // <= 0 means auto
};

// Scoring interface: detections for one annotated image. Must be safe to
// call concurrently (harvesting parallelizes over images).
using DetectFn = std::function<std::vector<Detection>(const ImageRecord&)>;

// Runs the detector over every image and keeps the detections with
// score >= score_threshold whose max IoU against that image's face boxes is
// < iou_threshold. Output is ordered by (image_id, descending score)
// regardless of worker count.
std::vector<HardNegative> harvest(const DetectFn& detector, const std::vector<ImageRecord>& images,
                                  const HarvestConfig& cfg);

// Accumulates found negatives into pool, deduplicating by (image_id, region)
// with 1e-6 coordinate tolerance. Returns the number actually added.
std::size_t merge_into_pool(std::vector<HardNegative>& pool,
                            const std::vector<HardNegative>& found);

// Pool persistence: "image_id x_min y_min x_max y_max score max_iou" lines.
std::string write_pool_file(const std::vector<HardNegative>& pool);
std::vector<HardNegative> parse_pool_file(const std::string& content);

// View of the pool in the shape the sampler consumes.
std::vector<PoolEntry> pool_entries(const std::vector<HardNegative>& pool);

struct RoundReport {
    int round_index = 0;
    std::size_t hard_negatives_found = 0;  // harvested this round (0 in round 1)
    std::string detector_snapshot_id;
    std::string eval_summary;  // reference returned by the evaluate hook
};

// The bootstrap driver stays agnostic of the concrete detector: the caller
// supplies training, detector loading, and (optionally) per-round evaluation.
struct BootstrapHooks {
    // trains with the accumulated pool injected; returns a snapshot id
    std::function<std::string(int round, const std::vector<HardNegative>& pool,
                              const SamplerConfig& sampler)>
        train;
    // opens a snapshot for harvesting
    std::function<DetectFn(const std::string& snapshot_id)> open_detector;
    // per-round evaluation; may be empty
    std::function<std::string(int round, const std::string& snapshot_id)> evaluate;
};

struct BootstrapResult {
    std::string final_snapshot_id;
    std::vector<RoundReport> reports;
    bool aborted = false;   // trainer failed; earlier snapshots remain valid
    std::string error;
};

// Round 1 trains with an empty pool. Every round k >= 2 harvests from the
// training images with the round k-1 detector, merges into the accumulated
// pool, and retrains. A trainer failure stops the loop and leaves the last
// completed round's snapshot as the result.
BootstrapResult bootstrap(const BootstrapHooks& hooks, const std::vector<Fold>& dataset,
                          int rounds, const HarvestConfig& harvest_cfg,
                          const SamplerConfig& sampler_cfg);

}  // namespace hardmine
