#pragma once

#include "hardmine/geometry.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hardmine {

struct SamplerConfig {
    double th_fg = 0.5;       // foreground when max IoU >= th_fg
    double th_bg_low = 0.1;   // background when max IoU in [th_bg_low, th_fg)
    double bg_fg_ratio = 3.0;
    int batch_size = 64;
    // enforce the bg/fg ratio within each image instead of across the batch
    bool per_image_ratio = false;
};

void validate(const SamplerConfig& cfg);

enum class RoiKind { Foreground, Background, Ignored };

struct RoiLabel {
    RoiKind kind = RoiKind::Ignored;
    std::optional<std::size_t> matched_gt;  // set iff Foreground
    double max_iou = 0.0;
};

// The label partition as a pure function of the max-IoU value:
//   Foreground  max_iou >= th_fg
//   Background  th_bg_low <= max_iou < th_fg
//   Ignored     max_iou < th_bg_low
// An IoU exactly at th_fg is Foreground (the background interval is half-open).
RoiKind classify_overlap(double max_iou_value, const SamplerConfig& cfg);

RoiLabel label_roi(const Box& roi, const std::vector<Box>& gts, const SamplerConfig& cfg);

struct RoiCandidate {
    std::string image_id;
    Box box;
    RoiLabel label;
};

// One entry of the hard-negative pool fed back into sampling. Pool entries
// bypass the label filter entirely: they were mined from detector output.
struct PoolEntry {
    std::string image_id;
    Box box;
};

struct MiniBatch {
    struct FgEntry {
        std::string image_id;
        Box box;
        std::size_t matched_gt = 0;
    };
    struct BgEntry {
        std::string image_id;
        Box box;
        bool is_hard = false;  // true iff the entry came from the hard pool
    };
    std::vector<FgEntry> fg;
    std::vector<BgEntry> bg;
};

class NoForegroundError : public std::runtime_error {
public:
    NoForegroundError() : std::runtime_error("no foreground candidates available") {}
};

// Assembles one ratio-balanced mini-batch:
//   fg slots = min(available fg, ceil(batch_size / (1 + bg_fg_ratio)))
//   bg quota = min(available bg incl. pool, round(bg_fg_ratio * |fg|))
// Background slots are filled from hard_pool first (seeded order, without
// replacement), the remainder from ordinary Background candidates. Ignored
// candidates never appear. Deterministic for a fixed seed. Throws
// NoForegroundError when no Foreground candidate exists.
MiniBatch sample_minibatch(const std::vector<RoiCandidate>& candidates,
                           const std::vector<PoolEntry>& hard_pool, const SamplerConfig& cfg,
                           std::uint64_t seed);

}  // namespace hardmine
