#include "hardmine/miner.hpp"

#include "hardmine/detail/parallel.hpp"
#include "hardmine/detail/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace hardmine {

using detail::format_fixed;

std::vector<HardNegative> harvest(const DetectFn& detector, const std::vector<ImageRecord>& images,
                                  const HarvestConfig& cfg) {
    if (!detector) throw std::invalid_argument("harvest: no detector supplied");

    std::vector<std::vector<HardNegative>> per_image(images.size());
    detail::parallel_for(images.size(), cfg.workers, [&](std::size_t i) {
        const ImageRecord& image = images[i];
        const std::vector<Box> gts = face_boxes(image);
        std::vector<HardNegative> found;
        for (const Detection& det : detector(image)) {
            if (det.score < cfg.score_threshold) continue;
            const double overlap = max_iou(det.box, gts).first;
            if (overlap < cfg.iou_threshold)
                found.push_back({image.image_id, det.box, det.score, overlap});
        }
        std::stable_sort(found.begin(), found.end(), [](const HardNegative& a, const HardNegative& b) {
            return a.detector_score > b.detector_score;
        });
        per_image[i] = std::move(found);
    });

    // merge in image_id order so the result is independent of scheduling
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return images[a].image_id < images[b].image_id;
    });
    std::vector<HardNegative> out;
    for (const std::size_t i : order)
        out.insert(out.end(), per_image[i].begin(), per_image[i].end());
    return out;
}

namespace {

constexpr double kDedupTolerance = 1e-6;

bool same_region(const Box& a, const Box& b) {
    return std::fabs(a.x_min - b.x_min) <= kDedupTolerance &&
           std::fabs(a.y_min - b.y_min) <= kDedupTolerance &&
           std::fabs(a.x_max - b.x_max) <= kDedupTolerance &&
           std::fabs(a.y_max - b.y_max) <= kDedupTolerance;
}

}  // namespace

std::size_t merge_into_pool(std::vector<HardNegative>& pool,
                            const std::vector<HardNegative>& found) {
    std::map<std::string, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < pool.size(); ++i) by_image[pool[i].image_id].push_back(i);

    std::size_t added = 0;
    for (const auto& hn : found) {
        auto& slots = by_image[hn.image_id];
        const bool dup = std::any_of(slots.begin(), slots.end(), [&](std::size_t i) {
            return same_region(pool[i].region, hn.region);
        });
        if (dup) continue;
        slots.push_back(pool.size());
        pool.push_back(hn);
        ++added;
    }
    return added;
}

std::string write_pool_file(const std::vector<HardNegative>& pool) {
    std::string out;
    for (const auto& hn : pool) {
        out += hn.image_id + " " + format_fixed(hn.region.x_min) + " " +
               format_fixed(hn.region.y_min) + " " + format_fixed(hn.region.x_max) + " " +
               format_fixed(hn.region.y_max) + " " + format_fixed(hn.detector_score) + " " +
               format_fixed(hn.max_iou) + "\n";
    }
    return out;
}

std::vector<HardNegative> parse_pool_file(const std::string& content) {
    detail::LineReader reader(content);
    std::vector<HardNegative> out;
    std::string line;
    while (reader.next(line)) {
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_ws(line);
        if (fields.size() != 7)
            throw ParseError(reader.line_number(),
                             "expected 'image_id x_min y_min x_max y_max score max_iou'");
        double v[6];
        for (int i = 0; i < 6; ++i)
            if (!detail::to_double(fields[static_cast<std::size_t>(i) + 1], v[i]))
                throw ParseError(reader.line_number(), "non-numeric pool field");
        try {
            out.push_back({fields[0], Box(v[0], v[1], v[2], v[3]), v[4], v[5]});
        } catch (const std::invalid_argument& e) {
            throw ParseError(reader.line_number(), e.what());
        }
    }
    return out;
}

std::vector<PoolEntry> pool_entries(const std::vector<HardNegative>& pool) {
    std::vector<PoolEntry> out;
    out.reserve(pool.size());
    for (const auto& hn : pool) out.push_back({hn.image_id, hn.region});
    return out;
}

BootstrapResult bootstrap(const BootstrapHooks& hooks, const std::vector<Fold>& dataset,
                          int rounds, const HarvestConfig& harvest_cfg,
                          const SamplerConfig& sampler_cfg) {
    if (rounds < 1) throw std::invalid_argument("bootstrap: rounds must be at least 1");
    if (!hooks.train || !hooks.open_detector)
        throw std::invalid_argument("bootstrap: train and open_detector hooks are required");

    std::vector<ImageRecord> images;
    for (const auto& fold : dataset)
        images.insert(images.end(), fold.records.begin(), fold.records.end());

    BootstrapResult result;
    std::vector<HardNegative> pool;
    for (int round = 1; round <= rounds; ++round) {
        std::size_t found_count = 0;
        if (round >= 2) {
            const DetectFn det = hooks.open_detector(result.reports.back().detector_snapshot_id);
            const auto found = harvest(det, images, harvest_cfg);
            found_count = found.size();
            merge_into_pool(pool, found);
        }

        std::string snapshot_id;
        try {
            snapshot_id = hooks.train(round, pool, sampler_cfg);
        } catch (const std::exception& e) {
            result.aborted = true;
            result.error = e.what();
            return result;
        }

        RoundReport report;
        report.round_index = round;
        report.hard_negatives_found = found_count;
        report.detector_snapshot_id = snapshot_id;
        if (hooks.evaluate) report.eval_summary = hooks.evaluate(round, snapshot_id);
        result.reports.push_back(std::move(report));
        result.final_snapshot_id = snapshot_id;
    }
    return result;
}

}  // namespace hardmine
