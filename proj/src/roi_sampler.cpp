#include "hardmine/roi_sampler.hpp"

#include "hardmine/detail/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hardmine {

void validate(const SamplerConfig& cfg) {
    if (!(cfg.th_fg > 0.0 && cfg.th_fg <= 1.0))
        throw std::invalid_argument("SamplerConfig: th_fg must be in (0, 1]");
    if (!(cfg.th_bg_low >= 0.0 && cfg.th_bg_low < 1.0))
        throw std::invalid_argument("SamplerConfig: th_bg_low must be in [0, 1)");
    if (!(cfg.th_bg_low < cfg.th_fg))
        throw std::invalid_argument("SamplerConfig: th_bg_low must be below th_fg");
    if (!(cfg.bg_fg_ratio > 0.0))
        throw std::invalid_argument("SamplerConfig: bg_fg_ratio must be positive");
    if (cfg.batch_size < 4)
        throw std::invalid_argument("SamplerConfig: batch_size must be at least 4");
}

RoiKind classify_overlap(double max_iou_value, const SamplerConfig& cfg) {
    if (max_iou_value >= cfg.th_fg) return RoiKind::Foreground;
    if (max_iou_value >= cfg.th_bg_low) return RoiKind::Background;
    return RoiKind::Ignored;
}

RoiLabel label_roi(const Box& roi, const std::vector<Box>& gts, const SamplerConfig& cfg) {
    validate(cfg);
    const auto [best, best_idx] = max_iou(roi, gts);
    RoiLabel label;
    label.max_iou = best;
    label.kind = classify_overlap(best, cfg);
    if (label.kind == RoiKind::Foreground) label.matched_gt = best_idx;
    return label;
}

namespace {

std::size_t fg_quota(const SamplerConfig& cfg, std::size_t available) {
    // ceiling so a batch always holds at least one fg slot
    const auto quota = static_cast<std::size_t>(
        std::ceil(static_cast<double>(cfg.batch_size) / (1.0 + cfg.bg_fg_ratio)));
    return std::min(available, quota);
}

std::size_t bg_quota(const SamplerConfig& cfg, std::size_t fg_count, std::size_t available) {
    const auto quota =
        static_cast<std::size_t>(std::llround(cfg.bg_fg_ratio * static_cast<double>(fg_count)));
    return std::min(available, quota);
}

}  // namespace

MiniBatch sample_minibatch(const std::vector<RoiCandidate>& candidates,
                           const std::vector<PoolEntry>& hard_pool, const SamplerConfig& cfg,
                           std::uint64_t seed) {
    validate(cfg);

    std::vector<std::size_t> fg_idx;
    std::vector<std::size_t> bg_idx;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        switch (candidates[i].label.kind) {
            case RoiKind::Foreground: fg_idx.push_back(i); break;
            case RoiKind::Background: bg_idx.push_back(i); break;
            case RoiKind::Ignored: break;
        }
    }
    if (fg_idx.empty()) throw NoForegroundError();

    detail::SplitMix64 rng(seed);
    MiniBatch batch;

    const auto fg_take = fg_quota(cfg, fg_idx.size());
    for (const std::size_t pos : detail::sample_without_replacement(fg_idx.size(), fg_take, rng)) {
        const auto& c = candidates[fg_idx[pos]];
        batch.fg.push_back({c.image_id, c.box, *c.label.matched_gt});
    }

    if (!cfg.per_image_ratio) {
        const auto quota = bg_quota(cfg, batch.fg.size(), hard_pool.size() + bg_idx.size());
        const auto hard_take = std::min(hard_pool.size(), quota);
        for (const std::size_t pos :
             detail::sample_without_replacement(hard_pool.size(), hard_take, rng)) {
            batch.bg.push_back({hard_pool[pos].image_id, hard_pool[pos].box, true});
        }
        const auto rest = quota - hard_take;
        for (const std::size_t pos : detail::sample_without_replacement(bg_idx.size(), rest, rng)) {
            const auto& c = candidates[bg_idx[pos]];
            batch.bg.push_back({c.image_id, c.box, false});
        }
        return batch;
    }

    // per-image mode: the ratio binds within every image that contributed fg
    std::map<std::string, std::size_t> fg_per_image;
    for (const auto& e : batch.fg) ++fg_per_image[e.image_id];
    std::map<std::string, std::vector<std::size_t>> pool_by_image;
    for (std::size_t i = 0; i < hard_pool.size(); ++i)
        pool_by_image[hard_pool[i].image_id].push_back(i);
    std::map<std::string, std::vector<std::size_t>> bg_by_image;
    for (const std::size_t i : bg_idx) bg_by_image[candidates[i].image_id].push_back(i);

    for (const auto& [image_id, fg_count] : fg_per_image) {
        const auto pool_it = pool_by_image.find(image_id);
        const auto bg_it = bg_by_image.find(image_id);
        const std::size_t pool_n = pool_it == pool_by_image.end() ? 0 : pool_it->second.size();
        const std::size_t bg_n = bg_it == bg_by_image.end() ? 0 : bg_it->second.size();
        const auto quota = bg_quota(cfg, fg_count, pool_n + bg_n);
        const auto hard_take = std::min(pool_n, quota);
        for (const std::size_t pos : detail::sample_without_replacement(pool_n, hard_take, rng)) {
            const auto& p = hard_pool[pool_it->second[pos]];
            batch.bg.push_back({p.image_id, p.box, true});
        }
        const auto rest = quota - hard_take;
        for (const std::size_t pos : detail::sample_without_replacement(bg_n, rest, rng)) {
            const auto& c = candidates[bg_it->second[pos]];
            batch.bg.push_back({c.image_id, c.box, false});
        }
    }
    return batch;
}

}  // namespace hardmine
