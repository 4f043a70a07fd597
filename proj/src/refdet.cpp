#include "hardmine/refdet.hpp"

#include "hardmine/annotations.hpp"
#include "hardmine/detail/random.hpp"
#include "hardmine/detail/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace hardmine::refdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const SceneConfig& cfg) {
    if (cfg.width <= 0 || cfg.height <= 0)
        throw std::invalid_argument("SceneConfig: dimensions must be positive");
    if (cfg.min_faces < 0 || cfg.max_faces < cfg.min_faces)
        throw std::invalid_argument("SceneConfig: bad face count range");
    if (cfg.min_distractors < 0 || cfg.max_distractors < cfg.min_distractors)
        throw std::invalid_argument("SceneConfig: bad distractor count range");
    if (cfg.noise < 0.0) throw std::invalid_argument("SceneConfig: negative noise");
    if (!(cfg.face_radius_min > 0.0) || cfg.face_radius_max < cfg.face_radius_min ||
        !(cfg.distractor_radius_min > 0.0) || cfg.distractor_radius_max < cfg.distractor_radius_min)
        throw std::invalid_argument("SceneConfig: bad radius range");
    if (!(cfg.axis_ratio_min > 0.0) || cfg.axis_ratio_max > 1.0 ||
        cfg.axis_ratio_max < cfg.axis_ratio_min)
        throw std::invalid_argument("SceneConfig: bad axis ratio range");
    if (!(cfg.core_fraction > 0.0 && cfg.core_fraction < 1.0))
        throw std::invalid_argument("SceneConfig: core_fraction must be in (0, 1)");
}

// Shapes reject each other at bounding-box IoU >= 0.1 so every distractor
// stays a clean isolated negative.
constexpr double kMaxShapePairIou = 0.1;

Ellipse place_shape(detail::SplitMix64& rng, const SceneConfig& cfg, double radius_min,
                    double radius_max, std::vector<Box>& placed) {
    for (int attempt = 0; attempt < cfg.max_placement_retries; ++attempt) {
        const double ra = rng.next_uniform(radius_min, radius_max);
        const double rb = ra * rng.next_uniform(cfg.axis_ratio_min, cfg.axis_ratio_max);
        const double theta = rng.next_uniform(-kPi / 2.0, kPi / 2.0);
        const Ellipse probe(0.0, 0.0, ra, rb, theta);
        const Box pb = ellipse_bounding_box(probe);
        const double hx = pb.x_max;
        const double hy = pb.y_max;
        if (2.0 * hx >= cfg.width || 2.0 * hy >= cfg.height) continue;
        const double cx = rng.next_uniform(hx, cfg.width - hx);
        const double cy = rng.next_uniform(hy, cfg.height - hy);
        const Ellipse e(cx, cy, ra, rb, theta);
        const Box bb = ellipse_bounding_box(e);
        const bool clear = std::all_of(placed.begin(), placed.end(), [&](const Box& other) {
            return iou(bb, other) < kMaxShapePairIou;
        });
        if (clear) {
            placed.push_back(bb);
            return e;
        }
    }
    throw PlacementError("generate_scene: could not place a shape without overlap");
}

void render_ellipse(SyntheticScene& scene, const Ellipse& e, double tone) {
    const Box bb = ellipse_bounding_box(e);
    const int x0 = std::max(0, static_cast<int>(std::floor(bb.x_min)));
    const int y0 = std::max(0, static_cast<int>(std::floor(bb.y_min)));
    const int x1 = std::min(scene.width, static_cast<int>(std::ceil(bb.x_max)));
    const int y1 = std::min(scene.height, static_cast<int>(std::ceil(bb.y_max)));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            if (e.contains(x + 0.5, y + 0.5))
                scene.pixels[static_cast<std::size_t>(y) * scene.width + x] = tone;
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
    validate(cfg);
    detail::SplitMix64 rng(seed);

    SyntheticScene scene;
    scene.width = cfg.width;
    scene.height = cfg.height;
    scene.pixels.assign(static_cast<std::size_t>(cfg.width) * cfg.height, cfg.background_tone);

    const int n_faces =
        cfg.min_faces + static_cast<int>(rng.next_below(cfg.max_faces - cfg.min_faces + 1));
    const int n_distractors = cfg.min_distractors +
                              static_cast<int>(rng.next_below(
                                  cfg.max_distractors - cfg.min_distractors + 1));

    std::vector<Box> placed;
    for (int i = 0; i < n_faces; ++i)
        scene.faces.push_back(
            place_shape(rng, cfg, cfg.face_radius_min, cfg.face_radius_max, placed));
    for (int i = 0; i < n_distractors; ++i)
        scene.distractors.push_back(
            place_shape(rng, cfg, cfg.distractor_radius_min, cfg.distractor_radius_max, placed));

    for (const auto& f : scene.faces) {
        render_ellipse(scene, f, cfg.face_ring_tone);
        const Ellipse core(f.center_x, f.center_y, f.major_radius * cfg.core_fraction,
                           f.minor_radius * cfg.core_fraction, f.angle);
        render_ellipse(scene, core, cfg.face_core_tone);
    }
    for (const auto& d : scene.distractors) render_ellipse(scene, d, cfg.distractor_tone);

    for (auto& p : scene.pixels) {
        p += rng.next_uniform(-cfg.noise, cfg.noise);
        p = std::clamp(p, 0.0, 1.0);
    }
    return scene;
}

std::vector<Box> propose(const SyntheticScene& scene, const ProposalConfig& cfg) {
    if (cfg.window_sizes.empty())
        throw std::invalid_argument("ProposalConfig: no window sizes");
    if (!(cfg.stride_fraction > 0.0))
        throw std::invalid_argument("ProposalConfig: stride_fraction must be positive");

    const double w = scene.width;
    const double h = scene.height;
    std::vector<Box> out;
    for (const double win : cfg.window_sizes) {
        if (!(win > 0.0)) throw std::invalid_argument("ProposalConfig: window size must be positive");
        const double stride = win * cfg.stride_fraction;
        const auto positions = [&](double extent) {
            std::vector<double> xs;
            if (win >= extent) {
                xs.push_back(0.0);  // clipped single placement
            } else {
                const int n = static_cast<int>(std::floor((extent - win) / stride + 1e-9)) + 1;
                xs.reserve(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) xs.push_back(i * stride);
            }
            return xs;
        };
        for (const double y : positions(h))
            for (const double x : positions(w))
                out.emplace_back(x, y, std::min(x + win, w), std::min(y + win, h));
    }
    return out;
}

FeatureVector extract_features(const SyntheticScene& scene, const Box& region,
                               const FeatureConfig& cfg) {
    if (cfg.grid_bins < 1 || cfg.histogram_bins < 1)
        throw std::invalid_argument("FeatureConfig: bins must be positive");

    const double cx0 = std::max(region.x_min, 0.0);
    const double cy0 = std::max(region.y_min, 0.0);
    const double cx1 = std::min(region.x_max, static_cast<double>(scene.width));
    const double cy1 = std::min(region.y_max, static_cast<double>(scene.height));
    if (!(cx1 > cx0) || !(cy1 > cy0))
        throw std::invalid_argument("extract_features: degenerate region");

    // pixel rows/cols covered by a real-coordinate span; never empty
    const auto pixel_span = [](double lo, double hi, int limit) {
        int a = static_cast<int>(std::floor(lo));
        int b = static_cast<int>(std::ceil(hi));
        a = std::clamp(a, 0, limit - 1);
        b = std::clamp(b, a + 1, limit);
        return std::pair<int, int>(a, b);
    };

    FeatureVector out;
    out.reserve(static_cast<std::size_t>(cfg.length()));

    const double cell_w = (cx1 - cx0) / cfg.grid_bins;
    const double cell_h = (cy1 - cy0) / cfg.grid_bins;
    for (int gy = 0; gy < cfg.grid_bins; ++gy) {
        const auto [py0, py1] = pixel_span(cy0 + gy * cell_h, cy0 + (gy + 1) * cell_h, scene.height);
        for (int gx = 0; gx < cfg.grid_bins; ++gx) {
            const auto [px0, px1] =
                pixel_span(cx0 + gx * cell_w, cx0 + (gx + 1) * cell_w, scene.width);
            double sum = 0.0;
            for (int y = py0; y < py1; ++y)
                for (int x = px0; x < px1; ++x) sum += scene.at(x, y);
            out.push_back(sum / (static_cast<double>(py1 - py0) * (px1 - px0)));
        }
    }

    const auto [ry0, ry1] = pixel_span(cy0, cy1, scene.height);
    const auto [rx0, rx1] = pixel_span(cx0, cx1, scene.width);
    std::vector<double> hist(static_cast<std::size_t>(cfg.histogram_bins), 0.0);
    for (int y = ry0; y < ry1; ++y) {
        for (int x = rx0; x < rx1; ++x) {
            int b = static_cast<int>(scene.at(x, y) * cfg.histogram_bins);
            b = std::clamp(b, 0, cfg.histogram_bins - 1);
            hist[static_cast<std::size_t>(b)] += 1.0;
        }
    }
    const double total = static_cast<double>(ry1 - ry0) * (rx1 - rx0);
    for (double& v : hist) out.push_back(v / total);
    return out;
}

double LinearScorer::score(const FeatureVector& x) const {
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
    return 1.0 / (1.0 + std::exp(-z));
}

double logistic_loss_gradient(const std::vector<double>& weights, double bias,
                              const std::vector<const FeatureVector*>& xs,
                              const std::vector<int>& ys, std::vector<double>& grad_w,
                              double& grad_b) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("logistic_loss_gradient: bad batch");
    grad_w.assign(weights.size(), 0.0);
    grad_b = 0.0;
    double loss = 0.0;
    const auto softplus = [](double t) {
        return std::max(t, 0.0) + std::log1p(std::exp(-std::fabs(t)));
    };
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const FeatureVector& x = *xs[i];
        double z = bias;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
        loss += ys[i] ? softplus(-z) : softplus(z);
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double d = p - static_cast<double>(ys[i]);
        for (std::size_t j = 0; j < weights.size(); ++j) grad_w[j] += d * x[j];
        grad_b += d;
    }
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    for (double& g : grad_w) g *= inv_n;
    grad_b *= inv_n;
    return loss * inv_n;
}

namespace {

// (image_id, box) -> cached feature index; boxes flow through the sampler by
// value unchanged, so bit-exact keys are safe
using FeatureKey = std::tuple<std::string, double, double, double, double>;

FeatureKey key_of(const std::string& image_id, const Box& b) {
    return {image_id, b.x_min, b.y_min, b.x_max, b.y_max};
}

}  // namespace

LinearScorer train(const std::vector<TrainScene>& scenes, const SamplerConfig& sampler,
                   const SgdConfig& sgd, const FeatureConfig& features,
                   const ProposalConfig& proposals, const std::vector<PoolEntry>& hard_pool,
                   std::uint64_t seed, std::vector<double>* phase_mean_loss,
                   const LinearScorer* init) {
    validate(sampler);
    if (scenes.empty()) throw std::invalid_argument("train: no scenes");
    if (sgd.iters_phase1 < 0 || sgd.iters_phase2 < 0 || sgd.iters_phase1 + sgd.iters_phase2 <= 0)
        throw std::invalid_argument("train: bad iteration counts");

    std::map<std::string, const SyntheticScene*> scene_by_id;
    for (const auto& ts : scenes) {
        if (ts.scene == nullptr) throw std::invalid_argument("train: null scene");
        if (!scene_by_id.emplace(ts.image_id, ts.scene).second)
            throw std::invalid_argument("train: duplicate image id " + ts.image_id);
    }

    // fixed candidate set: proposals labeled against the face boxes, with
    // features extracted once up front
    std::vector<RoiCandidate> candidates;
    std::vector<FeatureVector> feats;
    std::map<FeatureKey, std::size_t> feat_index;
    bool any_fg = false;
    for (const auto& ts : scenes) {
        std::vector<Box> gts;
        gts.reserve(ts.scene->faces.size());
        for (const auto& f : ts.scene->faces) gts.push_back(ellipse_bounding_box(f));
        for (const Box& p : propose(*ts.scene, proposals)) {
            const RoiLabel label = label_roi(p, gts, sampler);
            if (label.kind == RoiKind::Ignored) continue;
            any_fg = any_fg || label.kind == RoiKind::Foreground;
            feat_index.emplace(key_of(ts.image_id, p), feats.size());
            feats.push_back(extract_features(*ts.scene, p, features));
            candidates.push_back({ts.image_id, p, label});
        }
    }
    if (!any_fg) throw std::runtime_error("train: training set contains no foreground RoIs");

    std::vector<FeatureVector> pool_feats;
    std::map<FeatureKey, std::size_t> pool_index;
    pool_feats.reserve(hard_pool.size());
    for (const auto& entry : hard_pool) {
        const auto it = scene_by_id.find(entry.image_id);
        if (it == scene_by_id.end())
            throw std::invalid_argument("train: hard pool references unknown image " +
                                        entry.image_id);
        pool_index.emplace(key_of(entry.image_id, entry.box), pool_feats.size());
        pool_feats.push_back(extract_features(*it->second, entry.box, features));
    }

    LinearScorer scorer;
    if (init != nullptr) {
        if (static_cast<int>(init->weights.size()) != features.length())
            throw std::invalid_argument("train: init scorer has wrong feature length");
        scorer.weights = init->weights;
        scorer.bias = init->bias;
    } else {
        scorer.weights.assign(static_cast<std::size_t>(features.length()), 0.0);
        scorer.bias = 0.0;
    }

    const long long total = sgd.iters_phase1 + sgd.iters_phase2;
    double phase_loss[2] = {0.0, 0.0};
    std::vector<const FeatureVector*> xs;
    std::vector<int> ys;
    std::vector<double> grad_w;
    double grad_b = 0.0;
    for (long long step = 0; step < total; ++step) {
        const bool phase2 = step >= sgd.iters_phase1;
        const double lr = phase2 ? sgd.lr_phase2 : sgd.lr_phase1;

        const MiniBatch batch =
            sample_minibatch(candidates, hard_pool, sampler, detail::mix_seed(seed, static_cast<std::uint64_t>(step)));
        xs.clear();
        ys.clear();
        for (const auto& e : batch.fg) {
            xs.push_back(&feats[feat_index.at(key_of(e.image_id, e.box))]);
            ys.push_back(1);
        }
        for (const auto& e : batch.bg) {
            if (e.is_hard)
                xs.push_back(&pool_feats[pool_index.at(key_of(e.image_id, e.box))]);
            else
                xs.push_back(&feats[feat_index.at(key_of(e.image_id, e.box))]);
            ys.push_back(0);
        }

        const double loss = logistic_loss_gradient(scorer.weights, scorer.bias, xs, ys, grad_w, grad_b);
        for (std::size_t j = 0; j < scorer.weights.size(); ++j) scorer.weights[j] -= lr * grad_w[j];
        scorer.bias -= lr * grad_b;
        phase_loss[phase2 ? 1 : 0] += loss;
    }

    scorer.meta.iterations = total;
    scorer.meta.schedule = {{sgd.lr_phase1, sgd.iters_phase1}, {sgd.lr_phase2, sgd.iters_phase2}};
    if (phase_mean_loss != nullptr) {
        phase_mean_loss->clear();
        if (sgd.iters_phase1 > 0)
            phase_mean_loss->push_back(phase_loss[0] / static_cast<double>(sgd.iters_phase1));
        if (sgd.iters_phase2 > 0)
            phase_mean_loss->push_back(phase_loss[1] / static_cast<double>(sgd.iters_phase2));
    }
    return scorer;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<char> suppressed(dets.size(), 0);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (suppressed[i]) continue;
        out.push_back(dets[i]);
        for (std::size_t j = i + 1; j < dets.size(); ++j) {
            if (!suppressed[j] && iou(dets[i].box, dets[j].box) >= iou_threshold) suppressed[j] = 1;
        }
    }
    return out;
}

std::vector<Detection> detect(const SyntheticScene& scene, const LinearScorer& scorer,
                              const DetectConfig& cfg) {
    std::vector<Detection> kept;
    for (const Box& p : propose(scene, cfg.proposals)) {
        const double s = scorer.score(extract_features(scene, p, cfg.features));
        if (s >= cfg.score_threshold) kept.push_back({p, s});
    }
    return nms(std::move(kept), cfg.nms_iou);
}

std::string write_scene_grid(const SyntheticScene& scene) {
    std::string out = std::to_string(scene.width) + " " + std::to_string(scene.height) + "\n";
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            if (x > 0) out += ' ';
            out += detail::format_fixed(scene.at(x, y));
        }
        out += '\n';
    }
    return out;
}

SyntheticScene parse_scene_grid(const std::string& content) {
    detail::LineReader reader(content);
    std::string line;
    if (!reader.next(line)) throw ParseError(1, "empty scene grid");
    const auto header = detail::split_ws(line);
    long long w = 0, h = 0;
    if (header.size() != 2 || !detail::to_int(header[0], w) || !detail::to_int(header[1], h) ||
        w <= 0 || h <= 0)
        throw ParseError(reader.line_number(), "expected 'width height' header");

    SyntheticScene scene;
    scene.width = static_cast<int>(w);
    scene.height = static_cast<int>(h);
    scene.pixels.reserve(static_cast<std::size_t>(w * h));
    while (reader.next(line)) {
        for (const auto& token : detail::split_ws(line)) {
            double v = 0.0;
            if (!detail::to_double(token, v) || v < 0.0 || v > 1.0)
                throw ParseError(reader.line_number(), "intensity outside [0, 1]");
            scene.pixels.push_back(v);
        }
    }
    if (scene.pixels.size() != static_cast<std::size_t>(w * h))
        throw ParseError(reader.line_number() + 1, "scene grid value count mismatch");
    return scene;
}

std::string write_scorer(const LinearScorer& scorer) {
    std::string out = "features " + std::to_string(scorer.weights.size()) + "\n";
    out += "weights";
    for (const double w : scorer.weights) out += " " + detail::format_full(w);
    out += "\nbias " + detail::format_full(scorer.bias) + "\n";
    out += "iterations " + std::to_string(scorer.meta.iterations) + "\n";
    for (const auto& phase : scorer.meta.schedule)
        out += "phase " + detail::format_full(phase.learning_rate) + " " +
               std::to_string(phase.iterations) + "\n";
    return out;
}

LinearScorer parse_scorer(const std::string& content) {
    detail::LineReader reader(content);
    std::string line;
    LinearScorer scorer;

    const auto expect = [&](const char* tag) {
        if (!reader.next(line)) throw ParseError(reader.line_number() + 1, "truncated snapshot");
        auto fields = detail::split_ws(line);
        if (fields.empty() || fields[0] != tag)
            throw ParseError(reader.line_number(), std::string("expected '") + tag + "' line");
        fields.erase(fields.begin());
        return fields;
    };

    const auto len_fields = expect("features");
    long long n = 0;
    if (len_fields.size() != 1 || !detail::to_int(len_fields[0], n) || n <= 0)
        throw ParseError(reader.line_number(), "bad feature length");

    const auto weight_fields = expect("weights");
    if (weight_fields.size() != static_cast<std::size_t>(n))
        throw ParseError(reader.line_number(), "weight count mismatch");
    for (const auto& tok : weight_fields) {
        double v = 0.0;
        if (!detail::to_double(tok, v)) throw ParseError(reader.line_number(), "bad weight");
        scorer.weights.push_back(v);
    }

    const auto bias_fields = expect("bias");
    if (bias_fields.size() != 1 || !detail::to_double(bias_fields[0], scorer.bias))
        throw ParseError(reader.line_number(), "bad bias");

    const auto iter_fields = expect("iterations");
    if (iter_fields.size() != 1 || !detail::to_int(iter_fields[0], scorer.meta.iterations))
        throw ParseError(reader.line_number(), "bad iteration count");

    while (reader.next(line)) {
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_ws(line);
        if (fields.size() != 3 || fields[0] != "phase")
            throw ParseError(reader.line_number(), "expected 'phase lr iterations'");
        LrPhase phase;
        if (!detail::to_double(fields[1], phase.learning_rate) ||
            !detail::to_int(fields[2], phase.iterations))
            throw ParseError(reader.line_number(), "bad phase line");
        scorer.meta.schedule.push_back(phase);
    }
    return scorer;
}

}  // namespace hardmine::refdet
