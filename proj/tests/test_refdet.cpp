#include "hardmine/refdet.hpp"
#include "hardmine/annotations.hpp"
#include "hardmine/detail/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace hardmine;
using namespace hardmine::refdet;

namespace {

SceneConfig small_scene_config() {
    SceneConfig cfg;
    cfg.width = 120;
    cfg.height = 120;
    cfg.min_faces = 1;
    cfg.max_faces = 2;
    cfg.min_distractors = 1;
    cfg.max_distractors = 2;
    return cfg;
}

}  // namespace

TEST_CASE("generate_scene: determinism, bounds, and shape separation") {
    const auto cfg = small_scene_config();
    const auto a = generate_scene(42, cfg);
    const auto b = generate_scene(42, cfg);
    CHECK(a.pixels == b.pixels);  // bit identical
    CHECK(a.faces.size() == b.faces.size());

    const auto c = generate_scene(43, cfg);
    CHECK(a.pixels != c.pixels);

    for (const auto& p : a.pixels) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    std::vector<Box> bbs;
    for (const auto& f : a.faces) bbs.push_back(ellipse_bounding_box(f));
    for (const auto& d : a.distractors) bbs.push_back(ellipse_bounding_box(d));
    for (std::size_t i = 0; i < bbs.size(); ++i) {
        CHECK(bbs[i].x_min >= 0.0);
        CHECK(bbs[i].y_min >= 0.0);
        CHECK(bbs[i].x_max <= cfg.width);
        CHECK(bbs[i].y_max <= cfg.height);
        for (std::size_t j = i + 1; j < bbs.size(); ++j) CHECK(iou(bbs[i], bbs[j]) < 0.1);
    }
}

TEST_CASE("generate_scene: empty config gives pure noise, crowded config fails") {
    SceneConfig cfg = small_scene_config();
    cfg.min_faces = cfg.max_faces = 0;
    cfg.min_distractors = cfg.max_distractors = 0;
    const auto scene = generate_scene(7, cfg);
    CHECK(scene.faces.empty());
    CHECK(scene.distractors.empty());

    SceneConfig exact = small_scene_config();
    exact.min_faces = exact.max_faces = 3;
    const auto three = generate_scene(9, exact);
    CHECK(three.faces.size() == 3);

    SceneConfig crowded = small_scene_config();
    crowded.width = crowded.height = 40;
    crowded.min_faces = crowded.max_faces = 12;
    CHECK_THROWS_AS(generate_scene(1, crowded), PlacementError);
}

TEST_CASE("propose: grid arithmetic and clipping") {
    SyntheticScene scene;
    scene.width = 100;
    scene.height = 100;

    ProposalConfig single;
    single.window_sizes = {50.0};
    single.stride_fraction = 0.5;  // stride 25
    const auto boxes = propose(scene, single);
    REQUIRE(boxes.size() == 9);
    CHECK(boxes[0].x_min == 0.0);
    CHECK(boxes[1].x_min == 25.0);
    CHECK(boxes[2].x_min == 50.0);
    CHECK(boxes[2].x_max == 100.0);
    for (const auto& b : boxes) {
        CHECK(b.x_max <= 100.0);
        CHECK(b.y_max <= 100.0);
    }

    ProposalConfig oversized;
    oversized.window_sizes = {150.0};
    const auto clipped = propose(scene, oversized);
    REQUIRE(clipped.size() == 1);
    CHECK(clipped[0].x_min == 0.0);
    CHECK(clipped[0].x_max == 100.0);
    CHECK(clipped[0].y_max == 100.0);

    ProposalConfig both;
    both.window_sizes = {50.0, 150.0};
    both.stride_fraction = 0.5;
    CHECK(propose(scene, both).size() == 10);  // concatenation of the grids
}

TEST_CASE("extract_features: constant region and error paths") {
    SyntheticScene scene;
    scene.width = 20;
    scene.height = 20;
    scene.pixels.assign(400, 0.5);

    FeatureConfig cfg;
    const auto f = extract_features(scene, Box(2, 2, 14, 14), cfg);
    REQUIRE(static_cast<int>(f.size()) == cfg.length());
    for (int i = 0; i < cfg.grid_bins * cfg.grid_bins; ++i) CHECK(f[static_cast<std::size_t>(i)] == 0.5);
    // histogram one-hot at 0.5's bucket (bucket 4 of 8)
    for (int b = 0; b < cfg.histogram_bins; ++b)
        CHECK(f[static_cast<std::size_t>(cfg.grid_bins * cfg.grid_bins + b)] == (b == 4 ? 1.0 : 0.0));

    const auto again = extract_features(scene, Box(2, 2, 14, 14), cfg);
    CHECK(f == again);

    CHECK_THROWS_AS(extract_features(scene, Box(25, 25, 30, 30), cfg), std::invalid_argument);
    CHECK_THROWS_AS(extract_features(scene, Box(5, 5, 5, 5), cfg), std::invalid_argument);
}

TEST_CASE("logistic gradient matches central finite differences") {
    detail::SplitMix64 rng(1234);
    const int dim = 6;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<FeatureVector> data;
        std::vector<const FeatureVector*> xs;
        std::vector<int> ys;
        const int n = 3 + static_cast<int>(rng.next_below(6));
        for (int i = 0; i < n; ++i) {
            FeatureVector x(dim);
            for (auto& v : x) v = rng.next_uniform(-1, 1);
            data.push_back(std::move(x));
            ys.push_back(static_cast<int>(rng.next_below(2)));
        }
        for (const auto& x : data) xs.push_back(&x);

        std::vector<double> w(dim);
        for (auto& v : w) v = rng.next_uniform(-2, 2);
        const double b = rng.next_uniform(-2, 2);

        std::vector<double> grad;
        double grad_b = 0.0;
        logistic_loss_gradient(w, b, xs, ys, grad, grad_b);

        const double h = 1e-6;
        std::vector<double> dummy;
        double dummy_b = 0.0;
        for (int j = 0; j <= dim; ++j) {
            auto wp = w, wm = w;
            double bp = b, bm = b;
            if (j < dim) {
                wp[static_cast<std::size_t>(j)] += h;
                wm[static_cast<std::size_t>(j)] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            const double lp = logistic_loss_gradient(wp, bp, xs, ys, dummy, dummy_b);
            const double lm = logistic_loss_gradient(wm, bm, xs, ys, dummy, dummy_b);
            const double fd = (lp - lm) / (2 * h);
            const double an = j < dim ? grad[static_cast<std::size_t>(j)] : grad_b;
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
            CHECK(std::fabs(fd - an) / denom < 1e-5);
        }
    }
}

TEST_CASE("nms: suppression rule and identity on disjoint boxes") {
    // overlapping pair IoU 0.8+: only the stronger survives
    std::vector<Detection> pair = {{Box(0, 0, 10, 10), 0.85}, {Box(0, 0, 10, 11), 0.9}};
    const auto kept = nms(pair, 0.3);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    std::vector<Detection> apart = {{Box(0, 0, 10, 10), 0.6}, {Box(50, 50, 60, 60), 0.9}};
    const auto all = nms(apart, 0.3);
    REQUIRE(all.size() == 2);
    CHECK(all[0].score == 0.9);  // sorted by descending score

    // postcondition: no surviving pair overlaps at or above the threshold
    detail::SplitMix64 rng(55);
    std::vector<Detection> crowd;
    for (int i = 0; i < 60; ++i) {
        const double x = rng.next_uniform(0, 80);
        const double y = rng.next_uniform(0, 80);
        crowd.push_back({Box(x, y, x + 20, y + 20), rng.next_uniform(0, 1)});
    }
    const auto survivors = nms(crowd, 0.3);
    for (std::size_t i = 0; i < survivors.size(); ++i)
        for (std::size_t j = i + 1; j < survivors.size(); ++j)
            CHECK(iou(survivors[i].box, survivors[j].box) < 0.3);
}

TEST_CASE("detect: constant-low scorer yields nothing; scores stay in (0,1)") {
    const auto scene = generate_scene(3, small_scene_config());

    LinearScorer mute;
    mute.weights.assign(static_cast<std::size_t>(FeatureConfig{}.length()), 0.0);
    mute.bias = -10.0;
    DetectConfig cfg;
    CHECK(detect(scene, mute, cfg).empty());

    LinearScorer loud = mute;
    loud.bias = 3.0;
    cfg.score_threshold = 0.5;
    const auto dets = detect(scene, loud, cfg);
    CHECK(!dets.empty());
    for (const auto& d : dets) {
        CHECK(d.score > 0.0);
        CHECK(d.score < 1.0);
    }
    for (std::size_t i = 1; i < dets.size(); ++i) CHECK(dets[i - 1].score >= dets[i].score);
}

TEST_CASE("train: separable toy set reaches high accuracy and is deterministic") {
    // one scene with clear faces; candidates are linearly separable in the
    // pooled/histogram feature space
    SceneConfig cfg = small_scene_config();
    cfg.noise = 0.02;
    const auto scene = generate_scene(17, cfg);
    const std::vector<TrainScene> scenes = {{"scene_a", &scene}};

    SamplerConfig sampler;
    // a converged logistic fit separates this candidate set perfectly, so the
    // SGD route must clear 0.95 given an adequate budget
    SgdConfig sgd;
    sgd.lr_phase1 = 0.1;
    sgd.iters_phase1 = 10000;
    sgd.lr_phase2 = 0.01;
    sgd.iters_phase2 = 2000;
    const FeatureConfig feat;
    const ProposalConfig prop;

    std::vector<double> losses;
    const auto scorer = train(scenes, sampler, sgd, feat, prop, {}, 99, &losses);
    REQUIRE(losses.size() == 2);
    CHECK(losses[0] > losses[1]);  // the schedule's second phase refines

    const auto scorer2 = train(scenes, sampler, sgd, feat, prop, {}, 99);
    CHECK(scorer.weights == scorer2.weights);
    CHECK(scorer.bias == scorer2.bias);

    // gather the labeled candidate set once
    std::vector<Box> gts;
    for (const auto& f : scene.faces) gts.push_back(ellipse_bounding_box(f));
    std::vector<FeatureVector> xs_data;
    std::vector<int> ys;
    for (const Box& p : propose(scene, prop)) {
        const auto label = label_roi(p, gts, sampler);
        if (label.kind == RoiKind::Ignored) continue;
        xs_data.push_back(extract_features(scene, p, feat));
        ys.push_back(label.kind == RoiKind::Foreground ? 1 : 0);
    }
    REQUIRE(!xs_data.empty());

    const auto accuracy = [&](const LinearScorer& s) {
        int correct = 0;
        for (std::size_t i = 0; i < xs_data.size(); ++i)
            correct += (s.score(xs_data[i]) >= 0.5) == (ys[i] == 1) ? 1 : 0;
        return static_cast<double>(correct) / static_cast<double>(xs_data.size());
    };

    // independent oracle: a full-batch fit run to convergence separates this
    // candidate set perfectly, which is what entitles the SGD route to 0.95
    LinearScorer reference;
    reference.weights.assign(static_cast<std::size_t>(feat.length()), 0.0);
    {
        std::vector<const FeatureVector*> xs;
        for (const auto& x : xs_data) xs.push_back(&x);
        std::vector<double> grad;
        double grad_b = 0.0;
        for (int it = 0; it < 50000; ++it) {
            logistic_loss_gradient(reference.weights, reference.bias, xs, ys, grad, grad_b);
            for (std::size_t j = 0; j < reference.weights.size(); ++j)
                reference.weights[j] -= 2.0 * grad[j];
            reference.bias -= 2.0 * grad_b;
        }
    }
    CHECK(accuracy(reference) == 1.0);
    CHECK(accuracy(scorer) >= 0.95);
}

TEST_CASE("train: hard pool entries are injected into every batch") {
    SceneConfig cfg = small_scene_config();
    const auto scene = generate_scene(23, cfg);
    const std::vector<TrainScene> scenes = {{"scene_a", &scene}};

    // pool drawn from distractor windows of the same scene
    std::vector<PoolEntry> pool;
    for (const auto& d : scene.distractors) {
        const Box bb = ellipse_bounding_box(d);
        pool.push_back({"scene_a", Box(bb.x_min, bb.y_min, bb.x_max, bb.y_max)});
    }
    REQUIRE(!pool.empty());

    SamplerConfig sampler;
    SgdConfig sgd;
    sgd.iters_phase1 = 50;
    sgd.iters_phase2 = 0;
    // pool of this size always fits the bg quota, so sample_minibatch must
    // include every entry; train() would throw on a feature-cache miss if the
    // pool boxes were not flowing through intact
    CHECK_NOTHROW(train(scenes, sampler, sgd, FeatureConfig{}, ProposalConfig{}, pool, 5));

    PoolEntry bogus{"missing_scene", Box(0, 0, 10, 10)};
    CHECK_THROWS_AS(train(scenes, sampler, sgd, FeatureConfig{}, ProposalConfig{}, {bogus}, 5),
                    std::invalid_argument);
}

TEST_CASE("train: no-foreground training set is an error") {
    SceneConfig cfg = small_scene_config();
    cfg.min_faces = cfg.max_faces = 0;
    const auto scene = generate_scene(2, cfg);
    const std::vector<TrainScene> scenes = {{"scene_a", &scene}};
    CHECK_THROWS_AS(train(scenes, SamplerConfig{}, SgdConfig{}, FeatureConfig{}, ProposalConfig{},
                          {}, 1),
                    std::runtime_error);
}

TEST_CASE("scene grid round trip") {
    const auto scene = generate_scene(5, small_scene_config());
    const auto text = write_scene_grid(scene);
    const auto parsed = parse_scene_grid(text);
    CHECK(parsed.width == scene.width);
    CHECK(parsed.height == scene.height);
    REQUIRE(parsed.pixels.size() == scene.pixels.size());
    for (std::size_t i = 0; i < parsed.pixels.size(); ++i)
        CHECK(std::fabs(parsed.pixels[i] - scene.pixels[i]) <= 5e-7);
    // the text form is a fixed point
    CHECK(write_scene_grid(parsed) == text);

    CHECK_THROWS_AS(parse_scene_grid(""), ParseError);
    CHECK_THROWS_AS(parse_scene_grid("2 2\n0.5 0.5 0.5\n"), ParseError);
    CHECK_THROWS_AS(parse_scene_grid("2 2\n0.5 0.5\n0.5 1.5\n"), ParseError);
}

TEST_CASE("scorer snapshot round trip is exact") {
    LinearScorer scorer;
    scorer.weights = {0.123456789012345, -2.5, 1e-17, 0.0};
    scorer.bias = -0.75000000000000011;
    scorer.meta.iterations = 7000;
    scorer.meta.schedule = {{1e-3, 5000}, {1e-4, 2000}};

    const auto text = write_scorer(scorer);
    const auto parsed = parse_scorer(text);
    CHECK(parsed.weights == scorer.weights);  // bit-exact via %.17g
    CHECK(parsed.bias == scorer.bias);
    CHECK(parsed.meta.iterations == 7000);
    REQUIRE(parsed.meta.schedule.size() == 2);
    CHECK(parsed.meta.schedule[0].learning_rate == 1e-3);
    CHECK(parsed.meta.schedule[1].iterations == 2000);
    CHECK(write_scorer(parsed) == text);

    CHECK_THROWS_AS(parse_scorer("features 2\nweights 1.0\nbias 0\niterations 0\n"), ParseError);
    CHECK_THROWS_AS(parse_scorer("bogus\n"), ParseError);
}
