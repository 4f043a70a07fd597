#include "hardmine/pipeline.hpp"
#include "hardmine/detail/io.hpp"

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

using namespace hardmine;
namespace fs = std::filesystem;

namespace {

// self-cleaning scratch directory
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("hardmine_test_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

pipeline::GenOptions tiny_gen(std::uint64_t seed, int scenes = 8) {
    pipeline::GenOptions opt;
    opt.scenes = scenes;
    opt.folds = 4;
    opt.seed = seed;
    opt.scene.width = 96;
    opt.scene.height = 96;
    opt.scene.min_faces = 1;
    opt.scene.max_faces = 2;
    opt.scene.min_distractors = 1;
    opt.scene.max_distractors = 1;
    return opt;
}

pipeline::TrainOptions tiny_train(std::uint64_t seed) {
    pipeline::TrainOptions opt;
    opt.seed = seed;
    opt.sgd.iters_phase1 = 300;
    opt.sgd.iters_phase2 = 100;
    return opt;
}

std::string slurp(const fs::path& p) { return detail::read_file(p); }

}  // namespace

TEST_CASE("gen writes a complete, reloadable dataset and is idempotent") {
    TempDir dir("gen");
    const auto opt = tiny_gen(11);
    pipeline::run_gen(dir.path / "data", opt);

    CHECK(fs::exists(dir.path / "data/manifest.txt"));
    CHECK(fs::exists(dir.path / "data/annotations.txt"));
    for (int f = 1; f <= 4; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "fold_%02d.txt", f);
        CHECK(fs::exists(dir.path / "data/folds" / name));
    }
    std::size_t grids = 0;
    for (const auto& e : fs::directory_iterator(dir.path / "data/grids")) {
        CHECK(e.path().extension() == ".txt");
        ++grids;
    }
    CHECK(grids == 8);

    // rerun produces identical bytes
    const auto manifest_before = slurp(dir.path / "data/manifest.txt");
    const auto ann_before = slurp(dir.path / "data/annotations.txt");
    pipeline::run_gen(dir.path / "data", opt);
    CHECK(slurp(dir.path / "data/manifest.txt") == manifest_before);
    CHECK(slurp(dir.path / "data/annotations.txt") == ann_before);

    // no temp files linger
    for (const auto& e : fs::recursive_directory_iterator(dir.path))
        CHECK(e.path().extension() != ".tmp");

    const auto ds = pipeline::load_dataset(dir.path / "data", {}, true);
    CHECK(ds.folds.size() == 4);
    CHECK(ds.scenes.size() == 8);
    std::set<std::string> ids;
    std::size_t faces = 0;
    for (const auto& fold : ds.folds) {
        for (const auto& rec : fold.records) {
            CHECK(ids.insert(rec.image_id).second);
            faces += rec.faces.size();
            CHECK(ds.scenes.at(rec.image_id).faces.size() == rec.faces.size());
        }
    }
    CHECK(ids.size() == 8);
    CHECK(faces >= 8);

    // fold filtering
    const auto partial = pipeline::load_dataset(dir.path / "data", {1, 3}, false);
    CHECK(partial.folds.size() == 2);
    CHECK(partial.scenes.empty());
    CHECK_THROWS(pipeline::load_dataset(dir.path / "data", {9}, false));
}

TEST_CASE("gen rejects bad requests") {
    TempDir dir("genbad");
    auto opt = tiny_gen(1);
    opt.scenes = 0;
    CHECK_THROWS_AS(pipeline::run_gen(dir.path / "d", opt), std::invalid_argument);
    opt.scenes = 3;
    opt.folds = 10;
    CHECK_THROWS_AS(pipeline::run_gen(dir.path / "d", opt), std::invalid_argument);
}

TEST_CASE("train/harvest/eval stages connect through files") {
    TempDir dir("stages");
    pipeline::run_gen(dir.path / "data", tiny_gen(21));

    const auto outcome =
        pipeline::run_train(dir.path / "data", dir.path / "scorer.txt", tiny_train(5));
    CHECK(fs::exists(dir.path / "scorer.txt"));
    CHECK(outcome.pool_size == 0);
    REQUIRE(outcome.phase_mean_loss.size() == 2);

    pipeline::HarvestOptions harvest_opt;
    harvest_opt.harvest.score_threshold = 0.6;
    const auto found = pipeline::run_harvest(dir.path / "data", dir.path / "scorer.txt",
                                             dir.path / "pool.txt", harvest_opt);
    CHECK(fs::exists(dir.path / "pool.txt"));
    const auto pool = parse_pool_file(slurp(dir.path / "pool.txt"));
    CHECK(pool.size() == found);

    pipeline::EvalOptions eval_opt;
    eval_opt.overlap_resolution = 128;
    eval_opt.detect.score_threshold = 0.3;
    const auto eval = pipeline::run_eval_snapshot(dir.path / "data", dir.path / "scorer.txt",
                                                  dir.path / "eval", eval_opt);
    CHECK(fs::exists(dir.path / "eval/detections.txt"));
    CHECK(fs::exists(dir.path / "eval/discrete_roc.csv"));
    CHECK(fs::exists(dir.path / "eval/continuous_roc.csv"));
    CHECK(fs::exists(dir.path / "eval/summary.json"));
    CHECK(eval.matches.total_images == 8);

    // scoring the emitted detection file reproduces the same curves
    const auto again = pipeline::run_eval(dir.path / "data", dir.path / "eval/detections.txt",
                                          dir.path / "eval2", eval_opt);
    CHECK(slurp(dir.path / "eval/discrete_roc.csv") == slurp(dir.path / "eval2/discrete_roc.csv"));
    CHECK(slurp(dir.path / "eval/continuous_roc.csv") ==
          slurp(dir.path / "eval2/continuous_roc.csv"));
    CHECK(again.matches.entries.size() == eval.matches.entries.size());

    // retraining with the pool injected still converges to a snapshot
    auto with_pool = tiny_train(5);
    with_pool.hard_pool = dir.path / "pool.txt";
    const auto retrained =
        pipeline::run_train(dir.path / "data", dir.path / "scorer2.txt", with_pool);
    CHECK(retrained.pool_size == pool.size());
    CHECK(fs::exists(dir.path / "scorer2.txt"));
}

TEST_CASE("bootstrap rounds write artifacts and match staged runs") {
    TempDir dir("boot");
    pipeline::run_gen(dir.path / "data", tiny_gen(31));
    pipeline::run_gen(dir.path / "heldout", tiny_gen(32, 4));

    pipeline::BootstrapOptions opt;
    opt.rounds = 2;
    opt.train = tiny_train(9);
    opt.harvest.harvest.score_threshold = 0.6;
    opt.eval.overlap_resolution = 128;
    opt.eval.detect.score_threshold = 0.3;

    const auto outcome =
        pipeline::run_bootstrap(dir.path / "data", dir.path / "heldout", dir.path / "run", opt);
    CHECK(!outcome.result.aborted);
    REQUIRE(outcome.result.reports.size() == 2);
    CHECK(outcome.result.reports[0].hard_negatives_found == 0);
    CHECK(fs::exists(dir.path / "run/round_1/scorer.txt"));
    CHECK(fs::exists(dir.path / "run/round_2/scorer.txt"));
    CHECK(fs::exists(dir.path / "run/round_2/pool.txt"));
    CHECK(fs::exists(dir.path / "run/round_1/eval/summary.json"));
    CHECK(fs::exists(dir.path / "run/round_2/eval/detections.txt"));
    CHECK(fs::exists(dir.path / "run/round_reports.json"));

    // pipeline equivalence: bootstrap round 1 == train + eval run separately
    pipeline::run_train(dir.path / "data", dir.path / "scorer_solo.txt", tiny_train(9));
    CHECK(slurp(dir.path / "scorer_solo.txt") == slurp(dir.path / "run/round_1/scorer.txt"));
    pipeline::run_eval_snapshot(dir.path / "heldout", dir.path / "scorer_solo.txt",
                                dir.path / "eval_solo", opt.eval);
    CHECK(slurp(dir.path / "eval_solo/detections.txt") ==
          slurp(dir.path / "run/round_1/eval/detections.txt"));
    CHECK(slurp(dir.path / "eval_solo/discrete_roc.csv") ==
          slurp(dir.path / "run/round_1/eval/discrete_roc.csv"));

    // byte-identical rerun (fresh output directory)
    const auto rerun =
        pipeline::run_bootstrap(dir.path / "data", dir.path / "heldout", dir.path / "run2", opt);
    CHECK(!rerun.result.aborted);
    for (const char* rel :
         {"round_2/pool.txt", "round_1/eval/detections.txt", "round_2/eval/detections.txt",
          "round_1/eval/discrete_roc.csv", "round_2/eval/continuous_roc.csv",
          "round_reports.json"}) {
        CHECK(slurp(dir.path / "run" / rel) == slurp(dir.path / "run2" / rel));
    }
}

TEST_CASE("three rounds accumulate a monotone pool and resume fine-tunes") {
    TempDir dir("rounds3");
    pipeline::run_gen(dir.path / "data", tiny_gen(41));

    pipeline::BootstrapOptions opt;
    opt.rounds = 3;
    opt.train = tiny_train(13);
    opt.harvest.harvest.score_threshold = 0.6;
    opt.eval.overlap_resolution = 128;
    opt.eval.detect.score_threshold = 0.3;

    const auto out =
        pipeline::run_bootstrap(dir.path / "data", dir.path / "data", dir.path / "run", opt);
    CHECK(!out.result.aborted);
    REQUIRE(out.result.reports.size() == 3);

    // the round-3 pool contains every round-2 entry, in order, at its head
    // or interleaved; membership is what accumulation guarantees
    const auto pool2 = parse_pool_file(slurp(dir.path / "run/round_2/pool.txt"));
    const auto pool3 = parse_pool_file(slurp(dir.path / "run/round_3/pool.txt"));
    CHECK(pool3.size() >= pool2.size());
    for (const auto& hn : pool2) {
        const bool present = std::any_of(pool3.begin(), pool3.end(), [&](const HardNegative& p) {
            return p.image_id == hn.image_id &&
                   std::fabs(p.region.x_min - hn.region.x_min) <= 1e-6 &&
                   std::fabs(p.region.y_min - hn.region.y_min) <= 1e-6 &&
                   std::fabs(p.region.x_max - hn.region.x_max) <= 1e-6 &&
                   std::fabs(p.region.y_max - hn.region.y_max) <= 1e-6;
        });
        CHECK(present);
    }

    // resume mode reuses the previous snapshot as initialization and, with
    // nothing new mined, keeps training from where round 1 left off
    pipeline::BootstrapOptions resume_opt = opt;
    resume_opt.rounds = 2;
    resume_opt.resume = true;
    const auto resumed = pipeline::run_bootstrap(dir.path / "data", dir.path / "data",
                                                 dir.path / "run_resume", resume_opt);
    CHECK(!resumed.result.aborted);
    CHECK(slurp(dir.path / "run_resume/round_2/scorer.txt") !=
          slurp(dir.path / "run/round_2/scorer.txt"));
}

TEST_CASE("optimal matching policy runs through the eval driver") {
    TempDir dir("optimal");
    pipeline::run_gen(dir.path / "data", tiny_gen(51));
    pipeline::run_train(dir.path / "data", dir.path / "scorer.txt", tiny_train(3));

    pipeline::EvalOptions greedy;
    greedy.overlap_resolution = 128;
    greedy.detect.score_threshold = 0.3;
    pipeline::EvalOptions optimal = greedy;
    optimal.policy = MatchPolicy::OptimalAssignment;

    const auto g = pipeline::run_eval_snapshot(dir.path / "data", dir.path / "scorer.txt",
                                               dir.path / "eg", greedy);
    const auto o = pipeline::run_eval_snapshot(dir.path / "data", dir.path / "scorer.txt",
                                               dir.path / "eo", optimal);
    // optimal never matches fewer detections than greedy here and the
    // summaries record which policy produced them
    const auto matched = [](const MatchResult& m) {
        return std::count_if(m.entries.begin(), m.entries.end(),
                             [](const DetectionMatch& e) { return e.matched; });
    };
    CHECK(matched(o.matches) >= matched(g.matches));
    CHECK(slurp(dir.path / "eg/summary.json").find("\"greedy\"") != std::string::npos);
    CHECK(slurp(dir.path / "eo/summary.json").find("\"optimal\"") != std::string::npos);
}

TEST_CASE("harvest output is identical for any worker count at the stage level") {
    TempDir dir("workers");
    pipeline::run_gen(dir.path / "data", tiny_gen(61));
    pipeline::run_train(dir.path / "data", dir.path / "scorer.txt", tiny_train(5));

    pipeline::HarvestOptions serial;
    serial.harvest.score_threshold = 0.6;
    serial.harvest.workers = 1;
    pipeline::HarvestOptions parallel = serial;
    parallel.harvest.workers = 4;
    pipeline::run_harvest(dir.path / "data", dir.path / "scorer.txt", dir.path / "pool_1.txt",
                          serial);
    pipeline::run_harvest(dir.path / "data", dir.path / "scorer.txt", dir.path / "pool_4.txt",
                          parallel);
    CHECK(slurp(dir.path / "pool_1.txt") == slurp(dir.path / "pool_4.txt"));
}

TEST_CASE("eval: ground-truth boxes at score 1.0 give a perfect discrete curve") {
    TempDir dir("perfect");
    pipeline::run_gen(dir.path / "data", tiny_gen(71));

    // detection file = every annotated face's bounding box, score 1.0
    const auto ds = pipeline::load_dataset(dir.path / "data", {}, false);
    std::vector<DetectionRecord> dets;
    for (const auto& fold : ds.folds) {
        for (const auto& rec : fold.records) {
            DetectionRecord dr;
            dr.image_id = rec.image_id;
            for (const auto& b : face_boxes(rec)) dr.detections.push_back({b, 1.0});
            dets.push_back(std::move(dr));
        }
    }
    detail::write_file_atomic(dir.path / "gt_dets.txt", write_detection_file(dets));

    pipeline::EvalOptions opt;
    opt.overlap_resolution = 128;
    const auto outcome =
        pipeline::run_eval(dir.path / "data", dir.path / "gt_dets.txt", dir.path / "eval", opt);
    REQUIRE(!outcome.discrete.points.empty());
    CHECK(outcome.discrete.points.back().false_positives == 0);
    CHECK(outcome.discrete.points.back().tp_measure == doctest::Approx(1.0));

    // empty detection file: both curves sit at (0, 0)
    detail::write_file_atomic(dir.path / "none.txt", "");
    const auto empty =
        pipeline::run_eval(dir.path / "data", dir.path / "none.txt", dir.path / "eval0", opt);
    REQUIRE(empty.discrete.points.size() == 1);
    CHECK(empty.discrete.points[0].false_positives == 0);
    CHECK(empty.discrete.points[0].tp_measure == 0.0);
    REQUIRE(empty.continuous.points.size() == 1);
    CHECK(empty.continuous.points[0].tp_measure == 0.0);
}
