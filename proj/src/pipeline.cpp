#include "hardmine/pipeline.hpp"

#include "hardmine/detail/io.hpp"
#include "hardmine/detail/random.hpp"
#include "hardmine/detail/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <set>

namespace hardmine::pipeline {

namespace fs = std::filesystem;
using detail::read_file;
using detail::write_file_atomic;

namespace {

std::string scene_id(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05d", index);
    return buf;
}

std::string fold_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fold_%02d.txt", index);
    return buf;
}

fs::path grid_path(const fs::path& data_dir, const std::string& image_id) {
    return data_dir / "grids" / (image_id + ".txt");
}

}  // namespace

Dataset load_dataset(const fs::path& data_dir, const std::vector<int>& fold_filter,
                     bool with_grids) {
    const auto manifest = parse_manifest(read_file(data_dir / "manifest.txt"));
    auto records = merge_manifest(parse_annotation_file(read_file(data_dir / "annotations.txt")),
                                  manifest);

    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : records) {
        if (!by_id.emplace(r.image_id, &r).second)
            throw std::runtime_error("duplicate annotation for image " + r.image_id);
    }

    // fold files are fold_01.txt .. fold_KK.txt, contiguous from 1
    std::vector<int> fold_indices;
    for (int i = 1;; ++i) {
        if (!fs::exists(data_dir / "folds" / fold_file_name(i))) break;
        fold_indices.push_back(i);
    }
    if (fold_indices.empty()) throw std::runtime_error("no fold lists under " + data_dir.string());

    std::set<int> wanted(fold_filter.begin(), fold_filter.end());
    for (const int f : wanted)
        if (f < 1 || f > static_cast<int>(fold_indices.size()))
            throw std::runtime_error("fold index " + std::to_string(f) + " out of range");

    Dataset ds;
    for (const int f : fold_indices) {
        if (!wanted.empty() && wanted.find(f) == wanted.end()) continue;
        Fold fold;
        fold.fold_index = f;
        for (const auto& id : parse_fold_list(read_file(data_dir / "folds" / fold_file_name(f)))) {
            const auto it = by_id.find(id);
            if (it == by_id.end())
                throw std::runtime_error("fold list references unknown image " + id);
            ImageRecord rec = *it->second;
            rec.preset_fold = f;
            fold.records.push_back(std::move(rec));
        }
        ds.folds.push_back(std::move(fold));
    }

    if (with_grids) {
        for (const auto& fold : ds.folds) {
            for (const auto& rec : fold.records) {
                auto scene = refdet::parse_scene_grid(read_file(grid_path(data_dir, rec.image_id)));
                if (scene.width != rec.width || scene.height != rec.height)
                    throw std::runtime_error("grid dimensions disagree with manifest for " +
                                             rec.image_id);
                scene.faces = rec.faces;
                ds.scenes.emplace(rec.image_id, std::move(scene));
            }
        }
    }
    return ds;
}

std::vector<refdet::TrainScene> scene_list(const Dataset& ds) {
    std::vector<refdet::TrainScene> out;
    out.reserve(ds.scenes.size());
    for (const auto& [id, scene] : ds.scenes) out.push_back({id, &scene});
    return out;
}

std::vector<ImageRecord> record_list(const Dataset& ds) {
    std::vector<ImageRecord> out;
    for (const auto& fold : ds.folds)
        out.insert(out.end(), fold.records.begin(), fold.records.end());
    std::sort(out.begin(), out.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    return out;
}

void run_gen(const fs::path& out_dir, const GenOptions& opt) {
    if (opt.scenes < 1) throw std::invalid_argument("gen: need at least one scene");
    if (opt.folds < 2) throw std::invalid_argument("gen: need at least two folds");
    if (opt.scenes < opt.folds)
        throw std::invalid_argument("gen: scene count must reach the fold count");

    std::vector<ImageRecord> records;
    std::vector<ManifestEntry> manifest;
    for (int i = 1; i <= opt.scenes; ++i) {
        const std::string id = scene_id(i);
        const auto scene =
            refdet::generate_scene(detail::mix_seed(opt.seed, static_cast<std::uint64_t>(i)),
                                   opt.scene);
        write_file_atomic(grid_path(out_dir, id), refdet::write_scene_grid(scene));

        ImageRecord rec;
        rec.image_id = id;
        rec.width = scene.width;
        rec.height = scene.height;
        rec.faces = scene.faces;
        records.push_back(std::move(rec));
        manifest.push_back({id, scene.width, scene.height});
    }

    write_file_atomic(out_dir / "manifest.txt", write_manifest(manifest));
    write_file_atomic(out_dir / "annotations.txt", write_annotation_file(records));
    for (const auto& fold : split_folds(records, opt.folds, opt.seed)) {
        std::vector<std::string> ids;
        ids.reserve(fold.records.size());
        for (const auto& r : fold.records) ids.push_back(r.image_id);
        write_file_atomic(out_dir / "folds" / fold_file_name(fold.fold_index),
                          write_fold_list(ids));
    }
}

TrainOutcome run_train(const fs::path& data_dir, const fs::path& out_snapshot,
                       const TrainOptions& opt) {
    const Dataset ds = load_dataset(data_dir, opt.folds, true);

    std::vector<HardNegative> pool;
    if (!opt.hard_pool.empty()) pool = parse_pool_file(read_file(opt.hard_pool));

    refdet::LinearScorer init;
    const refdet::LinearScorer* init_ptr = nullptr;
    if (opt.resume) {
        init = refdet::parse_scorer(read_file(opt.resume_snapshot));
        init_ptr = &init;
    }

    TrainOutcome outcome;
    outcome.pool_size = pool.size();
    const auto scorer =
        refdet::train(scene_list(ds), opt.sampler, opt.sgd, opt.features, opt.proposals,
                      pool_entries(pool), opt.seed, &outcome.phase_mean_loss, init_ptr);
    write_file_atomic(out_snapshot, refdet::write_scorer(scorer));
    return outcome;
}

namespace {

DetectFn make_detector(const Dataset& ds, const refdet::LinearScorer& scorer,
                       const refdet::DetectConfig& cfg) {
    return [&ds, &scorer, cfg](const ImageRecord& image) {
        const auto it = ds.scenes.find(image.image_id);
        if (it == ds.scenes.end())
            throw std::runtime_error("no scene grid loaded for " + image.image_id);
        return refdet::detect(it->second, scorer, cfg);
    };
}

}  // namespace

std::size_t run_harvest(const fs::path& data_dir, const fs::path& snapshot,
                        const fs::path& out_pool, const HarvestOptions& opt) {
    const Dataset ds = load_dataset(data_dir, opt.folds, true);
    const auto scorer = refdet::parse_scorer(read_file(snapshot));

    refdet::DetectConfig det_cfg = opt.detect;
    det_cfg.score_threshold = opt.harvest.score_threshold;
    const auto found = harvest(make_detector(ds, scorer, det_cfg), record_list(ds), opt.harvest);
    write_file_atomic(out_pool, write_pool_file(found));
    return found.size();
}

namespace {

EvalOutcome evaluate_records(const Dataset& ds, const std::vector<DetectionRecord>& detections,
                             const fs::path& out_dir, const EvalOptions& opt) {
    // detections belong to the fold holding their image
    std::map<std::string, std::size_t> fold_of;
    for (std::size_t i = 0; i < ds.folds.size(); ++i)
        for (const auto& rec : ds.folds[i].records) fold_of[rec.image_id] = i;

    std::vector<std::vector<DetectionRecord>> per_fold(ds.folds.size());
    for (const auto& d : detections) {
        const auto it = fold_of.find(d.image_id);
        if (it == fold_of.end())
            throw std::runtime_error("detections for image outside the selected folds: " +
                                     d.image_id);
        per_fold[it->second].push_back(d);
    }

    std::vector<MatchResult> results;
    results.reserve(ds.folds.size());
    for (std::size_t i = 0; i < ds.folds.size(); ++i)
        results.push_back(match_records(per_fold[i], ds.folds[i].records, opt.policy,
                                        opt.overlap_resolution, opt.workers));

    EvalOutcome outcome;
    auto [disc, cont] = aggregate_folds(results);
    outcome.discrete = std::move(disc);
    outcome.continuous = std::move(cont);
    for (auto& r : results) {
        outcome.matches.entries.insert(outcome.matches.entries.end(), r.entries.begin(),
                                       r.entries.end());
        outcome.matches.total_faces += r.total_faces;
        outcome.matches.total_images += r.total_images;
    }

    write_file_atomic(out_dir / "discrete_roc.csv", write_roc_csv(outcome.discrete));
    write_file_atomic(out_dir / "continuous_roc.csv", write_roc_csv(outcome.continuous));
    write_file_atomic(out_dir / "summary.json",
                      write_summary_json(outcome.matches, outcome.discrete, outcome.continuous,
                                         opt.policy, opt.overlap_resolution));
    return outcome;
}

}  // namespace

EvalOutcome run_eval(const fs::path& data_dir, const fs::path& detections_file,
                     const fs::path& out_dir, const EvalOptions& opt) {
    const Dataset ds = load_dataset(data_dir, opt.folds, false);
    return evaluate_records(ds, parse_detection_file(read_file(detections_file)), out_dir, opt);
}

EvalOutcome run_eval_snapshot(const fs::path& data_dir, const fs::path& snapshot,
                              const fs::path& out_dir, const EvalOptions& opt) {
    const Dataset ds = load_dataset(data_dir, opt.folds, true);
    const auto scorer = refdet::parse_scorer(read_file(snapshot));

    std::vector<DetectionRecord> detections;
    for (const auto& rec : record_list(ds)) {
        DetectionRecord dr;
        dr.image_id = rec.image_id;
        dr.detections = refdet::detect(ds.scenes.at(rec.image_id), scorer, opt.detect);
        detections.push_back(std::move(dr));
    }
    const fs::path det_file = out_dir / "detections.txt";
    write_file_atomic(det_file, write_detection_file(detections));

    // score the file we just wrote so both eval entry points agree bit-for-bit
    return evaluate_records(ds, parse_detection_file(read_file(det_file)), out_dir, opt);
}

BootstrapOutcome run_bootstrap(const fs::path& data_dir, const fs::path& eval_data_dir,
                               const fs::path& out_dir, const BootstrapOptions& opt) {
    const Dataset train_ds = load_dataset(data_dir, opt.train.folds, true);

    const auto round_dir = [&](int round) {
        return out_dir / ("round_" + std::to_string(round));
    };
    const auto snapshot_id = [&](int round) {
        return "round_" + std::to_string(round) + "/scorer.txt";
    };

    BootstrapHooks hooks;
    hooks.train = [&](int round, const std::vector<HardNegative>& pool,
                      const SamplerConfig& sampler) {
        if (round >= 2)
            write_file_atomic(round_dir(round) / "pool.txt", write_pool_file(pool));

        refdet::LinearScorer init;
        const refdet::LinearScorer* init_ptr = nullptr;
        if (opt.resume && round >= 2) {
            init = refdet::parse_scorer(read_file(out_dir / snapshot_id(round - 1)));
            init_ptr = &init;
        }
        const auto scorer = refdet::train(scene_list(train_ds), sampler, opt.train.sgd,
                                          opt.train.features, opt.train.proposals,
                                          pool_entries(pool), opt.train.seed, nullptr, init_ptr);
        write_file_atomic(out_dir / snapshot_id(round), refdet::write_scorer(scorer));
        return snapshot_id(round);
    };
    // harvesting runs the detector at the harvest threshold
    hooks.open_detector = [&](const std::string& id) {
        refdet::DetectConfig det_cfg = opt.harvest.detect;
        det_cfg.score_threshold = opt.harvest.harvest.score_threshold;
        auto scorer =
            std::make_shared<refdet::LinearScorer>(refdet::parse_scorer(read_file(out_dir / id)));
        return DetectFn([&train_ds, scorer, det_cfg](const ImageRecord& image) {
            return refdet::detect(train_ds.scenes.at(image.image_id), *scorer, det_cfg);
        });
    };
    hooks.evaluate = [&](int round, const std::string& id) {
        run_eval_snapshot(eval_data_dir, out_dir / id, round_dir(round) / "eval", opt.eval);
        return "round_" + std::to_string(round) + "/eval/summary.json";
    };

    BootstrapOutcome outcome;
    outcome.result =
        bootstrap(hooks, train_ds.folds, opt.rounds, opt.harvest.harvest, opt.train.sampler);

    nlohmann::json j;
    j["rounds"] = nlohmann::json::array();
    for (const auto& r : outcome.result.reports) {
        j["rounds"].push_back({{"round", r.round_index},
                               {"hard_negatives_found", r.hard_negatives_found},
                               {"snapshot", r.detector_snapshot_id},
                               {"eval_summary", r.eval_summary}});
    }
    j["final_snapshot"] = outcome.result.final_snapshot_id;
    j["aborted"] = outcome.result.aborted;
    if (outcome.result.aborted) j["error"] = outcome.result.error;
    outcome.reports_file = out_dir / "round_reports.json";
    write_file_atomic(outcome.reports_file, j.dump(2) + "\n");
    return outcome;
}

}  // namespace hardmine::pipeline
