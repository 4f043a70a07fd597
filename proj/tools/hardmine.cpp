// hardmine: hard-negative-mining bootstrapped training for a synthetic
// region detector, plus an FDDB-protocol evaluation engine.
//
// Stages communicate only through documented text formats (manifest,
// annotations, detections, pools, snapshots, ROC CSVs), so every stage can
// run as a separate invocation.

#include "hardmine/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace hardmine;
namespace fs = std::filesystem;

std::vector<int> parse_fold_list_arg(const std::string& arg) {
    std::vector<int> out;
    std::string token;
    for (const char c : arg + ",") {
        if (c == ',') {
            if (!token.empty()) out.push_back(std::stoi(token));
            token.clear();
        } else {
            token += c;
        }
    }
    return out;
}

struct CommonArgs {
    std::uint64_t seed = 1;
    int workers = 0;  // 0 = auto
    std::string out;
};

void add_sampler_flags(CLI::App* cmd, SamplerConfig& sampler) {
    cmd->add_option("--th-fg", sampler.th_fg, "Foreground IoU threshold")->capture_default_str();
    cmd->add_option("--th-bg", sampler.th_bg_low, "Lower background IoU threshold")
        ->capture_default_str();
    cmd->add_option("--bg-fg-ratio", sampler.bg_fg_ratio, "Background:foreground ratio per batch")
        ->capture_default_str();
    cmd->add_option("--batch-size", sampler.batch_size, "RoIs per SGD mini-batch")
        ->capture_default_str();
    cmd->add_flag("--per-image-ratio", sampler.per_image_ratio,
                  "Enforce the bg/fg ratio within each image instead of per batch");
}

void add_sgd_flags(CLI::App* cmd, refdet::SgdConfig& sgd) {
    cmd->add_option("--lr1", sgd.lr_phase1, "Phase-1 learning rate")->capture_default_str();
    cmd->add_option("--iters1", sgd.iters_phase1, "Phase-1 iterations")->capture_default_str();
    cmd->add_option("--lr2", sgd.lr_phase2, "Phase-2 learning rate")->capture_default_str();
    cmd->add_option("--iters2", sgd.iters_phase2, "Phase-2 iterations")->capture_default_str();
}

void add_detect_flags(CLI::App* cmd, refdet::DetectConfig& detect) {
    cmd->add_option("--det-threshold", detect.score_threshold,
                    "Detector score threshold when producing detections")
        ->capture_default_str();
    cmd->add_option("--nms-iou", detect.nms_iou, "NMS suppression IoU")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hard-negative-mining bootstrap loop and evaluation toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonArgs common;
    app.add_option("--seed", common.seed, "Master random seed")->capture_default_str();
    app.add_option("--workers", common.workers, "Worker threads (0 = all cores)")
        ->capture_default_str();
    app.add_option("--out", common.out, "Output directory or file (stage dependent)");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    pipeline::GenOptions gen_opt;
    gen->add_option("--scenes", gen_opt.scenes, "Number of scenes")
        ->required()
        ->check(CLI::Range(1, 1000000));
    gen->add_option("--folds", gen_opt.folds, "Number of cross-validation folds")
        ->capture_default_str();
    gen->add_option("--width", gen_opt.scene.width, "Scene width in px")->capture_default_str();
    gen->add_option("--height", gen_opt.scene.height, "Scene height in px")->capture_default_str();
    gen->add_option("--min-faces", gen_opt.scene.min_faces, "Minimum faces per scene")
        ->capture_default_str();
    gen->add_option("--max-faces", gen_opt.scene.max_faces, "Maximum faces per scene")
        ->capture_default_str();
    gen->add_option("--min-distractors", gen_opt.scene.min_distractors,
                    "Minimum distractors per scene")
        ->capture_default_str();
    gen->add_option("--max-distractors", gen_opt.scene.max_distractors,
                    "Maximum distractors per scene")
        ->capture_default_str();
    gen->add_option("--noise", gen_opt.scene.noise, "Additive noise amplitude")
        ->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "Train a scorer snapshot");
    std::string train_data;
    std::string train_folds;
    std::string train_pool;
    pipeline::TrainOptions train_opt;
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--folds", train_folds, "Comma-separated fold indices (default: all)");
    train->add_option("--hard-pool", train_pool, "Hard-negative pool file to inject");
    std::string train_resume;
    train->add_option("--resume-from", train_resume,
                      "Fine-tune from an existing snapshot instead of restarting");
    add_sampler_flags(train, train_opt.sampler);
    add_sgd_flags(train, train_opt.sgd);

    // harvest
    auto* harvest = app.add_subcommand("harvest", "Harvest hard negatives with a snapshot");
    std::string harvest_data;
    std::string harvest_folds;
    std::string harvest_snapshot;
    pipeline::HarvestOptions harvest_opt;
    harvest->add_option("--data", harvest_data, "Dataset directory")->required();
    harvest->add_option("--snapshot", harvest_snapshot, "Scorer snapshot file")->required();
    harvest->add_option("--folds", harvest_folds, "Comma-separated fold indices (default: all)");
    harvest->add_option("--score-threshold", harvest_opt.harvest.score_threshold,
                        "Minimum detector score for a harvested negative")
        ->capture_default_str();
    harvest->add_option("--iou-threshold", harvest_opt.harvest.iou_threshold,
                        "Maximum ground-truth IoU for a harvested negative")
        ->capture_default_str();
    harvest->add_option("--nms-iou", harvest_opt.detect.nms_iou, "NMS suppression IoU")
        ->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "Score detections against ground truth");
    std::string eval_data;
    std::string eval_folds;
    std::string eval_detections;
    std::string eval_snapshot;
    std::string eval_policy = "greedy";
    pipeline::EvalOptions eval_opt;
    eval->add_option("--data", eval_data, "Dataset directory")->required();
    eval->add_option("--folds", eval_folds, "Comma-separated fold indices (default: all)");
    eval->add_option("--detections", eval_detections, "Detection file to score");
    eval->add_option("--snapshot", eval_snapshot,
                     "Scorer snapshot: run detection first, then score");
    eval->add_option("--policy", eval_policy, "Matching policy: greedy or optimal")
        ->check(CLI::IsMember({"greedy", "optimal"}))
        ->capture_default_str();
    eval->add_option("--resolution", eval_opt.overlap_resolution,
                     "Grid resolution for box-ellipse overlap")
        ->capture_default_str();
    add_detect_flags(eval, eval_opt.detect);

    // bootstrap
    auto* boot = app.add_subcommand("bootstrap", "Multi-round mining loop over a dataset");
    std::string boot_data;
    std::string boot_eval_data;
    pipeline::BootstrapOptions boot_opt;
    boot->add_option("--data", boot_data, "Training dataset directory")->required();
    boot->add_option("--eval-data", boot_eval_data,
                     "Evaluation dataset directory (default: the training data)");
    boot->add_option("--rounds", boot_opt.rounds, "Mining rounds")->capture_default_str();
    boot->add_flag("--resume", boot_opt.resume,
                   "Fine-tune each round from the previous snapshot instead of restarting");
    boot->add_option("--score-threshold", boot_opt.harvest.harvest.score_threshold,
                     "Harvest score threshold")
        ->capture_default_str();
    boot->add_option("--iou-threshold", boot_opt.harvest.harvest.iou_threshold,
                     "Harvest IoU threshold")
        ->capture_default_str();
    add_sampler_flags(boot, boot_opt.train.sampler);
    add_sgd_flags(boot, boot_opt.train.sgd);
    add_detect_flags(boot, boot_opt.eval.detect);
    boot->add_option("--resolution", boot_opt.eval.overlap_resolution,
                     "Grid resolution for box-ellipse overlap in per-round eval")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        const auto require_out = [&](const char* stage) -> fs::path {
            if (common.out.empty())
                throw std::runtime_error(std::string(stage) + ": --out is required");
            return fs::path(common.out);
        };

        if (gen->parsed()) {
            gen_opt.seed = common.seed;
            pipeline::run_gen(require_out("gen"), gen_opt);
            std::printf("gen: wrote %d scenes (%d folds)\n", gen_opt.scenes, gen_opt.folds);
        } else if (train->parsed()) {
            train_opt.seed = common.seed;
            train_opt.folds = parse_fold_list_arg(train_folds);
            train_opt.hard_pool = train_pool;
            if (!train_resume.empty()) {
                train_opt.resume = true;
                train_opt.resume_snapshot = train_resume;
            }
            const auto outcome =
                pipeline::run_train(train_data, require_out("train"), train_opt);
            for (std::size_t i = 0; i < outcome.phase_mean_loss.size(); ++i)
                std::printf("train: phase %zu mean loss %.6f\n", i + 1,
                            outcome.phase_mean_loss[i]);
            std::printf("train: injected pool size %zu\n", outcome.pool_size);
        } else if (harvest->parsed()) {
            harvest_opt.folds = parse_fold_list_arg(harvest_folds);
            harvest_opt.harvest.workers = common.workers;
            const auto found = pipeline::run_harvest(harvest_data, harvest_snapshot,
                                                     require_out("harvest"), harvest_opt);
            std::printf("harvest: %zu hard negatives\n", found);
        } else if (eval->parsed()) {
            eval_opt.folds = parse_fold_list_arg(eval_folds);
            eval_opt.workers = common.workers;
            eval_opt.policy = eval_policy == "optimal" ? MatchPolicy::OptimalAssignment
                                                       : MatchPolicy::GreedyByScore;
            if (eval_detections.empty() == eval_snapshot.empty())
                throw std::runtime_error("eval: supply exactly one of --detections/--snapshot");
            const auto out_dir = require_out("eval");
            const auto outcome =
                eval_detections.empty()
                    ? pipeline::run_eval_snapshot(eval_data, eval_snapshot, out_dir, eval_opt)
                    : pipeline::run_eval(eval_data, eval_detections, out_dir, eval_opt);
            std::printf("eval: %zu detections over %zu faces; discrete final tp %.6f\n",
                        outcome.matches.entries.size(), outcome.matches.total_faces,
                        outcome.discrete.points.empty() ? 0.0
                                                        : outcome.discrete.points.back().tp_measure);
        } else if (boot->parsed()) {
            boot_opt.train.seed = common.seed;
            boot_opt.eval.workers = common.workers;
            boot_opt.harvest.harvest.workers = common.workers;
            const auto out_dir = require_out("bootstrap");
            const auto outcome = pipeline::run_bootstrap(
                boot_data, boot_eval_data.empty() ? fs::path(boot_data) : fs::path(boot_eval_data), out_dir,
                boot_opt);
            for (const auto& r : outcome.result.reports)
                std::printf("bootstrap: round %d found %zu hard negatives -> %s\n", r.round_index,
                            r.hard_negatives_found, r.detector_snapshot_id.c_str());
            if (outcome.result.aborted) {
                std::fprintf(stderr, "bootstrap: aborted: %s\n", outcome.result.error.c_str());
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
