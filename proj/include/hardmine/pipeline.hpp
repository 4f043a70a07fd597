#pragma once

#include "hardmine/evaluator.hpp"
#include "hardmine/miner.hpp"
#include "hardmine/refdet.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hardmine::pipeline {

// On-disk dataset layout under a data directory:
//   manifest.txt        image_id width height
//   annotations.txt     FDDB ellipse blocks
//   folds/fold_XX.txt   one image id per line
//   grids/<id>.txt      intensity grids
struct Dataset {
    std::vector<Fold> folds;
    std::map<std::string, refdet::SyntheticScene> scenes;  // loaded grids, faces attached
};

// empty fold filter selects every fold
Dataset load_dataset(const std::filesystem::path& data_dir, const std::vector<int>& fold_filter,
                     bool with_grids);

std::vector<refdet::TrainScene> scene_list(const Dataset& ds);
std::vector<ImageRecord> record_list(const Dataset& ds);

struct GenOptions {
    int scenes = 50;
    int folds = 10;
    std::uint64_t seed = 1;
    refdet::SceneConfig scene;
};

// writes manifest, annotations, fold lists, and one grid per scene
void run_gen(const std::filesystem::path& out_dir, const GenOptions& opt);

inline SamplerConfig recipe_sampler() {
    SamplerConfig s;
    s.batch_size = 384;
    return s;
}

struct TrainOptions {
    std::vector<int> folds;  // empty = all
    std::filesystem::path hard_pool;  // empty = none
    std::uint64_t seed = 1;
    // Recipe default: a larger batch than the sampler's own 64 so a mined
    // pool of a few hundred entries cannot monopolize the background quota
    // when it is force-included in every step.
    SamplerConfig sampler = recipe_sampler();
    refdet::SgdConfig sgd;
    refdet::FeatureConfig features;
    refdet::ProposalConfig proposals;
    bool resume = false;                   // continue from resume_snapshot
    std::filesystem::path resume_snapshot;
};

struct TrainOutcome {
    std::vector<double> phase_mean_loss;
    std::size_t pool_size = 0;
};

TrainOutcome run_train(const std::filesystem::path& data_dir,
                       const std::filesystem::path& out_snapshot, const TrainOptions& opt);

struct HarvestOptions {
    std::vector<int> folds;
    HarvestConfig harvest;
    refdet::DetectConfig detect;  // score_threshold is overridden by harvest.score_threshold
};

std::size_t run_harvest(const std::filesystem::path& data_dir,
                        const std::filesystem::path& snapshot,
                        const std::filesystem::path& out_pool, const HarvestOptions& opt);

struct EvalOptions {
    std::vector<int> folds;
    MatchPolicy policy = MatchPolicy::GreedyByScore;
    int overlap_resolution = kDefaultOverlapResolution;
    int workers = 1;
    refdet::DetectConfig detect;  // used when evaluating straight from a snapshot
};

struct EvalOutcome {
    MatchResult matches;
    RocCurve discrete;
    RocCurve continuous;
};

// Scores an existing detection file against the ground truth of the selected
// folds; writes discrete_roc.csv, continuous_roc.csv, summary.json.
EvalOutcome run_eval(const std::filesystem::path& data_dir,
                     const std::filesystem::path& detections_file,
                     const std::filesystem::path& out_dir, const EvalOptions& opt);

// Runs the detector over the selected folds, writes out_dir/detections.txt,
// then evaluates that file (so a snapshot eval and a detection-file eval are
// byte-equivalent).
EvalOutcome run_eval_snapshot(const std::filesystem::path& data_dir,
                              const std::filesystem::path& snapshot,
                              const std::filesystem::path& out_dir, const EvalOptions& opt);

struct BootstrapOptions {
    int rounds = 2;
    bool resume = false;  // round k >= 2 fine-tunes the previous snapshot instead of restarting
    TrainOptions train;   // train.seed drives every round (restart-from-init semantics)
    HarvestOptions harvest;
    EvalOptions eval;
};

struct BootstrapOutcome {
    BootstrapResult result;
    std::filesystem::path reports_file;
};

// The multi-round mining loop over an existing dataset. Each round writes
//   round_<k>/scorer.txt, round_<k>/pool.txt (k >= 2),
//   round_<k>/eval/{detections.txt, discrete_roc.csv, continuous_roc.csv,
//   summary.json}
// plus round_reports.json at the top. Evaluation runs against eval_data_dir.
BootstrapOutcome run_bootstrap(const std::filesystem::path& data_dir,
                               const std::filesystem::path& eval_data_dir,
                               const std::filesystem::path& out_dir, const BootstrapOptions& opt);

}  // namespace hardmine::pipeline
