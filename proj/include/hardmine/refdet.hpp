#pragma once

#include "hardmine/geometry.hpp"
#include "hardmine/roi_sampler.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hardmine::refdet {

// Synthetic desk-scale stand-in for a real detection corpus. Faces are
// two-tone elliptical patterns (dark ring, bright core); distractors are
// single-tone ellipses sharing the faces' intensity range but lacking the
// discriminative core. Distractors are deliberately rare relative to plain
// background windows: a detector trained on randomly sampled background
// hardly ever sees one, which is what makes them minable.
struct SceneConfig {
    int width = 160;
    int height = 160;
    int min_faces = 1;
    int max_faces = 3;
    int min_distractors = 1;
    int max_distractors = 3;
    double noise = 0.05;
    double face_radius_min = 8.0;
    double face_radius_max = 16.0;
    double distractor_radius_min = 12.0;
    double distractor_radius_max = 20.0;
    double axis_ratio_min = 0.6;   // minor/major
    double axis_ratio_max = 0.95;
    double background_tone = 0.5;
    double face_ring_tone = 0.15;
    double face_core_tone = 0.9;
    double core_fraction = 0.45;   // core radii = face radii * core_fraction
    double distractor_tone = 0.15;
    int max_placement_retries = 200;
};

struct SyntheticScene {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major intensities in [0, 1]
    std::vector<Ellipse> faces;
    std::vector<Ellipse> distractors;

    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

class PlacementError : public std::runtime_error {
public:
    explicit PlacementError(const std::string& what) : std::runtime_error(what) {}
};

// Deterministic for a fixed seed. Shapes are placed fully inside the image
// and pairwise non-overlapping (bounding-box IoU < 0.1); throws
// PlacementError when the config demands more shapes than fit.
SyntheticScene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

struct ProposalConfig {
    std::vector<double> window_sizes = {20.0, 26.0, 34.0, 44.0};
    double stride_fraction = 0.25;  // stride = window size * fraction
};

// Dense multi-scale sliding-window boxes clipped to image bounds.
std::vector<Box> propose(const SyntheticScene& scene, const ProposalConfig& cfg);

struct FeatureConfig {
    int grid_bins = 4;       // pooled mean intensities over a grid_bins^2 partition
    int histogram_bins = 8;  // normalized intensity histogram
    int length() const { return grid_bins * grid_bins + histogram_bins; }
};

using FeatureVector = std::vector<double>;

// Pooled grid means followed by the normalized histogram. The region is
// clipped to the image first; a region left degenerate by clipping throws.
FeatureVector extract_features(const SyntheticScene& scene, const Box& region,
                               const FeatureConfig& cfg);

struct LrPhase {
    double learning_rate = 0.0;
    long long iterations = 0;
};

struct TrainingMeta {
    long long iterations = 0;
    std::vector<LrPhase> schedule;
};

struct LinearScorer {
    std::vector<double> weights;
    double bias = 0.0;
    TrainingMeta meta;

    // logistic(w . x + b), always in (0, 1)
    double score(const FeatureVector& x) const;
};

// Mean logistic loss over a batch and its gradient; exposed so the gradient
// can be checked against finite differences.
double logistic_loss_gradient(const std::vector<double>& weights, double bias,
                              const std::vector<const FeatureVector*>& xs,
                              const std::vector<int>& ys, std::vector<double>& grad_w,
                              double& grad_b);

struct SgdConfig {
    // Two-phase schedule: high rate first, then a 10x reduction. The base
    // rate is sized for this feature scale; 24 bounded features under a
    // zero-initialized logistic model need rates near 0.1 to reach a usable
    // operating point within the desk-scale iteration budget.
    double lr_phase1 = 0.15;
    long long iters_phase1 = 5000;
    double lr_phase2 = 0.015;
    long long iters_phase2 = 2000;
};

struct TrainScene {
    std::string image_id;
    const SyntheticScene* scene = nullptr;
};

// Trains the logistic scorer by seeded SGD on mini-batches drawn through
// sample_minibatch (fg label 1, bg label 0) with the hard pool forcibly
// injected into background slots. Deterministic for a fixed seed. `init`
// resumes from an existing scorer instead of zero weights.
// phase_mean_loss, when supplied, receives the mean loss of each phase.
LinearScorer train(const std::vector<TrainScene>& scenes, const SamplerConfig& sampler,
                   const SgdConfig& sgd, const FeatureConfig& features,
                   const ProposalConfig& proposals, const std::vector<PoolEntry>& hard_pool,
                   std::uint64_t seed, std::vector<double>* phase_mean_loss = nullptr,
                   const LinearScorer* init = nullptr);

struct DetectConfig {
    // low default so downstream ROC sweeps see a populated score range;
    // harvesting overrides this with its own threshold
    double score_threshold = 0.25;
    double nms_iou = 0.3;
    ProposalConfig proposals;
    FeatureConfig features;
};

// propose -> extract -> score -> threshold -> greedy NMS, descending score.
std::vector<Detection> detect(const SyntheticScene& scene, const LinearScorer& scorer,
                              const DetectConfig& cfg);

// Greedy non-maximum suppression by descending score.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

// Intensity-grid persistence: "width height" header, then one 6-decimal
// row per line. Faces/distractors are not stored here (annotations carry
// the ground truth).
std::string write_scene_grid(const SyntheticScene& scene);
SyntheticScene parse_scene_grid(const std::string& content);

// Scorer snapshot: line-oriented text, full float precision.
std::string write_scorer(const LinearScorer& scorer);
LinearScorer parse_scorer(const std::string& content);

}  // namespace hardmine::refdet
