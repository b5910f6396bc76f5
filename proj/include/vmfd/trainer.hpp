// Two-stage training orchestration: density/category aware pair sampling,
// forward passes, EMA statistics (stage 1), losses and SGD updates (stage 2),
// plus the linear probe and feature-structure metrics used for evaluation.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmfd/encoders.hpp"
#include "vmfd/sampling.hpp"
#include "vmfd/synthdata.hpp"
#include "vmfd/vmf_stats.hpp"

namespace vmfd {

struct TrainConfig {
    int epochs = 50;
    int batch_scenes = 4;  // scenes visited per epoch, one optimizer step each
    int m_s = 256;         // pairs sampled per scene
    double lr0 = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double alpha = 0.99;
    double tau = 0.07;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;

    enum class BandwidthMode { kSilverman, kFixed };
    BandwidthMode bandwidth_mode = BandwidthMode::kSilverman;
    double fixed_bandwidth = 5.0;
    SamplingMode sampling_mode = SamplingMode::kDcas;
    uint64_t seed = 1;

    double kappa_max = 0.0;  // optional concentration clamp; 0 disables
    bool train_2d_heads = false;
    bool kde_prescaled_kernel = false;
    int c3d = 16;
    int c_embed = 8;

    void validate() const;
};

// lr0 * (1 + cos(pi t / T)) / 2
double cosine_lr(int step, int total_steps, double lr0);

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v
void sgd_step(Mat& param, const Mat& grad, Mat& velocity, double lr,
              double momentum, double weight_decay);
void sgd_step(Vec& param, const Vec& grad, Vec& velocity, double lr,
              double momentum, double weight_decay);

struct OptimizerState {
    MlpGrads trunk;
    HeadGrads pp_3d, sem_3d, pp_2d, sem_2d;
};

OptimizerState make_optimizer_state(const Model& model);

struct VarianceMetrics {
    double sigma_w_sq = 0.0;
    double sigma_b_sq = 0.0;
};

// sigma_W^2: mean over classes of mean squared distance to the class mean.
// sigma_B^2: mean squared distance of class means to their common mean.
VarianceMetrics variance_metrics(const Mat& features, const std::vector<int>& labels);

struct EpochMetrics {
    int epoch = 0;
    double loss_ppnce = 0.0;
    double loss_sup = 0.0;
    double loss_kl = 0.0;
    double loss_total = 0.0;
    double lr = 0.0;
    double sigma_w_sq = 0.0;
    double sigma_b_sq = 0.0;
};

// Fixed column order shared by the metrics stream, tests and downstream
// tooling; rows are formatted with %.17g so reruns are byte identical.
std::string metrics_header();
std::string metrics_row(const EpochMetrics& m);

struct LinearClassifier {
    Mat weight;  // K x F
    Vec bias;    // K
};

LinearClassifier fit_linear_probe(const Mat& features, const std::vector<int>& labels,
                                  int num_classes);

struct ProbeResult {
    double accuracy = 0.0;
    double mean_iou = 0.0;
    std::vector<double> per_class_iou;
};

ProbeResult evaluate_classifier(const LinearClassifier& clf, const Mat& features,
                                const std::vector<int>& labels, int num_classes);

// Fits on the given features and reports on them (frozen-representation probe).
ProbeResult linear_probe(const Mat& features, const std::vector<int>& labels,
                         int num_classes);

// Per-run cache of model-independent work plus optimizer and schedule state.
struct TrainContext {
    struct SceneCache {
        std::vector<PointPixelPair> pairs;
        SamplingWeights weights;
    };
    std::vector<SceneCache> scenes;
    OptimizerState opt;
    int global_step = 0;
    int total_steps = 0;
    int scenes_per_epoch = 0;
    // vMF parameters snapshotted at epoch start; stage 2 reads only these.
    std::vector<VmfParams> class_params;
    std::vector<bool> class_ready;
};

TrainContext make_context(const std::vector<Scene>& scenes, const TrainConfig& config,
                          const Model& model, int num_classes);

// One epoch: refreshes the vMF parameter snapshot from the EMA statistics,
// then per scene draws pairs, updates statistics (stage 1) and applies one
// SGD step from the combined loss (stage 2).
EpochMetrics train_epoch(const std::vector<Scene>& scenes, Model& model,
                         ClassStatistics& stats, const TrainConfig& config,
                         TrainContext& ctx, Rng& rng, int epoch);

struct TrainResult {
    Model model;
    ClassStatistics stats;
    std::vector<EpochMetrics> history;
    VarianceMetrics final_variance;  // sem-head features over a full eval pass
    int num_classes = 0;
};

TrainResult run_training(const std::vector<Scene>& scenes, const TrainConfig& config);

// Deterministic full pass over every valid pair of every scene.
struct EvalFeatures {
    Mat trunk;  // pre-head features, one row per pair
    Mat sem;    // sem-head normalized features
    std::vector<int> true_labels;
    std::vector<int> scene_index;
    std::vector<int> point_index;
};

EvalFeatures eval_features(const std::vector<Scene>& scenes, const Model& model);

// Probe protocol: pairs are split 50/50 by a seeded hash of (scene, point);
// the classifier is fit on one half and scored on the held-out half.
ProbeResult probe_heldout(const std::vector<Scene>& scenes, const Model& model,
                          uint64_t split_seed,
                          VarianceMetrics* heldout_variance = nullptr);

int count_classes(const std::vector<Scene>& scenes);

}  // namespace vmfd
