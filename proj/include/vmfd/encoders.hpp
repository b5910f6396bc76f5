// Trainable point encoder (small tanh MLP), frozen per-pixel feature
// provider, and the decoupled linear+normalize projection heads, all with
// exact manual backward passes.

#pragma once

#include <string>
#include <vector>

#include "vmfd/common.hpp"
#include "vmfd/losses.hpp"
#include "vmfd/synthdata.hpp"

namespace vmfd {

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;    // out
};

// d_in -> 32 -> 32 -> c3d with tanh on both hidden layers, linear output.
struct MlpParams {
    DenseLayer l1, l2, l3;
};

inline constexpr int kHiddenWidth = 32;

struct MlpCache {
    Mat input;  // M x d_in
    Mat a1;     // M x hidden, post-tanh
    Mat a2;     // M x hidden, post-tanh
};

Mat encode_3d(const MlpParams& params, const Mat& point_inputs,
              MlpCache* cache = nullptr);

// Linear map followed by row-wise l2 normalization.
struct ProjectionHead {
    Mat weight;  // c_out x c_in
    Vec bias;    // c_out
};

struct HeadCache {
    Mat input;       // M x c_in
    Mat pre_norm;    // M x c_out
    Vec norms;       // M, norms of pre_norm rows
    Mat normalized;  // M x c_out
};

FeatureMatrix project_and_normalize(const ProjectionHead& head,
                                    const Mat& features,
                                    HeadCache* cache = nullptr);

// Backward through the normalization alone: per row the Jacobian is
// (I - n n^T)/|pre| with n the normalized output.
Mat normalize_backward(const HeadCache& cache, const Mat& upstream);

struct DenseGrads {
    Mat weight;
    Vec bias;
};

struct MlpGrads {
    DenseGrads l1, l2, l3;
};

struct HeadGrads {
    Mat weight;
    Vec bias;
};

// Head backward; optionally emits the gradient with respect to the head input.
HeadGrads head_backward(const ProjectionHead& head, const HeadCache& cache,
                        const Mat& upstream, Mat* grad_input = nullptr);

struct Backward3dResult {
    MlpGrads trunk;
    HeadGrads pp_head;
    HeadGrads sem_head;
};

// Exact gradients for both heads and the shared trunk; the two head paths
// sum where they meet the trunk output.
Backward3dResult backward_3d(const MlpParams& trunk, const MlpCache& trunk_cache,
                             const ProjectionHead& pp_head, const HeadCache& pp_cache,
                             const ProjectionHead& sem_head, const HeadCache& sem_cache,
                             const Mat& upstream_pp, const Mat& upstream_sem);

struct Model {
    MlpParams trunk;
    ProjectionHead pp_3d, sem_3d;  // c3d -> c
    ProjectionHead pp_2d, sem_2d;  // d2 -> c, frozen unless configured
};

// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Model init_model(int d_in, int c3d, int c_embed, int d2, uint64_t seed);

// Per-pair 2D embeddings: deterministic lookup of the pixel descriptor each
// pair landed on, pushed through the frozen 2D heads.
struct ImageFeatures {
    Mat raw;  // M x d2
    FeatureMatrix pp;
    FeatureMatrix sem;
    HeadCache pp_cache, sem_cache;
};

ImageFeatures image_features(const Scene& scene,
                             const std::vector<PointPixelPair>& pairs,
                             const Model& model);

// Checkpoint: version header, config hash and snapshot, then all parameters.
void save_checkpoint(const std::string& path, const Model& model,
                     uint64_t config_hash, const std::string& config_text);

struct Checkpoint {
    Model model;
    uint64_t config_hash = 0;
    std::string config_text;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace vmfd
