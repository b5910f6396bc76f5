#include "vmfd/encoders.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vmfd/binary_io.hpp"

namespace vmfd {

namespace {

Mat dense_forward(const DenseLayer& layer, const Mat& input) {
    if (input.cols() != layer.weight.cols())
        throw std::invalid_argument("dense layer: input width mismatch");
    return (input * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

// dZ: M x out. Accumulates nothing; returns fresh grads and d(input).
DenseGrads dense_backward(const DenseLayer& layer, const Mat& input, const Mat& d_pre,
                          Mat* d_input) {
    DenseGrads g;
    g.weight = d_pre.transpose() * input;
    g.bias = d_pre.colwise().sum().transpose();
    if (d_input) *d_input = d_pre * layer.weight;
    return g;
}

}  // namespace

Mat encode_3d(const MlpParams& params, const Mat& point_inputs, MlpCache* cache) {
    if (!point_inputs.allFinite())
        throw std::invalid_argument("encode_3d: non-finite inputs");
    const Mat a1 = dense_forward(params.l1, point_inputs).array().tanh();
    const Mat a2 = dense_forward(params.l2, a1).array().tanh();
    Mat out = dense_forward(params.l3, a2);
    if (cache) {
        cache->input = point_inputs;
        cache->a1 = a1;
        cache->a2 = a2;
    }
    return out;
}

FeatureMatrix project_and_normalize(const ProjectionHead& head, const Mat& features,
                                    HeadCache* cache) {
    Mat pre = (features * head.weight.transpose()).rowwise() + head.bias.transpose();
    const int m = static_cast<int>(pre.rows());
    Vec norms(m);
    Mat normalized(pre.rows(), pre.cols());
    for (int i = 0; i < m; ++i) {
        norms[i] = pre.row(i).norm();
        if (norms[i] <= 1e-12)
            throw std::domain_error("project_and_normalize: degenerate embedding, row " +
                                    std::to_string(i) + " maps to the zero vector");
        normalized.row(i) = pre.row(i) / norms[i];
    }
    if (cache) {
        cache->input = features;
        cache->pre_norm = std::move(pre);
        cache->norms = norms;
        cache->normalized = normalized;
    }
    return FeatureMatrix{std::move(normalized)};
}

Mat normalize_backward(const HeadCache& cache, const Mat& upstream) {
    if (upstream.rows() != cache.normalized.rows() ||
        upstream.cols() != cache.normalized.cols())
        throw std::invalid_argument("normalize_backward: shape mismatch");
    Mat out(upstream.rows(), upstream.cols());
    for (int i = 0; i < upstream.rows(); ++i) {
        const auto n = cache.normalized.row(i);
        out.row(i) = (upstream.row(i) - n * upstream.row(i).dot(n)) / cache.norms[i];
    }
    return out;
}

HeadGrads head_backward(const ProjectionHead& head, const HeadCache& cache,
                        const Mat& upstream, Mat* grad_input) {
    const Mat d_pre = normalize_backward(cache, upstream);
    HeadGrads g;
    g.weight = d_pre.transpose() * cache.input;
    g.bias = d_pre.colwise().sum().transpose();
    if (grad_input) *grad_input = d_pre * head.weight;
    return g;
}

Backward3dResult backward_3d(const MlpParams& trunk, const MlpCache& trunk_cache,
                             const ProjectionHead& pp_head, const HeadCache& pp_cache,
                             const ProjectionHead& sem_head, const HeadCache& sem_cache,
                             const Mat& upstream_pp, const Mat& upstream_sem) {
    Backward3dResult result;
    Mat d_trunk_pp, d_trunk_sem;
    result.pp_head = head_backward(pp_head, pp_cache, upstream_pp, &d_trunk_pp);
    result.sem_head = head_backward(sem_head, sem_cache, upstream_sem, &d_trunk_sem);
    const Mat d_out = d_trunk_pp + d_trunk_sem;

    Mat d_a2;
    result.trunk.l3 = dense_backward(trunk.l3, trunk_cache.a2, d_out, &d_a2);
    const Mat d_z2 = d_a2.array() * (1.0 - trunk_cache.a2.array().square());
    Mat d_a1;
    result.trunk.l2 = dense_backward(trunk.l2, trunk_cache.a1, d_z2, &d_a1);
    const Mat d_z1 = d_a1.array() * (1.0 - trunk_cache.a1.array().square());
    result.trunk.l1 = dense_backward(trunk.l1, trunk_cache.input, d_z1, nullptr);
    return result;
}

namespace {

DenseLayer init_dense(int out, int in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    DenseLayer layer;
    layer.weight = Mat::NullaryExpr(out, in, [&]() { return unif(rng); });
    layer.bias = Vec::NullaryExpr(out, [&]() { return unif(rng); });
    return layer;
}

ProjectionHead init_head(int out, int in, Rng& rng) {
    DenseLayer d = init_dense(out, in, rng);
    return ProjectionHead{std::move(d.weight), std::move(d.bias)};
}

}  // namespace

Model init_model(int d_in, int c3d, int c_embed, int d2, uint64_t seed) {
    if (d_in < 1 || c3d < 2 || c_embed < 2 || d2 < 1)
        throw std::invalid_argument("init_model: bad dimensions");
    Model model;
    Rng trunk_rng(derive_seed(seed, 0x7472756e6bull));  // "trunk"
    model.trunk.l1 = init_dense(kHiddenWidth, d_in, trunk_rng);
    model.trunk.l2 = init_dense(kHiddenWidth, kHiddenWidth, trunk_rng);
    model.trunk.l3 = init_dense(c3d, kHiddenWidth, trunk_rng);
    Rng head_rng(derive_seed(seed, 0x6865616473ull));  // "heads"
    model.pp_3d = init_head(c_embed, c3d, head_rng);
    model.sem_3d = init_head(c_embed, c3d, head_rng);
    model.pp_2d = init_head(c_embed, d2, head_rng);
    model.sem_2d = init_head(c_embed, d2, head_rng);
    return model;
}

ImageFeatures image_features(const Scene& scene,
                             const std::vector<PointPixelPair>& pairs,
                             const Model& model) {
    if (pairs.empty()) throw std::invalid_argument("image_features: no pairs");
    const int d2 = scene.views.empty() ? 0 : scene.views.front().pixel_descriptors.depth;
    Mat raw(static_cast<int>(pairs.size()), d2);
    for (size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        if (pair.camera_index < 0 ||
            pair.camera_index >= static_cast<int>(scene.views.size()))
            throw std::out_of_range("image_features: camera index out of range");
        const auto& view = scene.views[pair.camera_index];
        if (pair.u < 0 || pair.u >= view.pixel_descriptors.width || pair.v < 0 ||
            pair.v >= view.pixel_descriptors.height)
            throw std::out_of_range("image_features: pixel out of bounds");
        const double* d = view.pixel_descriptors.at(pair.v, pair.u);
        for (int j = 0; j < d2; ++j) raw(static_cast<int>(i), j) = d[j];
    }
    ImageFeatures out;
    out.pp = project_and_normalize(model.pp_2d, raw, &out.pp_cache);
    out.sem = project_and_normalize(model.sem_2d, raw, &out.sem_cache);
    out.raw = std::move(raw);
    return out;
}

namespace {

constexpr char kCheckpointMagic[9] = "VMFDCKP1";
constexpr uint32_t kCheckpointVersion = 1;

void write_dense(std::ostream& os, const DenseLayer& l) {
    io::write_matrix(os, l.weight);
    io::write_vector(os, l.bias);
}

DenseLayer read_dense(std::istream& is) {
    DenseLayer l;
    l.weight = io::read_matrix(is);
    l.bias = io::read_vector(is);
    return l;
}

void write_head(std::ostream& os, const ProjectionHead& h) {
    io::write_matrix(os, h.weight);
    io::write_vector(os, h.bias);
}

ProjectionHead read_head(std::istream& is) {
    ProjectionHead h;
    h.weight = io::read_matrix(is);
    h.bias = io::read_vector(is);
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model,
                     uint64_t config_hash, const std::string& config_text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("save_checkpoint: cannot open " + tmp);
        io::write_magic(os, kCheckpointMagic);
        io::write_u32(os, kCheckpointVersion);
        io::write_u64(os, config_hash);
        io::write_string(os, config_text);
        write_dense(os, model.trunk.l1);
        write_dense(os, model.trunk.l2);
        write_dense(os, model.trunk.l3);
        write_head(os, model.pp_3d);
        write_head(os, model.sem_3d);
        write_head(os, model.pp_2d);
        write_head(os, model.sem_2d);
        if (!os) throw IoError("save_checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);
    io::expect_magic(is, kCheckpointMagic, "checkpoint");
    const uint32_t version = io::read_u32(is);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.config_hash = io::read_u64(is);
    ckpt.config_text = io::read_string(is);
    if (fnv1a64(ckpt.config_text) != ckpt.config_hash)
        throw FormatError("checkpoint: config hash mismatch");
    ckpt.model.trunk.l1 = read_dense(is);
    ckpt.model.trunk.l2 = read_dense(is);
    ckpt.model.trunk.l3 = read_dense(is);
    ckpt.model.pp_3d = read_head(is);
    ckpt.model.sem_3d = read_head(is);
    ckpt.model.pp_2d = read_head(is);
    ckpt.model.sem_2d = read_head(is);
    return ckpt;
}

}  // namespace vmfd
