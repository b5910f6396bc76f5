#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vmfd/encoders.hpp"
#include "vmfd/losses.hpp"

using namespace vmfd;

namespace {

MlpParams zero_mlp(int d_in, int c3d) {
    MlpParams p;
    p.l1 = {Mat::Zero(kHiddenWidth, d_in), Vec::Zero(kHiddenWidth)};
    p.l2 = {Mat::Zero(kHiddenWidth, kHiddenWidth), Vec::Zero(kHiddenWidth)};
    p.l3 = {Mat::Zero(c3d, kHiddenWidth), Vec::Zero(c3d)};
    return p;
}

}  // namespace

TEST_CASE("encode_3d") {
    SUBCASE("zero weights produce zero outputs") {
        const MlpParams p = zero_mlp(4, 6);
        const Mat out = encode_3d(p, Mat::Random(3, 4));
        CHECK(out.norm() == 0.0);
    }
    SUBCASE("matches an explicit hand computation") {
        MlpParams p = zero_mlp(2, 2);
        p.l1.weight(0, 0) = 0.5;
        p.l1.weight(1, 1) = -0.25;
        p.l1.bias[0] = 0.1;
        p.l2.weight(0, 0) = 1.0;
        p.l2.weight(1, 1) = 2.0;
        p.l3.weight(0, 0) = 1.0;
        p.l3.weight(1, 1) = -1.0;
        p.l3.bias[1] = 0.05;
        Mat input(1, 2);
        input << 0.4, -0.8;

        const double a1_0 = std::tanh(0.5 * 0.4 + 0.1);
        const double a1_1 = std::tanh(-0.25 * -0.8);
        const double a2_0 = std::tanh(a1_0);
        const double a2_1 = std::tanh(2.0 * a1_1);
        const Mat out = encode_3d(p, input);
        CHECK(out(0, 0) == doctest::Approx(a2_0).epsilon(1e-15));
        CHECK(out(0, 1) == doctest::Approx(-a2_1 + 0.05).epsilon(1e-15));
    }
    SUBCASE("forward is deterministic") {
        const Model model = init_model(6, 16, 8, 8, 42);
        const Mat input = Mat::Random(5, 6);
        CHECK(encode_3d(model.trunk, input) == encode_3d(model.trunk, input));
    }
    SUBCASE("non-finite inputs rejected") {
        const MlpParams p = zero_mlp(2, 2);
        Mat bad(1, 2);
        bad << 1.0, std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(encode_3d(p, bad), std::invalid_argument);
    }
}

TEST_CASE("project_and_normalize") {
    SUBCASE("identity head keeps unit rows") {
        ProjectionHead head{Mat::Identity(3, 3), Vec::Zero(3)};
        Mat input(1, 3);
        input << 0, 1, 0;
        const FeatureMatrix out = project_and_normalize(head, input);
        CHECK(out.rows.row(0).transpose().isApprox(Vec::Unit(3, 1)));
    }
    SUBCASE("normalization of (3,4,0)") {
        ProjectionHead head{Mat::Identity(3, 3), Vec::Zero(3)};
        Mat input(1, 3);
        input << 3, 4, 0;
        const FeatureMatrix out = project_and_normalize(head, input);
        CHECK(out.rows(0, 0) == doctest::Approx(0.6));
        CHECK(out.rows(0, 1) == doctest::Approx(0.8));
    }
    SUBCASE("random heads emit unit rows") {
        Rng rng(9);
        const Model model = init_model(6, 16, 8, 8, 3);
        const Mat input = oracle::random_unit_rows(20, 16, rng);
        const FeatureMatrix out = project_and_normalize(model.pp_3d, input);
        for (int i = 0; i < out.count(); ++i)
            CHECK(out.rows.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("zero pre-normalization row is a degenerate embedding") {
        ProjectionHead head{Mat::Zero(3, 3), Vec::Zero(3)};
        CHECK_THROWS_AS(project_and_normalize(head, Mat::Random(2, 3)), std::domain_error);
    }
}

TEST_CASE("normalize_backward") {
    ProjectionHead head{Mat::Identity(3, 3), Vec::Zero(3)};
    Mat input(1, 3);
    input << 2, 0, 0;  // pre-norm length 2 along the first axis
    HeadCache cache;
    project_and_normalize(head, input, &cache);

    SUBCASE("orthogonal upstream is scaled by 1/|g|") {
        Mat upstream(1, 3);
        upstream << 0, 1, 0;
        const Mat back = normalize_backward(cache, upstream);
        CHECK(back(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(back(0, 0) == doctest::Approx(0.0));
    }
    SUBCASE("radial upstream is annihilated") {
        Mat upstream(1, 3);
        upstream << 3, 0, 0;
        CHECK(normalize_backward(cache, upstream).norm() == doctest::Approx(0.0));
    }
    SUBCASE("backward output is orthogonal to the forward output") {
        Rng rng(12);
        const Model model = init_model(6, 16, 8, 8, 5);
        const Mat feats = Mat::Random(10, 16);
        HeadCache hc;
        project_and_normalize(model.sem_3d, feats, &hc);
        const Mat upstream = Mat::Random(10, 8);
        const Mat back_pre = normalize_backward(hc, upstream);
        // orthogonality holds row-wise against the normalized output
        for (int i = 0; i < 10; ++i)
            CHECK(std::abs(back_pre.row(i).dot(hc.normalized.row(i))) <= 1e-9);
    }
}

TEST_CASE("init_model is seeded and bounded") {
    const Model a = init_model(6, 16, 8, 8, 77);
    const Model b = init_model(6, 16, 8, 8, 77);
    const Model c = init_model(6, 16, 8, 8, 78);
    CHECK(a.trunk.l1.weight == b.trunk.l1.weight);
    CHECK(a.pp_3d.weight == b.pp_3d.weight);
    CHECK(a.trunk.l1.weight != c.trunk.l1.weight);
    const double bound = 1.0 / std::sqrt(6.0);
    CHECK(a.trunk.l1.weight.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("full composite gradient matches finite differences") {
    Rng rng(31415);
    const int d_in = 6, c3d = 12, c = 6, d2 = 8, m = 4;
    Model model = init_model(d_in, c3d, c, d2, 2024);
    const Mat inputs = Mat::Random(m, d_in);
    const Mat f2_rows = oracle::random_unit_rows(m, c, rng);
    const Mat g2_rows = oracle::random_unit_rows(m, c, rng);
    const std::vector<int> labels = {0, 1, 0, 1};
    std::vector<VmfParams> class_params;
    class_params.emplace_back(oracle::random_unit_rows(1, c, rng).row(0).transpose(), 8.0);
    class_params.emplace_back(oracle::random_unit_rows(1, c, rng).row(0).transpose(), 3.0);
    const std::vector<bool> ready = {true, true};
    const double tau = 0.2, l1 = 1.0, l2 = 0.7, l3 = 0.4;

    const auto total_loss = [&]() {
        const Mat trunk_out = encode_3d(model.trunk, inputs);
        const FeatureMatrix f3 = project_and_normalize(model.pp_3d, trunk_out);
        const FeatureMatrix g3 = project_and_normalize(model.sem_3d, trunk_out);
        const LossOutput lp = ppnce_loss(f3, FeatureMatrix{f2_rows}, tau);
        const LossOutput ls = supervised_nce_loss(g3, FeatureMatrix{g2_rows}, labels, tau);
        const LossOutput lk = kl_vmf_loss(g3, labels, class_params, ready);
        return combined_loss(lp, ls, lk, l1, l2, l3).value;
    };

    // analytic gradients
    MlpCache trunk_cache;
    const Mat trunk_out = encode_3d(model.trunk, inputs, &trunk_cache);
    HeadCache pp_cache, sem_cache;
    const FeatureMatrix f3 = project_and_normalize(model.pp_3d, trunk_out, &pp_cache);
    const FeatureMatrix g3 = project_and_normalize(model.sem_3d, trunk_out, &sem_cache);
    const LossOutput lp = ppnce_loss(f3, FeatureMatrix{f2_rows}, tau);
    const LossOutput ls = supervised_nce_loss(g3, FeatureMatrix{g2_rows}, labels, tau);
    const LossOutput lk = kl_vmf_loss(g3, labels, class_params, ready);
    const CombinedLoss combined = combined_loss(lp, ls, lk, l1, l2, l3);
    const Backward3dResult grads =
        backward_3d(model.trunk, trunk_cache, model.pp_3d, pp_cache, model.sem_3d,
                    sem_cache, combined.grad_pp_3d, combined.grad_sem_3d);

    const auto check_mat = [&](Mat& param, const Mat& analytic) {
        const Mat fd = oracle::fd_gradient(total_loss, param);
        CHECK(oracle::grad_rel_err(analytic, fd) <= 1e-5);
    };
    const auto check_vec = [&](Vec& param, const Vec& analytic) {
        const Vec fd = oracle::fd_gradient(total_loss, param);
        CHECK(oracle::grad_rel_err(analytic, fd) <= 1e-5);
    };

    check_mat(model.trunk.l1.weight, grads.trunk.l1.weight);
    check_vec(model.trunk.l1.bias, grads.trunk.l1.bias);
    check_mat(model.trunk.l2.weight, grads.trunk.l2.weight);
    check_vec(model.trunk.l2.bias, grads.trunk.l2.bias);
    check_mat(model.trunk.l3.weight, grads.trunk.l3.weight);
    check_vec(model.trunk.l3.bias, grads.trunk.l3.bias);
    check_mat(model.pp_3d.weight, grads.pp_head.weight);
    check_vec(model.pp_3d.bias, grads.pp_head.bias);
    check_mat(model.sem_3d.weight, grads.sem_head.weight);
    check_vec(model.sem_3d.bias, grads.sem_head.bias);
}

TEST_CASE("head gradients are decoupled per objective") {
    Rng rng(999);
    const int m = 4, c3d = 10, c = 6;
    Model model = init_model(5, c3d, c, 8, 11);
    const Mat inputs = Mat::Random(m, 5);
    MlpCache trunk_cache;
    const Mat trunk_out = encode_3d(model.trunk, inputs, &trunk_cache);
    HeadCache pp_cache, sem_cache;
    project_and_normalize(model.pp_3d, trunk_out, &pp_cache);
    project_and_normalize(model.sem_3d, trunk_out, &sem_cache);

    const Mat upstream = Mat::Random(m, c);
    SUBCASE("pp-only upstream leaves the sem head untouched") {
        const Backward3dResult grads =
            backward_3d(model.trunk, trunk_cache, model.pp_3d, pp_cache, model.sem_3d,
                        sem_cache, upstream, Mat::Zero(m, c));
        CHECK(grads.sem_head.weight.norm() == 0.0);
        CHECK(grads.sem_head.bias.norm() == 0.0);
        CHECK(grads.pp_head.weight.norm() > 0.0);
        CHECK(grads.trunk.l1.weight.norm() > 0.0);  // trunk is shared
    }
    SUBCASE("sem-only upstream leaves the pp head untouched") {
        const Backward3dResult grads =
            backward_3d(model.trunk, trunk_cache, model.pp_3d, pp_cache, model.sem_3d,
                        sem_cache, Mat::Zero(m, c), upstream);
        CHECK(grads.pp_head.weight.norm() == 0.0);
        CHECK(grads.sem_head.weight.norm() > 0.0);
    }
}

TEST_CASE("image_features") {
    SceneConfig config;
    config.num_points = 256;
    config.seed = 5;
    const Scene scene = generate_scene(config);
    const auto pairs = build_pairs(scene);
    REQUIRE(pairs.size() >= 4);
    const Model model = init_model(6, 16, 8, config.pixel_descriptor_dim, 17);

    SUBCASE("norms are all 1 and lookups are deterministic") {
        const ImageFeatures feats = image_features(scene, pairs, model);
        for (int i = 0; i < feats.pp.count(); ++i) {
            CHECK(feats.pp.rows.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(feats.sem.rows.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
        }
        const ImageFeatures again = image_features(scene, pairs, model);
        CHECK(feats.pp.rows == again.pp.rows);
    }
    SUBCASE("pairs on the same pixel share identical features") {
        std::vector<PointPixelPair> twice = {pairs[0], pairs[0]};
        twice[1].point_index = pairs[1].point_index;  // different point, same pixel
        const ImageFeatures feats = image_features(scene, twice, model);
        CHECK(feats.pp.rows.row(0) == feats.pp.rows.row(1));
        CHECK(feats.raw.row(0) == feats.raw.row(1));
    }
    SUBCASE("out-of-bounds pixel is an error") {
        std::vector<PointPixelPair> bad = {pairs[0]};
        bad[0].u = scene.views[0].pixel_descriptors.width;
        CHECK_THROWS_AS(image_features(scene, bad, model), std::out_of_range);
    }
}

TEST_CASE("checkpoint round trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "vmfd_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.bin").string();

    const Model model = init_model(6, 16, 8, 8, 123);
    const std::string config_text = "train.epochs = 3\ntrain.seed = 9\n";
    save_checkpoint(path, model, fnv1a64(config_text), config_text);

    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.config_text == config_text);
    CHECK(loaded.model.trunk.l1.weight == model.trunk.l1.weight);
    CHECK(loaded.model.trunk.l3.bias == model.trunk.l3.bias);
    CHECK(loaded.model.sem_2d.weight == model.sem_2d.weight);

    SUBCASE("hash mismatch is rejected") {
        save_checkpoint(path, model, 12345, config_text);  // wrong hash on purpose
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    SUBCASE("bad magic is rejected") {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os << "NOTACKPT and some trailing bytes";
        os.close();
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
    fs::remove_all(dir);
}
