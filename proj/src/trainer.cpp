#include "vmfd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace vmfd {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_scenes < 1) throw ConfigError("train.batch_scenes must be >= 1");
    if (m_s < 2) throw ConfigError("train.m_s must be >= 2");
    if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("train.momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("train.alpha must be in (0, 1)");
    if (!(tau > 0.0)) throw ConfigError("train.tau must be > 0");
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw ConfigError("train.lambda weights must be >= 0");
    if (bandwidth_mode == BandwidthMode::kFixed && !(fixed_bandwidth > 0.0))
        throw ConfigError("sample.bandwidth fixed value must be > 0");
    if (kappa_max < 0.0) throw ConfigError("train.kappa_max must be >= 0");
    if (c3d < 2 || c_embed < 2) throw ConfigError("train.c3d and train.c_embed must be >= 2");
}

double cosine_lr(int step, int total_steps, double lr0) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be > 0");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("cosine_lr: step out of range");
    return lr0 * (1.0 + std::cos(M_PI * step / total_steps)) / 2.0;
}

void sgd_step(Mat& param, const Mat& grad, Mat& velocity, double lr, double momentum,
              double weight_decay) {
    velocity = momentum * velocity + (grad + weight_decay * param);
    param -= lr * velocity;
}

void sgd_step(Vec& param, const Vec& grad, Vec& velocity, double lr, double momentum,
              double weight_decay) {
    velocity = momentum * velocity + (grad + weight_decay * param);
    param -= lr * velocity;
}

namespace {

DenseGrads zeros_like(const DenseLayer& l) {
    return {Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())};
}

HeadGrads zeros_like(const ProjectionHead& h) {
    return {Mat::Zero(h.weight.rows(), h.weight.cols()), Vec::Zero(h.bias.size())};
}

void require_finite(const Mat& grad, const char* name) {
    if (!grad.allFinite())
        throw std::runtime_error(std::string("sgd_step: non-finite gradient in ") + name);
}

void require_finite(const Vec& grad, const char* name) {
    if (!grad.allFinite())
        throw std::runtime_error(std::string("sgd_step: non-finite gradient in ") + name);
}

void step_dense(DenseLayer& p, const DenseGrads& g, DenseGrads& v, double lr,
                double momentum, double wd, const char* name) {
    require_finite(g.weight, name);
    require_finite(g.bias, name);
    sgd_step(p.weight, g.weight, v.weight, lr, momentum, wd);
    sgd_step(p.bias, g.bias, v.bias, lr, momentum, wd);
}

void step_head(ProjectionHead& p, const HeadGrads& g, HeadGrads& v, double lr,
               double momentum, double wd, const char* name) {
    require_finite(g.weight, name);
    require_finite(g.bias, name);
    sgd_step(p.weight, g.weight, v.weight, lr, momentum, wd);
    sgd_step(p.bias, g.bias, v.bias, lr, momentum, wd);
}

}  // namespace

OptimizerState make_optimizer_state(const Model& model) {
    OptimizerState s;
    s.trunk.l1 = zeros_like(model.trunk.l1);
    s.trunk.l2 = zeros_like(model.trunk.l2);
    s.trunk.l3 = zeros_like(model.trunk.l3);
    s.pp_3d = zeros_like(model.pp_3d);
    s.sem_3d = zeros_like(model.sem_3d);
    s.pp_2d = zeros_like(model.pp_2d);
    s.sem_2d = zeros_like(model.sem_2d);
    return s;
}

VarianceMetrics variance_metrics(const Mat& features, const std::vector<int>& labels) {
    if (features.rows() != static_cast<int>(labels.size()))
        throw std::invalid_argument("variance_metrics: label count mismatch");
    std::map<int, std::vector<int>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
    if (by_class.size() < 2)
        throw std::invalid_argument("variance_metrics: need at least 2 classes");
    for (const auto& [k, rows] : by_class) {
        if (rows.size() < 2)
            throw std::invalid_argument("variance_metrics: class " + std::to_string(k) +
                                        " has fewer than 2 samples");
    }

    const int dim = static_cast<int>(features.cols());
    Mat class_means(static_cast<int>(by_class.size()), dim);
    double within = 0.0;
    int ci = 0;
    for (const auto& [k, rows] : by_class) {
        Vec mean = Vec::Zero(dim);
        for (int r : rows) mean += features.row(r).transpose();
        mean /= static_cast<double>(rows.size());
        class_means.row(ci) = mean.transpose();
        double ss = 0.0;
        for (int r : rows) ss += (features.row(r).transpose() - mean).squaredNorm();
        within += ss / static_cast<double>(rows.size());
        ++ci;
    }
    within /= static_cast<double>(by_class.size());

    const Vec global = class_means.colwise().mean().transpose();
    double between = 0.0;
    for (int k = 0; k < class_means.rows(); ++k)
        between += (class_means.row(k).transpose() - global).squaredNorm();
    between /= static_cast<double>(class_means.rows());
    return {within, between};
}

std::string metrics_header() {
    return "epoch\tloss_ppnce\tloss_sup\tloss_kl\tloss_total\tlr\tsigma_w_sq\tsigma_b_sq";
}

std::string metrics_row(const EpochMetrics& m) {
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g", m.epoch,
                  m.loss_ppnce, m.loss_sup, m.loss_kl, m.loss_total, m.lr, m.sigma_w_sq,
                  m.sigma_b_sq);
    return buf;
}

LinearClassifier fit_linear_probe(const Mat& features, const std::vector<int>& labels,
                                  int num_classes) {
    const int n = static_cast<int>(features.rows());
    if (n != static_cast<int>(labels.size()))
        throw std::invalid_argument("fit_linear_probe: label count mismatch");
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2)
        throw std::invalid_argument("fit_linear_probe: degenerate single-class label set");

    const int dim = static_cast<int>(features.cols());
    LinearClassifier clf{Mat::Zero(num_classes, dim), Vec::Zero(num_classes)};

    // Full-batch softmax regression, fixed budget so runs stay comparable.
    constexpr int kIters = 500;
    constexpr double kLr = 0.1;
    Mat onehot = Mat::Zero(n, num_classes);
    for (int i = 0; i < n; ++i) onehot(i, labels[i]) = 1.0;

    for (int it = 0; it < kIters; ++it) {
        Mat logits = (features * clf.weight.transpose()).rowwise() + clf.bias.transpose();
        for (int i = 0; i < n; ++i) {
            const double mx = logits.row(i).maxCoeff();
            logits.row(i) = (logits.row(i).array() - mx).exp();
            logits.row(i) /= logits.row(i).sum();
        }
        const Mat diff = (logits - onehot) / static_cast<double>(n);
        clf.weight -= kLr * (diff.transpose() * features);
        clf.bias -= kLr * diff.colwise().sum().transpose();
    }
    return clf;
}

ProbeResult evaluate_classifier(const LinearClassifier& clf, const Mat& features,
                                const std::vector<int>& labels, int num_classes) {
    const int n = static_cast<int>(features.rows());
    if (n != static_cast<int>(labels.size()))
        throw std::invalid_argument("evaluate_classifier: label count mismatch");
    std::vector<int> predicted(n);
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        Vec logits = clf.weight * features.row(i).transpose() + clf.bias;
        int arg = 0;
        logits.maxCoeff(&arg);
        predicted[i] = arg;
        if (arg == labels[i]) ++correct;
    }

    std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    for (int i = 0; i < n; ++i) {
        if (predicted[i] == labels[i]) {
            tp[labels[i]]++;
        } else {
            fp[predicted[i]]++;
            fn[labels[i]]++;
        }
    }
    ProbeResult out;
    out.accuracy = static_cast<double>(correct) / n;
    out.per_class_iou.assign(num_classes, 0.0);
    double iou_sum = 0.0;
    int present = 0;
    for (int k = 0; k < num_classes; ++k) {
        const long unions = tp[k] + fp[k] + fn[k];
        out.per_class_iou[k] = unions > 0 ? static_cast<double>(tp[k]) / unions : 0.0;
        if (tp[k] + fn[k] > 0) {  // class appears in the labels
            iou_sum += out.per_class_iou[k];
            ++present;
        }
    }
    out.mean_iou = present > 0 ? iou_sum / present : 0.0;
    return out;
}

ProbeResult linear_probe(const Mat& features, const std::vector<int>& labels,
                         int num_classes) {
    return evaluate_classifier(fit_linear_probe(features, labels, num_classes), features,
                               labels, num_classes);
}

int count_classes(const std::vector<Scene>& scenes) {
    int max_label = 0;
    for (const auto& scene : scenes) {
        for (int32_t l : scene.true_labels) max_label = std::max(max_label, static_cast<int>(l));
        for (const auto& view : scene.views)
            for (int32_t l : view.weak_labels.data)
                max_label = std::max(max_label, static_cast<int>(l));
    }
    return max_label + 1;
}

TrainContext make_context(const std::vector<Scene>& scenes, const TrainConfig& config,
                          const Model& model, int num_classes) {
    if (scenes.empty()) throw std::invalid_argument("make_context: no scenes");
    TrainContext ctx;
    ctx.scenes_per_epoch = std::min<int>(config.batch_scenes, static_cast<int>(scenes.size()));
    ctx.total_steps = config.epochs * ctx.scenes_per_epoch;
    ctx.opt = make_optimizer_state(model);
    ctx.class_params.assign(num_classes, VmfParams{});
    ctx.class_ready.assign(num_classes, false);

    ctx.scenes.resize(ctx.scenes_per_epoch);
    for (int s = 0; s < ctx.scenes_per_epoch; ++s) {
        auto& cache = ctx.scenes[s];
        cache.pairs = build_pairs(scenes[s]);
        if (cache.pairs.size() < 2)
            throw std::runtime_error("make_context: scene " + std::to_string(s) +
                                     " produced fewer than 2 point-pixel pairs");
        double bandwidth = config.fixed_bandwidth;
        if (config.bandwidth_mode == TrainConfig::BandwidthMode::kSilverman) {
            std::vector<double> distances;
            distances.reserve(cache.pairs.size());
            for (const auto& p : cache.pairs) distances.push_back(p.distance);
            bandwidth = silverman_bandwidth(distances);
        }
        cache.weights = compute_weights(cache.pairs, bandwidth, config.sampling_mode,
                                        config.kde_prescaled_kernel);
    }
    return ctx;
}

namespace {

void refresh_class_params(const ClassStatistics& stats, const TrainConfig& config,
                          TrainContext& ctx) {
    const int num_classes = stats.num_classes();
    for (int k = 0; k < num_classes; ++k) {
        ctx.class_ready[k] = false;
        if (!stats.initialized[k]) continue;
        const Vec zbar = stats.zbar.row(k).transpose();
        if (zbar.norm() <= 1e-12) continue;  // degenerate statistic, skip the class
        EstimatedParams est = estimate_params(zbar);
        if (config.kappa_max > 0.0)
            est.params.kappa = std::min(est.params.kappa, config.kappa_max);
        ctx.class_params[k] = std::move(est.params);
        ctx.class_ready[k] = true;
    }
}

}  // namespace

EpochMetrics train_epoch(const std::vector<Scene>& scenes, Model& model,
                         ClassStatistics& stats, const TrainConfig& config,
                         TrainContext& ctx, Rng& rng, int epoch) {
    refresh_class_params(stats, config, ctx);

    const int num_classes = stats.num_classes();
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = cosine_lr(ctx.global_step, ctx.total_steps, config.lr0);

    std::vector<Vec> epoch_sem_rows;
    std::vector<int> epoch_true_labels;

    for (int s = 0; s < ctx.scenes_per_epoch; ++s) {
        const Scene& scene = scenes[s];
        const auto& cache = ctx.scenes[s];
        const int m_eff = std::min<int>(config.m_s, static_cast<int>(cache.pairs.size()));
        const std::vector<int> chosen = draw_pairs(cache.weights, m_eff, rng);

        Mat inputs(m_eff, scene.point_descriptors.cols());
        std::vector<PointPixelPair> batch_pairs(m_eff);
        std::vector<int> weak_labels(m_eff);
        for (int i = 0; i < m_eff; ++i) {
            const auto& pair = cache.pairs[chosen[i]];
            batch_pairs[i] = pair;
            inputs.row(i) = scene.point_descriptors.row(pair.point_index);
            weak_labels[i] = pair.weak_label;
        }

        MlpCache trunk_cache;
        const Mat trunk_out = encode_3d(model.trunk, inputs, &trunk_cache);
        HeadCache pp_cache, sem_cache;
        const FeatureMatrix f3d = project_and_normalize(model.pp_3d, trunk_out, &pp_cache);
        const FeatureMatrix g3d = project_and_normalize(model.sem_3d, trunk_out, &sem_cache);
        const ImageFeatures img = image_features(scene, batch_pairs, model);

        // Stage 1: update the per-class EMA means from this batch.
        Mat class_means = Mat::Zero(num_classes, config.c_embed);
        std::vector<int> class_counts(num_classes, 0);
        for (int i = 0; i < m_eff; ++i) {
            class_means.row(weak_labels[i]) += g3d.rows.row(i);
            class_counts[weak_labels[i]]++;
        }
        for (int k = 0; k < num_classes; ++k)
            if (class_counts[k] > 0) class_means.row(k) /= class_counts[k];
        ema_update(stats, class_means, class_counts);

        // Stage 2: losses against the epoch-start parameter snapshot.
        const LossOutput l_pp = ppnce_loss(f3d, img.pp, config.tau);
        const LossOutput l_sup = supervised_nce_loss(g3d, img.sem, weak_labels, config.tau);
        const LossOutput l_kl =
            kl_vmf_loss(g3d, weak_labels, ctx.class_params, ctx.class_ready);
        const CombinedLoss combined = combined_loss(l_pp, l_sup, l_kl, config.lambda1,
                                                    config.lambda2, config.lambda3);

        const Backward3dResult grads =
            backward_3d(model.trunk, trunk_cache, model.pp_3d, pp_cache, model.sem_3d,
                        sem_cache, combined.grad_pp_3d, combined.grad_sem_3d);

        const double lr = cosine_lr(ctx.global_step, ctx.total_steps, config.lr0);
        step_dense(model.trunk.l1, grads.trunk.l1, ctx.opt.trunk.l1, lr, config.momentum,
                   config.weight_decay, "trunk.l1");
        step_dense(model.trunk.l2, grads.trunk.l2, ctx.opt.trunk.l2, lr, config.momentum,
                   config.weight_decay, "trunk.l2");
        step_dense(model.trunk.l3, grads.trunk.l3, ctx.opt.trunk.l3, lr, config.momentum,
                   config.weight_decay, "trunk.l3");
        step_head(model.pp_3d, grads.pp_head, ctx.opt.pp_3d, lr, config.momentum,
                  config.weight_decay, "pp_3d");
        step_head(model.sem_3d, grads.sem_head, ctx.opt.sem_3d, lr, config.momentum,
                  config.weight_decay, "sem_3d");
        if (config.train_2d_heads) {
            const HeadGrads pp2d = head_backward(model.pp_2d, img.pp_cache,
                                                 combined.grad_pp_2d, nullptr);
            const HeadGrads sem2d = head_backward(model.sem_2d, img.sem_cache,
                                                  combined.grad_sem_2d, nullptr);
            step_head(model.pp_2d, pp2d, ctx.opt.pp_2d, lr, config.momentum,
                      config.weight_decay, "pp_2d");
            step_head(model.sem_2d, sem2d, ctx.opt.sem_2d, lr, config.momentum,
                      config.weight_decay, "sem_2d");
        }
        ++ctx.global_step;

        metrics.loss_ppnce += l_pp.value;
        metrics.loss_sup += l_sup.value;
        metrics.loss_kl += l_kl.value;
        metrics.loss_total += combined.value;
        for (int i = 0; i < m_eff; ++i) {
            epoch_sem_rows.push_back(g3d.rows.row(i).transpose());
            epoch_true_labels.push_back(scene.true_labels[batch_pairs[i].point_index]);
        }
    }

    metrics.loss_ppnce /= ctx.scenes_per_epoch;
    metrics.loss_sup /= ctx.scenes_per_epoch;
    metrics.loss_kl /= ctx.scenes_per_epoch;
    metrics.loss_total /= ctx.scenes_per_epoch;

    Mat sem(static_cast<int>(epoch_sem_rows.size()), config.c_embed);
    for (size_t i = 0; i < epoch_sem_rows.size(); ++i) sem.row(static_cast<int>(i)) = epoch_sem_rows[i].transpose();
    try {
        const VarianceMetrics vm = variance_metrics(sem, epoch_true_labels);
        metrics.sigma_w_sq = vm.sigma_w_sq;
        metrics.sigma_b_sq = vm.sigma_b_sq;
    } catch (const std::invalid_argument&) {
        metrics.sigma_w_sq = std::numeric_limits<double>::quiet_NaN();
        metrics.sigma_b_sq = std::numeric_limits<double>::quiet_NaN();
    }
    return metrics;
}

TrainResult run_training(const std::vector<Scene>& scenes, const TrainConfig& config) {
    config.validate();
    if (scenes.empty()) throw std::invalid_argument("run_training: no scenes");
    const int d_in = static_cast<int>(scenes.front().point_descriptors.cols());
    const int d2 = scenes.front().views.empty()
                       ? 0
                       : scenes.front().views.front().pixel_descriptors.depth;
    if (d2 < 2) throw std::invalid_argument("run_training: scenes carry no pixel descriptors");
    const int num_classes = count_classes(scenes);

    TrainResult result;
    result.num_classes = num_classes;
    result.model = init_model(d_in, config.c3d, config.c_embed, d2,
                              derive_seed(config.seed, 0x6d6f64656cull));  // "model"
    result.stats = ClassStatistics(num_classes, config.c_embed, config.alpha);
    TrainContext ctx = make_context(scenes, config, result.model, num_classes);

    Rng draw_rng(derive_seed(config.seed, 0x6472617773ull));  // "draws"
    result.history.reserve(config.epochs);
    for (int epoch = 0; epoch < config.epochs; ++epoch)
        result.history.push_back(train_epoch(scenes, result.model, result.stats, config,
                                             ctx, draw_rng, epoch));

    const EvalFeatures ev = eval_features(scenes, result.model);
    try {
        result.final_variance = variance_metrics(ev.sem, ev.true_labels);
    } catch (const std::invalid_argument&) {
        result.final_variance = {std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN()};
    }
    return result;
}

EvalFeatures eval_features(const std::vector<Scene>& scenes, const Model& model) {
    EvalFeatures out;
    std::vector<Mat> trunk_blocks, sem_blocks;
    int total = 0;
    for (size_t s = 0; s < scenes.size(); ++s) {
        const auto pairs = build_pairs(scenes[s]);
        if (pairs.empty()) continue;
        Mat inputs(static_cast<int>(pairs.size()), scenes[s].point_descriptors.cols());
        for (size_t i = 0; i < pairs.size(); ++i) {
            inputs.row(static_cast<int>(i)) =
                scenes[s].point_descriptors.row(pairs[i].point_index);
            out.true_labels.push_back(scenes[s].true_labels[pairs[i].point_index]);
            out.scene_index.push_back(static_cast<int>(s));
            out.point_index.push_back(pairs[i].point_index);
        }
        const Mat trunk = encode_3d(model.trunk, inputs, nullptr);
        const FeatureMatrix sem = project_and_normalize(model.sem_3d, trunk, nullptr);
        total += static_cast<int>(pairs.size());
        trunk_blocks.push_back(trunk);
        sem_blocks.push_back(sem.rows);
    }
    if (total == 0) throw std::runtime_error("eval_features: no valid pairs in any scene");
    out.trunk.resize(total, trunk_blocks.front().cols());
    out.sem.resize(total, sem_blocks.front().cols());
    int row = 0;
    for (size_t b = 0; b < trunk_blocks.size(); ++b) {
        out.trunk.middleRows(row, trunk_blocks[b].rows()) = trunk_blocks[b];
        out.sem.middleRows(row, sem_blocks[b].rows()) = sem_blocks[b];
        row += static_cast<int>(trunk_blocks[b].rows());
    }
    return out;
}

ProbeResult probe_heldout(const std::vector<Scene>& scenes, const Model& model,
                          uint64_t split_seed, VarianceMetrics* heldout_variance) {
    const EvalFeatures ev = eval_features(scenes, model);
    const int num_classes = count_classes(scenes);

    std::vector<int> fit_rows, eval_rows;
    for (int r = 0; r < ev.trunk.rows(); ++r) {
        const uint64_t h = derive_seed(split_seed, static_cast<uint64_t>(ev.scene_index[r]),
                                       static_cast<uint64_t>(ev.point_index[r]));
        (h & 1 ? fit_rows : eval_rows).push_back(r);
    }
    if (fit_rows.empty() || eval_rows.empty())
        throw std::runtime_error("probe_heldout: degenerate split");

    const auto gather = [&](const std::vector<int>& rows, const Mat& src, Mat& dst,
                            std::vector<int>& labels) {
        dst.resize(static_cast<int>(rows.size()), src.cols());
        labels.resize(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            dst.row(static_cast<int>(i)) = src.row(rows[i]);
            labels[i] = ev.true_labels[rows[i]];
        }
    };

    Mat fit_feats, eval_feats;
    std::vector<int> fit_labels, eval_labels;
    gather(fit_rows, ev.trunk, fit_feats, fit_labels);
    gather(eval_rows, ev.trunk, eval_feats, eval_labels);

    const LinearClassifier clf = fit_linear_probe(fit_feats, fit_labels, num_classes);
    ProbeResult result = evaluate_classifier(clf, eval_feats, eval_labels, num_classes);

    if (heldout_variance) {
        Mat eval_sem;
        std::vector<int> eval_sem_labels;
        gather(eval_rows, ev.sem, eval_sem, eval_sem_labels);
        try {
            *heldout_variance = variance_metrics(eval_sem, eval_sem_labels);
        } catch (const std::invalid_argument&) {
            *heldout_variance = {std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::quiet_NaN()};
        }
    }
    return result;
}

}  // namespace vmfd
