#include "vmfd/losses.hpp"

#include <cmath>

namespace vmfd {

FeatureMatrix FeatureMatrix::from_rows(Mat m) {
    if (m.rows() < 1 || m.cols() < 2)
        throw std::invalid_argument("FeatureMatrix: need at least 1 row and 2 columns");
    for (int i = 0; i < m.rows(); ++i) {
        if (std::abs(m.row(i).norm() - 1.0) > kUnitNormTol)
            throw std::invalid_argument("FeatureMatrix: row " + std::to_string(i) +
                                        " is not unit norm");
    }
    return FeatureMatrix{std::move(m)};
}

namespace {

void check_pair_shapes(const FeatureMatrix& a, const FeatureMatrix& b, double tau,
                       const char* who) {
    if (tau <= 0.0 || !std::isfinite(tau))
        throw std::invalid_argument(std::string(who) + ": tau must be > 0");
    if (a.rows.rows() != b.rows.rows() || a.rows.cols() != b.rows.cols())
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

// Row-wise softmax of S with the row log-sum-exp returned separately.
void row_softmax(const Mat& scores, Mat& probs, Vec& row_lse) {
    const int m = static_cast<int>(scores.rows());
    probs.resize(m, m);
    row_lse.resize(m);
    for (int i = 0; i < m; ++i) {
        const double max_s = scores.row(i).maxCoeff();
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            probs(i, j) = std::exp(scores(i, j) - max_s);
            sum += probs(i, j);
        }
        probs.row(i) /= sum;
        row_lse[i] = max_s + std::log(sum);
    }
}

}  // namespace

LossOutput ppnce_loss(const FeatureMatrix& f3d, const FeatureMatrix& f2d,
                      double tau) {
    check_pair_shapes(f3d, f2d, tau, "ppnce_loss");
    const int m = f3d.count();

    const Mat scores = (f3d.rows * f2d.rows.transpose()) / tau;
    Mat probs;
    Vec row_lse;
    row_softmax(scores, probs, row_lse);

    double value = 0.0;
    for (int i = 0; i < m; ++i) value -= scores(i, i) - row_lse[i];
    value /= m;

    LossOutput out;
    out.value = value;
    const double scale = 1.0 / (m * tau);
    out.grad_3d = scale * (probs * f2d.rows - f2d.rows);
    out.grad_2d = scale * (probs.transpose() * f3d.rows - f3d.rows);
    return out;
}

LossOutput supervised_nce_loss(const FeatureMatrix& g3d,
                               const FeatureMatrix& g2d,
                               const std::vector<int>& labels, double tau) {
    check_pair_shapes(g3d, g2d, tau, "supervised_nce_loss");
    const int m = g3d.count();
    if (static_cast<int>(labels.size()) != m)
        throw std::invalid_argument("supervised_nce_loss: labels size mismatch");

    const Mat scores = (g3d.rows * g2d.rows.transpose()) / tau;
    Mat probs;
    Vec row_lse;
    row_softmax(scores, probs, row_lse);

    // Softmax restricted to each row's positive set A(i).
    Mat pos_probs = Mat::Zero(m, m);
    double value = 0.0;
    for (int i = 0; i < m; ++i) {
        double max_s = -std::numeric_limits<double>::infinity();
        int pos_count = 0;
        for (int a = 0; a < m; ++a) {
            if (labels[a] != labels[i]) continue;
            max_s = std::max(max_s, scores(i, a));
            ++pos_count;
        }
        double sum = 0.0;
        for (int a = 0; a < m; ++a) {
            if (labels[a] != labels[i]) continue;
            pos_probs(i, a) = std::exp(scores(i, a) - max_s);
            sum += pos_probs(i, a);
        }
        pos_probs.row(i) /= sum;
        const double pos_lse = max_s + std::log(sum);
        value -= pos_lse - std::log(static_cast<double>(pos_count)) - row_lse[i];
    }
    value /= m;

    LossOutput out;
    out.value = value;
    const double scale = 1.0 / (m * tau);
    out.grad_3d = scale * ((probs - pos_probs) * g2d.rows);
    out.grad_2d = scale * ((probs - pos_probs).transpose() * g3d.rows);
    return out;
}

LossOutput kl_vmf_loss(const FeatureMatrix& g3d, const std::vector<int>& labels,
                       const std::vector<VmfParams>& class_params,
                       const std::vector<bool>& initialized) {
    const int m = g3d.count();
    if (static_cast<int>(labels.size()) != m)
        throw std::invalid_argument("kl_vmf_loss: labels size mismatch");
    if (class_params.size() != initialized.size())
        throw std::invalid_argument("kl_vmf_loss: class parameter size mismatch");

    const int num_classes = static_cast<int>(class_params.size());
    int active = 0;
    for (int i = 0; i < m; ++i) {
        const int k = labels[i];
        if (k < 0 || k >= num_classes)
            throw std::invalid_argument("kl_vmf_loss: label out of range");
        if (initialized[k]) ++active;
    }

    LossOutput out;
    out.grad_3d = Mat::Zero(m, g3d.dim());
    out.grad_2d = Mat::Zero(m, g3d.dim());
    if (active == 0) return out;

    // The normalization constant only depends on the class.
    std::vector<double> log_const(num_classes, 0.0);
    for (int k = 0; k < num_classes; ++k) {
        if (initialized[k])
            log_const[k] = log_norm_const(g3d.dim(), class_params[k].kappa);
    }

    double value = 0.0;
    for (int i = 0; i < m; ++i) {
        const int k = labels[i];
        if (!initialized[k]) continue;
        const VmfParams& p = class_params[k];
        value += -log_const[k] - p.kappa * p.mu.dot(g3d.rows.row(i).transpose());
        out.grad_3d.row(i) = -(p.kappa / active) * p.mu.transpose();
    }
    out.value = value / active;
    return out;
}

CombinedLoss combined_loss(const LossOutput& l_ppnce, const LossOutput& l_sup,
                           const LossOutput& l_kl, double lambda1,
                           double lambda2, double lambda3) {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw std::invalid_argument("combined_loss: weights must be >= 0");
    CombinedLoss out;
    out.value = lambda1 * l_ppnce.value + lambda2 * l_sup.value + lambda3 * l_kl.value;
    out.grad_pp_3d = lambda1 * l_ppnce.grad_3d;
    out.grad_sem_3d = lambda2 * l_sup.grad_3d + lambda3 * l_kl.grad_3d;
    out.grad_pp_2d = lambda1 * l_ppnce.grad_2d;
    out.grad_sem_2d = lambda2 * l_sup.grad_2d;
    return out;
}

}  // namespace vmfd
