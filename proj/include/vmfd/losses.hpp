// Training objectives: instance-level and label-aware contrastive losses over
// matched point/pixel embeddings, and the per-class vMF alignment loss, each
// with exact analytic gradients.

#pragma once

#include <vector>

#include "vmfd/common.hpp"
#include "vmfd/vmf_stats.hpp"

namespace vmfd {

// M x C matrix whose rows live on the unit hypersphere.
struct FeatureMatrix {
    Mat rows;

    static FeatureMatrix from_rows(Mat m);  // validates row norms
    int count() const { return static_cast<int>(rows.rows()); }
    int dim() const { return static_cast<int>(rows.cols()); }
};

struct LossOutput {
    double value = 0.0;
    Mat grad_3d;  // d value / d 3D rows (pre-normalization-Jacobian)
    Mat grad_2d;  // d value / d 2D rows; consumed only when 2D heads train
};

// Instance-level contrastive loss: row i of the 3D matrix is attracted to
// row i of the 2D matrix and repelled from every other row.
LossOutput ppnce_loss(const FeatureMatrix& f3d, const FeatureMatrix& f2d,
                      double tau);

// Label-aware variant: the positive set A(i) holds every pair sharing i's
// weak label (including i). Reduces exactly to ppnce_loss when all labels
// are distinct.
LossOutput supervised_nce_loss(const FeatureMatrix& g3d,
                               const FeatureMatrix& g2d,
                               const std::vector<int>& labels, double tau);

// Cross-entropy of each embedding against its class vMF distribution,
// averaged over rows whose class is initialized. Parameters are frozen:
// no gradient flows to mu or kappa.
LossOutput kl_vmf_loss(const FeatureMatrix& g3d, const std::vector<int>& labels,
                       const std::vector<VmfParams>& class_params,
                       const std::vector<bool>& initialized);

// Weighted total with gradients kept separate per projection head.
struct CombinedLoss {
    double value = 0.0;
    Mat grad_pp_3d;
    Mat grad_sem_3d;
    Mat grad_pp_2d;
    Mat grad_sem_2d;
};

CombinedLoss combined_loss(const LossOutput& l_ppnce, const LossOutput& l_sup,
                           const LossOutput& l_kl, double lambda1,
                           double lambda2, double lambda3);

}  // namespace vmfd
