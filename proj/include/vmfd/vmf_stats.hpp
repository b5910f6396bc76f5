// Directional statistics on the unit hypersphere: von Mises-Fisher density,
// log-domain Bessel functions, moment-based parameter estimation, EMA class
// tracking and a rejection sampler.

#pragma once

#include <vector>

#include "vmfd/common.hpp"

namespace vmfd {

// Mean direction and concentration of one vMF distribution.
struct VmfParams {
    Vec mu;
    double kappa = 0.0;

    VmfParams() = default;
    VmfParams(Vec mu_in, double kappa_in);
};

// Per-class EMA of embedding means. Rows of zbar are convex combinations of
// unit vectors, so their norm never exceeds 1.
struct ClassStatistics {
    Mat zbar;                       // K x C
    std::vector<bool> initialized;  // per class
    double alpha = 0.99;

    ClassStatistics() = default;
    ClassStatistics(int num_classes, int dim, double alpha_in);

    int num_classes() const { return static_cast<int>(zbar.rows()); }
    int dim() const { return static_cast<int>(zbar.cols()); }
};

// ln I_nu(x) for nu >= 0, x >= 0. Log-domain power series below
// x = 50*(nu+1), large-argument asymptotic expansion above.
double log_bessel_i(double order, double x);

// ln of the vMF normalization constant for dimension C and concentration
// kappa; at kappa = 0 returns the log uniform density on the (C-1)-sphere.
double log_norm_const(int dim, double kappa);

double vmf_log_pdf(const Vec& z, const VmfParams& params);

struct EstimatedParams {
    VmfParams params;
    bool clamped = false;  // resultant length hit the 1 - 1e-6 guard
};

// Moment estimate from an EMA mean: mu by normalization, kappa by the
// Sra approximation kappa = R(C - R^2)/(1 - R^2) with R = |zbar|.
EstimatedParams estimate_params(const Vec& zbar_k);

// Stage-1 statistics update. Classes with count 0 are untouched; the first
// batch containing a class initializes its mean directly.
void ema_update(ClassStatistics& stats, const Mat& batch_class_means,
                const std::vector<int>& batch_class_counts);

// n i.i.d. draws, one per row. Wood's rejection scheme on the tangent-normal
// decomposition; kappa = 0 falls back to the uniform sphere.
Mat sample_vmf(const VmfParams& params, int n, Rng& rng);

}  // namespace vmfd
