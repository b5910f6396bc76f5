// Density and category aware sampling of point-pixel pairs: Gaussian KDE over
// sensor distances, inverse density/frequency weighting, and deterministic
// weighted draws without replacement.

#pragma once

#include <vector>

#include "vmfd/common.hpp"
#include "vmfd/correspondence.hpp"

namespace vmfd {

struct DensityModel {
    std::vector<double> distances;
    double bandwidth = 1.0;
    // Alternate reading in which the kernel carries its own 1/h scale on top
    // of the 1/(M h) prefactor. Only rescales densities by a constant, so
    // normalized sampling weights are unaffected.
    bool prescaled_kernel = false;
};

// ln f_h(d); evaluated with log-sum-exp so far-tail queries stay finite.
double kde_log_density(double query, const DensityModel& model);
double kde_density(double query, const DensityModel& model);

// Silverman's rule h = 1.06 * sigma * M^(-1/5). Degenerate inputs (all
// distances equal) fall back to h = 1, which leaves weights uniform anyway.
double silverman_bandwidth(const std::vector<double>& distances);

enum class SamplingMode { kRandom, kDensity, kCategory, kDcas };

struct SamplingWeights {
    std::vector<double> weights;       // normalized, strictly positive
    std::vector<int> category_counts;  // pairs per weak label
};

// Weights per pair: kDcas uses 1/(f_h(d_i) * |A(i)|) where |A(i)| counts the
// pairs sharing i's weak label; kDensity and kCategory keep one factor each;
// kRandom is uniform. Raw weights are normalized to sum 1.
SamplingWeights compute_weights(const std::vector<PointPixelPair>& pairs,
                                double bandwidth,
                                SamplingMode mode = SamplingMode::kDcas,
                                bool prescaled_kernel = false);

// m_s distinct indices by weighted sampling without replacement
// (exponential-key selection). Deterministic given the generator state.
std::vector<int> draw_pairs(const SamplingWeights& weights, int m_s, Rng& rng);

}  // namespace vmfd
