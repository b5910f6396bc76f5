#include "vmfd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vmfd {

namespace {
constexpr double kLogInvSqrt2Pi = -0.9189385332046727;  // ln(1/sqrt(2 pi))
}

double kde_log_density(double query, const DensityModel& model) {
    if (model.bandwidth <= 0.0 || !std::isfinite(model.bandwidth))
        throw std::invalid_argument("kde_log_density: bandwidth must be > 0");
    if (model.distances.empty())
        throw std::invalid_argument("kde_log_density: empty distance set");

    const double h = model.bandwidth;
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(model.distances.size());
    for (size_t i = 0; i < model.distances.size(); ++i) {
        const double u = (query - model.distances[i]) / h;
        terms[i] = -0.5 * u * u;
        max_term = std::max(max_term, terms[i]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    double log_f = kLogInvSqrt2Pi + max_term + std::log(sum) -
                   std::log(static_cast<double>(model.distances.size())) - std::log(h);
    if (model.prescaled_kernel) log_f -= std::log(h);
    return log_f;
}

double kde_density(double query, const DensityModel& model) {
    return std::exp(kde_log_density(query, model));
}

double silverman_bandwidth(const std::vector<double>& distances) {
    const size_t m = distances.size();
    if (m == 0) throw std::invalid_argument("silverman_bandwidth: empty distance set");
    if (m == 1) return 1.0;
    const double mean = std::accumulate(distances.begin(), distances.end(), 0.0) / m;
    double ss = 0.0;
    for (double d : distances) ss += (d - mean) * (d - mean);
    const double sigma = std::sqrt(ss / (m - 1));
    if (sigma <= 0.0) return 1.0;
    return 1.06 * sigma * std::pow(static_cast<double>(m), -0.2);
}

SamplingWeights compute_weights(const std::vector<PointPixelPair>& pairs,
                                double bandwidth, SamplingMode mode,
                                bool prescaled_kernel) {
    if (pairs.empty()) throw std::invalid_argument("compute_weights: no pairs");

    int max_label = 0;
    for (const auto& p : pairs) max_label = std::max(max_label, p.weak_label);
    SamplingWeights out;
    out.category_counts.assign(max_label + 1, 0);
    for (const auto& p : pairs) out.category_counts[p.weak_label]++;

    const size_t m = pairs.size();
    std::vector<double> log_raw(m, 0.0);
    if (mode == SamplingMode::kDensity || mode == SamplingMode::kDcas) {
        DensityModel model;
        model.bandwidth = bandwidth;
        model.prescaled_kernel = prescaled_kernel;
        model.distances.reserve(m);
        for (const auto& p : pairs) model.distances.push_back(p.distance);
        for (size_t i = 0; i < m; ++i)
            log_raw[i] -= kde_log_density(pairs[i].distance, model);
    }
    if (mode == SamplingMode::kCategory || mode == SamplingMode::kDcas) {
        for (size_t i = 0; i < m; ++i)
            log_raw[i] -= std::log(static_cast<double>(out.category_counts[pairs[i].weak_label]));
    }

    // Softmax-style normalization keeps every weight strictly positive.
    const double max_log = *std::max_element(log_raw.begin(), log_raw.end());
    out.weights.resize(m);
    double sum = 0.0;
    for (size_t i = 0; i < m; ++i) {
        out.weights[i] = std::exp(log_raw[i] - max_log);
        sum += out.weights[i];
    }
    for (double& w : out.weights) w /= sum;
    return out;
}

std::vector<int> draw_pairs(const SamplingWeights& weights, int m_s, Rng& rng) {
    const int m = static_cast<int>(weights.weights.size());
    if (m_s < 1 || m_s > m)
        throw std::invalid_argument("draw_pairs: need 1 <= m_s <= number of pairs");

    // Exponential-key scheme: index i gets key Exp(1)/w_i; the m_s smallest
    // keys have the without-replacement sampling distribution.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, int>> keyed(m);
    for (int i = 0; i < m; ++i) {
        double u;
        do {
            u = unif(rng);
        } while (u <= 0.0);
        keyed[i] = {-std::log(u) / weights.weights[i], i};
    }
    std::partial_sort(keyed.begin(), keyed.begin() + m_s, keyed.end());
    std::vector<int> indices(m_s);
    for (int i = 0; i < m_s; ++i) indices[i] = keyed[i].second;
    return indices;
}

}  // namespace vmfd
