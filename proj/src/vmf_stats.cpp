#include "vmfd/vmf_stats.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace vmfd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// All series terms are positive; collect them and reduce against the peak so
// the result carries no log-sum-exp accumulation error.
double log_bessel_i_series(double nu, double x) {
    const double log_half_x = std::log(0.5 * x);
    // Term maximum sits near m* = (sqrt(nu^2 + x^2) - nu)/2.
    const double peak = 0.5 * (std::sqrt(nu * nu + x * x) - nu);

    std::vector<double> log_terms;
    log_terms.reserve(256);
    double t_max = kNegInf;
    for (int m = 0;; ++m) {
        const double t = (2.0 * m + nu) * log_half_x - std::lgamma(m + 1.0) -
                         std::lgamma(nu + m + 1.0);
        log_terms.push_back(t);
        t_max = std::max(t_max, t);
        if (m > peak && t < t_max - 45.0) break;
    }
    long double sum = 0.0L;
    for (double t : log_terms) sum += expl(static_cast<long double>(t - t_max));
    return t_max + static_cast<double>(logl(sum));
}

// Large-argument expansion I_nu(x) ~ e^x/sqrt(2 pi x) * sum_k (-1)^k a_k/x^k.
// The regime switch guarantees 4 nu^2 / (8 x) < 1, so the first terms decay;
// stop at the smallest term since the series is asymptotic.
double log_bessel_i_asymptotic(double nu, double x) {
    const double four_nu_sq = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    double prev_mag = 1.0;
    for (int k = 1; k <= 60; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= -(four_nu_sq - odd * odd) / (8.0 * k * x);
        const double mag = std::abs(term);
        if (mag > prev_mag) break;
        sum += term;
        prev_mag = mag;
        if (mag < 1e-18 * std::abs(sum)) break;
    }
    return x - 0.5 * std::log(2.0 * M_PI * x) + std::log(sum);
}

}  // namespace

double log_bessel_i(double order, double x) {
    if (order < 0.0 || !std::isfinite(order))
        throw std::domain_error("log_bessel_i: order must be >= 0");
    if (x < 0.0 || !std::isfinite(x))
        throw std::domain_error("log_bessel_i: x must be finite and >= 0");
    if (x == 0.0) return order == 0.0 ? 0.0 : kNegInf;
    if (x <= 50.0 * (order + 1.0)) return log_bessel_i_series(order, x);
    return log_bessel_i_asymptotic(order, x);
}

double log_norm_const(int dim, double kappa) {
    if (dim < 2) throw std::domain_error("log_norm_const: dim must be >= 2");
    if (kappa < 0.0 || !std::isfinite(kappa))
        throw std::domain_error("log_norm_const: kappa must be finite and >= 0");
    const double half_dim = 0.5 * dim;
    if (kappa == 0.0)
        return std::lgamma(half_dim) - std::log(2.0) - half_dim * std::log(M_PI);
    const double nu = half_dim - 1.0;
    return nu * std::log(kappa) - half_dim * std::log(2.0 * M_PI) -
           log_bessel_i(nu, kappa);
}

VmfParams::VmfParams(Vec mu_in, double kappa_in)
    : mu(std::move(mu_in)), kappa(kappa_in) {
    if (mu.size() < 2) throw std::invalid_argument("VmfParams: dim must be >= 2");
    if (!is_unit(mu)) throw std::invalid_argument("VmfParams: mu must be unit norm");
    if (kappa < 0.0 || !std::isfinite(kappa))
        throw std::invalid_argument("VmfParams: kappa must be finite and >= 0");
}

double vmf_log_pdf(const Vec& z, const VmfParams& params) {
    if (z.size() != params.mu.size())
        throw std::invalid_argument("vmf_log_pdf: dimension mismatch");
    return log_norm_const(static_cast<int>(z.size()), params.kappa) +
           params.kappa * params.mu.dot(z);
}

EstimatedParams estimate_params(const Vec& zbar_k) {
    if (zbar_k.size() < 2)
        throw std::invalid_argument("estimate_params: dim must be >= 2");
    const int dim = static_cast<int>(zbar_k.size());
    const double norm = zbar_k.norm();
    if (norm == 0.0)
        throw std::domain_error("estimate_params: zero resultant has no mean direction");

    EstimatedParams out;
    double rbar = norm;
    if (rbar >= 1.0) {
        rbar = 1.0 - 1e-6;  // the concentration estimate diverges at R = 1
        out.clamped = true;
    }
    out.params.mu = zbar_k / norm;
    out.params.kappa = rbar * (dim - rbar * rbar) / (1.0 - rbar * rbar);
    return out;
}

ClassStatistics::ClassStatistics(int num_classes, int dim, double alpha_in)
    : zbar(Mat::Zero(num_classes, dim)),
      initialized(num_classes, false),
      alpha(alpha_in) {
    if (num_classes < 1 || dim < 2)
        throw std::invalid_argument("ClassStatistics: bad shape");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("ClassStatistics: alpha must be in (0,1)");
}

void ema_update(ClassStatistics& stats, const Mat& batch_class_means,
                const std::vector<int>& batch_class_counts) {
    const int num_classes = stats.num_classes();
    if (batch_class_means.rows() != num_classes ||
        batch_class_means.cols() != stats.dim() ||
        static_cast<int>(batch_class_counts.size()) != num_classes)
        throw std::invalid_argument("ema_update: dimension mismatch");

    for (int k = 0; k < num_classes; ++k) {
        if (batch_class_counts[k] <= 0) continue;
        if (!stats.initialized[k]) {
            stats.zbar.row(k) = batch_class_means.row(k);
            stats.initialized[k] = true;
        } else {
            stats.zbar.row(k) = stats.alpha * stats.zbar.row(k) +
                                (1.0 - stats.alpha) * batch_class_means.row(k);
        }
    }
}

namespace {

// Unit vector uniform on the subsphere orthogonal to mu.
Vec sample_orthonormal_to(const Vec& mu, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int dim = static_cast<int>(mu.size());
    Vec v(dim);
    for (;;) {
        for (int d = 0; d < dim; ++d) v[d] = gauss(rng);
        v -= v.dot(mu) * mu;
        const double n = v.norm();
        if (n > 1e-12) return v / n;
    }
}

}  // namespace

Mat sample_vmf(const VmfParams& params, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_vmf: n must be >= 1");
    const int dim = static_cast<int>(params.mu.size());
    Mat out(n, dim);

    if (params.kappa == 0.0) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            Vec v(dim);
            do {
                for (int d = 0; d < dim; ++d) v[d] = gauss(rng);
            } while (v.norm() <= 1e-12);
            out.row(i) = v / v.norm();
        }
        return out;
    }

    const double kappa = params.kappa;
    const double m = dim - 1.0;
    const double b = m / (std::sqrt(4.0 * kappa * kappa + m * m) + 2.0 * kappa);
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + m * std::log(1.0 - x0 * x0);
    std::gamma_distribution<double> gamma_half_m(0.5 * m, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (int i = 0; i < n; ++i) {
        double w = 0.0;
        for (;;) {
            const double g1 = gamma_half_m(rng);
            const double g2 = gamma_half_m(rng);
            const double z = g1 / (g1 + g2);  // Beta(m/2, m/2)
            w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            const double u = unif(rng);
            if (kappa * w + m * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
        }
        const Vec v = sample_orthonormal_to(params.mu, rng);
        out.row(i) = w * params.mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * v;
    }
    return out;
}

}  // namespace vmfd
