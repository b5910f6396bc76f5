#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vmfd/vmf_stats.hpp"

using namespace vmfd;

TEST_CASE("log_bessel_i at x = 0") {
    CHECK(log_bessel_i(0.0, 0.0) == 0.0);  // I_0(0) = 1
    CHECK(log_bessel_i(1.0, 0.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("log_bessel_i half-order closed form") {
    // I_{1/2}(x) = sqrt(2/(pi x)) sinh x
    for (double x : {0.25, 1.0, 3.0, 10.0, 40.0}) {
        const double expected = std::log(std::sqrt(2.0 / (M_PI * x)) * std::sinh(x));
        CHECK(log_bessel_i(0.5, x) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(log_bessel_i(0.5, 1.0) ==
          doctest::Approx(std::log(0.9376748882454442)).epsilon(1e-10));
}

TEST_CASE("log_bessel_i matches the high-precision series oracle") {
    for (double nu : {0.0, 0.5, 1.0, 7.0, 31.0}) {
        for (double x = 0.25; x <= 50.0; x += 0.25) {
            const double got = log_bessel_i(nu, x);
            const double want = oracle::log_bessel_series(nu, x);
            // |delta log| bounds the relative error of the exponentiated value.
            CHECK(std::abs(got - want) <= 1e-10);
        }
    }
}

TEST_CASE("log_bessel_i large-argument branch stays within 1e-6") {
    for (double nu : {0.0, 0.5, 1.0, 7.0, 31.0}) {
        for (double x : {51.0, 80.0, 120.0, 500.0, 1601.0, 4000.0, 10000.0}) {
            if (x <= 50.0 * (nu + 1.0)) continue;  // series branch, covered above
            const double got = log_bessel_i(nu, x);
            const double want = oracle::log_bessel_series(nu, x);
            CHECK(std::abs(got - want) <= 1e-6);
        }
    }
}

TEST_CASE("log_bessel_i domain errors") {
    CHECK_THROWS_AS(log_bessel_i(-1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(log_bessel_i(1.0, -0.5), std::domain_error);
    CHECK_THROWS_AS(log_bessel_i(1.0, std::numeric_limits<double>::infinity()),
                    std::domain_error);
}

TEST_CASE("log_norm_const uniform limit and C=3 closed form") {
    // kappa = 0: uniform density on S^2 is 1/(4 pi).
    CHECK(log_norm_const(3, 0.0) == doctest::Approx(std::log(1.0 / (4.0 * M_PI))));
    // K_3(kappa) = kappa / (4 pi sinh kappa)
    for (double kappa : {0.1, 1.0, 2.0, 5.0, 20.0}) {
        const double expected = std::log(kappa / (4.0 * M_PI * std::sinh(kappa)));
        CHECK(log_norm_const(3, kappa) == doctest::Approx(expected).epsilon(1e-9));
    }
    // continuity of the kappa -> 0 limit
    CHECK(log_norm_const(3, 1e-8) == doctest::Approx(log_norm_const(3, 0.0)).epsilon(1e-6));
}

TEST_CASE("log_norm_const agrees with the oracle at C=64") {
    const double kappa = 299.32;
    const double want = 31.0 * std::log(kappa) - 32.0 * std::log(2.0 * M_PI) -
                        oracle::log_bessel_series(31.0, kappa);
    const double got = log_norm_const(64, kappa);
    CHECK(std::isfinite(got));
    CHECK(got == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("vmf_log_pdf") {
    Vec mu = Vec::Zero(3);
    mu[0] = 1.0;

    SUBCASE("uniform at kappa = 0") {
        const VmfParams params(mu, 0.0);
        CHECK(vmf_log_pdf(mu, params) == doctest::Approx(std::log(1.0 / (4.0 * M_PI))));
    }
    SUBCASE("density at the mode") {
        const VmfParams params(mu, 3.7);
        CHECK(vmf_log_pdf(mu, params) ==
              doctest::Approx(log_norm_const(3, 3.7) + 3.7).epsilon(1e-12));
    }
    SUBCASE("orthogonal direction, C=3 closed form") {
        const VmfParams params(mu, 5.0);
        Vec z = Vec::Zero(3);
        z[1] = 1.0;
        CHECK(vmf_log_pdf(z, params) ==
              doctest::Approx(std::log(5.0 / (4.0 * M_PI * std::sinh(5.0)))).epsilon(1e-9));
    }
    SUBCASE("dimension mismatch") {
        const VmfParams params(mu, 1.0);
        CHECK_THROWS_AS(vmf_log_pdf(Vec::Ones(4).normalized(), params),
                        std::invalid_argument);
    }
}

TEST_CASE("vmf density integrates to 1 on S^2 (Monte Carlo)") {
    Rng rng(20240601);
    Vec mu(3);
    mu << 0.36, -0.48, 0.8;
    mu.normalize();
    const VmfParams params(mu, 2.0);
    const int n = 1000000;
    const Mat samples = sample_vmf(VmfParams(Vec::Unit(3, 2), 0.0), n, rng);  // uniform
    double mean = 0.0;
    for (int i = 0; i < n; ++i)
        mean += std::exp(vmf_log_pdf(samples.row(i).transpose(), params));
    mean /= n;
    const double integral = 4.0 * M_PI * mean;  // surface area of S^2
    CHECK(integral == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("estimate_params examples") {
    SUBCASE("kappa vanishes with the resultant length") {
        Vec z = Vec::Zero(4);
        z[0] = 1e-9;
        const auto est = estimate_params(z);
        CHECK(est.params.kappa == doctest::Approx(4e-9).epsilon(1e-3));
        CHECK_FALSE(est.clamped);
    }
    SUBCASE("R=0.9, C=64 reproduces the Sra formula and the MLE root") {
        Vec z = Vec::Zero(64);
        z[5] = 0.9;
        const auto est = estimate_params(z);
        CHECK(est.params.kappa == doctest::Approx(0.9 * (64.0 - 0.81) / 0.19).epsilon(1e-12));
        CHECK(est.params.kappa == doctest::Approx(299.32).epsilon(1e-4));
        const double root = oracle::bisect_kappa(64, 0.9);
        CHECK(std::abs(est.params.kappa - root) / root <= 0.05);
        CHECK(oracle::mean_resultant_ratio(64, est.params.kappa) ==
              doctest::Approx(0.9).epsilon(0.01));
    }
    SUBCASE("mean direction is the normalized statistic") {
        Vec z = Vec::Zero(4);
        z[0] = 0.5;
        const auto est = estimate_params(z);
        CHECK(est.params.mu[0] == doctest::Approx(1.0));
        CHECK(est.params.mu.tail(3).norm() == doctest::Approx(0.0));
    }
    SUBCASE("zero resultant is an error") {
        CHECK_THROWS_AS(estimate_params(Vec::Zero(4)), std::domain_error);
    }
    SUBCASE("resultant at or above 1 is clamped and flagged") {
        Vec z = Vec::Zero(4);
        z[1] = 1.0 + 1e-12;
        const auto est = estimate_params(z);
        CHECK(est.clamped);
        const double r = 1.0 - 1e-6;
        CHECK(est.params.kappa == doctest::Approx(r * (4.0 - r * r) / (1.0 - r * r)));
    }
}

TEST_CASE("Sra estimate is within 5% of the bisection root") {
    for (int dim : {4, 16, 64}) {
        for (double rbar : {0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 0.95}) {
            Vec z = Vec::Zero(dim);
            z[0] = rbar;
            const double kappa_hat = estimate_params(z).params.kappa;
            const double root = oracle::bisect_kappa(dim, rbar);
            CHECK(std::abs(kappa_hat - root) / root <= 0.05);
        }
    }
}

TEST_CASE("Sra estimate is strictly increasing in the resultant length") {
    for (int dim : {4, 16, 64}) {
        double prev = 0.0;
        for (double rbar = 0.01; rbar < 0.99; rbar += 0.005) {
            Vec z = Vec::Zero(dim);
            z[0] = rbar;
            const double kappa = estimate_params(z).params.kappa;
            CHECK(kappa > prev);
            prev = kappa;
        }
    }
}

TEST_CASE("estimated parameters are a local likelihood maximum") {
    Rng rng(77);
    const int dim = 8;
    Vec mu = Vec::Zero(dim);
    mu[0] = 0.6;
    mu[3] = -0.8;
    const VmfParams truth(mu, 12.0);
    const Mat sample = sample_vmf(truth, 4000, rng);

    const Vec zbar = sample.colwise().mean().transpose();
    const Vec mu_hat = zbar.normalized();
    const double kappa_star = oracle::bisect_kappa(dim, zbar.norm());

    const auto loglik = [&](const Vec& m, double k) {
        const VmfParams p(m, k);
        double sum = 0.0;
        for (int i = 0; i < sample.rows(); ++i)
            sum += vmf_log_pdf(sample.row(i).transpose(), p);
        return sum;
    };
    const double at_hat = loglik(mu_hat, kappa_star);

    // rotate mu_hat by +/- 2 degrees in a fixed plane
    Vec ortho = Vec::Zero(dim);
    ortho[1] = 1.0;
    ortho -= ortho.dot(mu_hat) * mu_hat;
    ortho.normalize();
    const double theta = 2.0 * M_PI / 180.0;
    const Vec rot_plus = std::cos(theta) * mu_hat + std::sin(theta) * ortho;
    const Vec rot_minus = std::cos(theta) * mu_hat - std::sin(theta) * ortho;

    CHECK(at_hat >= loglik(rot_plus, kappa_star));
    CHECK(at_hat >= loglik(rot_minus, kappa_star));
    CHECK(at_hat >= loglik(mu_hat, kappa_star * 1.05));
    CHECK(at_hat >= loglik(mu_hat, kappa_star * 0.95));
}

TEST_CASE("ema_update") {
    SUBCASE("fixed point when the batch mean equals the running mean") {
        ClassStatistics stats(2, 3, 0.99);
        Mat means = Mat::Zero(2, 3);
        means(0, 0) = 0.7;
        ema_update(stats, means, {5, 0});
        ema_update(stats, means, {5, 0});  // second update hits the EMA branch
        CHECK(stats.zbar(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
        CHECK_FALSE(stats.initialized[1]);
    }
    SUBCASE("convex combination arithmetic") {
        ClassStatistics stats(1, 2, 0.99);
        Mat first = Mat::Zero(1, 2);
        first(0, 0) = 0.5;
        ema_update(stats, first, {1});
        Mat second = Mat::Zero(1, 2);
        second(0, 1) = 1.0;
        ema_update(stats, second, {1});
        CHECK(stats.zbar(0, 0) == doctest::Approx(0.495));
        CHECK(stats.zbar(0, 1) == doctest::Approx(0.01));
    }
    SUBCASE("classes with zero count are untouched") {
        ClassStatistics stats(2, 2, 0.9);
        Mat means(2, 2);
        means << 1.0, 0.0, 0.25, 0.25;
        ema_update(stats, means, {1, 1});
        const Mat before = stats.zbar;
        Mat next(2, 2);
        next << 0.0, 1.0, 0.9, 0.9;
        ema_update(stats, next, {3, 0});
        CHECK(stats.zbar.row(1) == before.row(1));
        CHECK(stats.zbar(0, 1) == doctest::Approx(0.1));
    }
    SUBCASE("dimension mismatch") {
        ClassStatistics stats(2, 3, 0.9);
        CHECK_THROWS_AS(ema_update(stats, Mat::Zero(2, 4), {1, 1}), std::invalid_argument);
        CHECK_THROWS_AS(ema_update(stats, Mat::Zero(2, 3), {1}), std::invalid_argument);
    }
}

TEST_CASE("ema converges to the mean of i.i.d. batch means") {
    Rng rng(4242);
    const int dim = 6;
    const double alpha = 0.99;
    const double noise = 0.05;
    Vec target(dim);
    target << 0.2, -0.1, 0.4, 0.0, -0.3, 0.25;

    ClassStatistics stats(1, dim, alpha);
    std::normal_distribution<double> gauss(0.0, noise);
    const int updates = 100;
    for (int t = 0; t < updates; ++t) {
        Mat mean(1, dim);
        for (int d = 0; d < dim; ++d) mean(0, d) = target[d] + gauss(rng);
        ema_update(stats, mean, {8});
    }
    // Exact per-coordinate variance of the EMA after `updates` steps with the
    // first batch used as initialization.
    const double a2 = alpha * alpha;
    const double var_factor = std::pow(a2, updates - 1) +
                              (1.0 - alpha) * (1.0 - alpha) *
                                  (1.0 - std::pow(a2, updates - 1)) / (1.0 - a2);
    const double se = noise * std::sqrt(var_factor * dim);
    CHECK((stats.zbar.row(0).transpose() - target).norm() <= 3.0 * se);
}

TEST_CASE("ema mean norm never exceeds 1 for unit-vector batch means") {
    Rng rng(99);
    ClassStatistics stats(3, 5, 0.97);
    std::uniform_int_distribution<int> count(0, 4);
    for (int t = 0; t < 300; ++t) {
        Mat means = Mat::Zero(3, 5);
        std::vector<int> counts(3);
        for (int k = 0; k < 3; ++k) {
            counts[k] = count(rng);
            if (counts[k] == 0) continue;
            // batch mean of counts[k] unit vectors
            const Mat rows = oracle::random_unit_rows(counts[k], 5, rng);
            means.row(k) = rows.colwise().mean();
        }
        ema_update(stats, means, counts);
        for (int k = 0; k < 3; ++k)
            if (stats.initialized[k]) CHECK(stats.zbar.row(k).norm() <= 1.0 + 1e-9);
    }
}

TEST_CASE("sample_vmf") {
    SUBCASE("kappa = 0 gives a vanishing resultant") {
        Rng rng(7);
        const VmfParams params(Vec::Unit(8, 0), 0.0);
        const Mat sample = sample_vmf(params, 20000, rng);
        CHECK(sample.colwise().mean().norm() < 0.05);
        for (int i = 0; i < 50; ++i)
            CHECK(sample.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("high concentration recovers the mean direction") {
        Rng rng(1234);
        Vec mu = Vec::Zero(8);
        mu[1] = -1.0;
        const VmfParams params(mu, 50.0);
        const Mat sample = sample_vmf(params, 10000, rng);
        const Vec zbar = sample.colwise().mean().transpose();
        const auto est = estimate_params(zbar);
        const double angle = std::acos(std::clamp(est.params.mu.dot(mu), -1.0, 1.0));
        CHECK(angle <= 2.0 * M_PI / 180.0);
    }
    SUBCASE("same seed gives identical draws") {
        const VmfParams params(Vec::Unit(4, 2), 9.0);
        Rng a(55), b(55);
        const Mat first = sample_vmf(params, 64, a);
        const Mat second = sample_vmf(params, 64, b);
        CHECK(first == second);
    }
    SUBCASE("dim = 2 draws stay on the circle") {
        Rng rng(11);
        const VmfParams params(Vec::Unit(2, 0), 4.0);
        const Mat sample = sample_vmf(params, 500, rng);
        for (int i = 0; i < sample.rows(); ++i)
            CHECK(sample.row(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}
