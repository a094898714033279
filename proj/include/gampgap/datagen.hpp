#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "gampgap/common.hpp"
#include "gampgap/dataset.hpp"
#include "gampgap/likelihood.hpp"
#include "gampgap/quadrature.hpp"
#include "gampgap/rng.hpp"

namespace gampgap {

// A seed names an experiment; the generator stream index separates the
// predictor draw (stream 0) from coefficients and noise (stream 1), so the
// same design matrix can carry fresh responses.
inline constexpr std::uint64_t kStreamPredictors = 0;
inline constexpr std::uint64_t kStreamTruthData = 1;

enum class PredictorKind { iid, correlated, rank_deficient };

struct PredictorSpec {
    PredictorKind kind = PredictorKind::iid;
    double sigma_d = 0.5;  // correlated: row covariance V_ij = sigma_d^|i-j|
    double rho_F = 0.9;    // rank_deficient: surviving fraction of singular values
};

namespace detail {

// First k entries of a partial Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> random_subset(Philox4x64& g, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    for (std::size_t j = 0; j < k && j + 1 < n; ++j)
        std::swap(idx[j], idx[j + std::size_t(g.next_below(std::uint64_t(n - j)))]);
    idx.resize(k);
    return idx;
}

// Entries drawn row by row, left to right.
inline void fill_gaussian_rowmajor(Philox4x64& g, Eigen::MatrixXd& F) {
    for (Eigen::Index mu = 0; mu < F.rows(); ++mu)
        for (Eigen::Index i = 0; i < F.cols(); ++i) F(mu, i) = g.next_gaussian();
}

inline long poisson_sample(Philox4x64& g, double lambda) {
    if (lambda <= 0) return 0;
    // halving keeps the product-of-uniforms loop out of underflow territory
    if (lambda > 30.0)
        return poisson_sample(g, lambda / 2) + poisson_sample(g, lambda - lambda / 2);
    const double L = std::exp(-lambda);
    long k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= g.next_uniform();
    } while (p > L);
    return k - 1;
}

}  // namespace detail

inline Eigen::MatrixXd gen_predictors(const PredictorSpec& spec, Eigen::Index M, Eigen::Index N,
                                      std::uint64_t seed) {
    if (M < 1 || N < 1) throw std::invalid_argument("gen_predictors: M, N >= 1 required");
    Philox4x64 g(seed, kStreamPredictors);
    Eigen::MatrixXd F(M, N);
    switch (spec.kind) {
        case PredictorKind::iid:
            detail::fill_gaussian_rowmajor(g, F);
            break;
        case PredictorKind::correlated: {
            if (!(spec.sigma_d > 0.0 && spec.sigma_d <= 1.0))
                throw std::invalid_argument("gen_predictors: sigma_d must be in (0, 1]");
            detail::fill_gaussian_rowmajor(g, F);
            // AR(1) in the column index: x_i = sd*x_{i-1} + sqrt(1-sd^2)*z_i
            // gives cov(x_i, x_j) = sd^|i-j| exactly.
            const double sd = spec.sigma_d;
            const double w = std::sqrt(1.0 - sd * sd);
            for (Eigen::Index mu = 0; mu < M; ++mu)
                for (Eigen::Index i = 1; i < N; ++i)
                    F(mu, i) = sd * F(mu, i - 1) + w * F(mu, i);
            break;
        }
        case PredictorKind::rank_deficient: {
            if (!(spec.rho_F > 0.0 && spec.rho_F <= 1.0))
                throw std::invalid_argument("gen_predictors: rho_F must be in (0, 1]");
            detail::fill_gaussian_rowmajor(g, F);
            const std::size_t K = std::size_t(std::min(M, N));
            const std::size_t keep = std::size_t(std::floor(spec.rho_F * double(K)));
            const std::size_t drop = K - keep;
            if (drop > 0) {
                Eigen::BDCSVD<Eigen::MatrixXd> svd(F, Eigen::ComputeThinU | Eigen::ComputeThinV);
                Eigen::VectorXd sv = svd.singularValues();
                for (std::size_t j : detail::random_subset(g, K, drop)) sv[Eigen::Index(j)] = 0.0;
                F = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
            }
            for (Eigen::Index i = 0; i < N; ++i) {
                const double ss = F.col(i).squaredNorm();
                if (ss < 1e-300)
                    throw NumericError("gen_predictors: column " + std::to_string(i) +
                                       " vanished after rank reduction");
                F.col(i) *= std::sqrt(double(M) / ss);
            }
            break;
        }
    }
    return F;
}

enum class ExpDomainPolicy { error, resample };

// Draw order within stream 1: support subset, nonzero values in ascending
// support index, then per-observation noise in row order. Documented so other
// implementations can replay the stream.
inline std::pair<Dataset, GroundTruth> gen_truth_and_data(
    const Eigen::MatrixXd& F, Family family, double rho, double sigma_x, double sigma,
    std::uint64_t seed, ExpDomainPolicy policy = ExpDomainPolicy::error) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("gen_truth_and_data: rho in [0,1]");
    if (!(sigma_x > 0.0)) throw std::invalid_argument("gen_truth_and_data: sigma_x > 0");
    if (!(sigma >= 0.0)) throw std::invalid_argument("gen_truth_and_data: sigma >= 0");
    const Eigen::Index M = F.rows(), N = F.cols();
    Philox4x64 g(seed, kStreamTruthData);
    const std::size_t K0 = std::size_t(std::llround(rho * double(N)));

    const int max_attempts = family == Family::exponential ? 100 : 1;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        auto support = detail::random_subset(g, std::size_t(N), K0);
        std::sort(support.begin(), support.end());
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(N);
        for (std::size_t i : support) x0[Eigen::Index(i)] = sigma_x * g.next_gaussian();
        Eigen::VectorXd theta0 = F * x0 / std::sqrt(double(N));

        if (family == Family::exponential) {
            bool ok = true;
            for (Eigen::Index mu = 0; mu < M; ++mu)
                if (!theta_in_domain(Family::exponential, theta0[mu])) ok = false;
            if (!ok) {
                if (policy == ExpDomainPolicy::error)
                    throw std::domain_error(
                        "gen_truth_and_data: exponential family needs theta0 < 0 everywhere; "
                        "use the resample policy or shift the design");
                continue;
            }
        }

        Dataset d;
        d.F = F;
        d.y.resize(M);
        for (Eigen::Index mu = 0; mu < M; ++mu) {
            switch (family) {
                case Family::gaussian:
                    d.y[mu] = theta0[mu] + sigma * g.next_gaussian();
                    break;
                case Family::logistic:
                    d.y[mu] = (theta0[mu] + sigma * g.next_gaussian() > 0.0) ? 1.0 : 0.0;
                    break;
                case Family::poisson:
                    d.y[mu] = double(detail::poisson_sample(g, std::exp(theta0[mu])));
                    break;
                case Family::exponential: {
                    const double rate = -theta0[mu];
                    d.y[mu] = -std::log1p(-g.next_uniform()) / rate;
                    break;
                }
            }
        }
        GroundTruth t;
        t.x0 = std::move(x0);
        t.theta0 = std::move(theta0);
        t.sigma = sigma;
        t.rho = rho;
        t.sigma_x = sigma_x;
        return {std::move(d), std::move(t)};
    }
    throw std::domain_error(
        "gen_truth_and_data: exponential domain not satisfied after 100 resamples");
}

// Expected loss on a fresh row, from the overlaps of xhat with the truth.
// sigma_T^2 = rho*sigma_x^2 + sigma^2 is the variance of the latent
// theta0 + noise on a fresh standard-normal row.
inline double empirical_extra_error(const Eigen::VectorXd& xhat, const GroundTruth& truth,
                                    Family family, int quad_nodes = 61) {
    const double N = double(xhat.size());
    const double Qhat = xhat.squaredNorm() / N;
    const double mhat = xhat.dot(truth.x0) / N;
    const double sigmaT2 = truth.rho * truth.sigma_x * truth.sigma_x + truth.sigma * truth.sigma;
    switch (family) {
        case Family::gaussian:
            return (Qhat - 2 * mhat + sigmaT2) / 2;
        case Family::logistic: {
            const double sq = std::sqrt(Qhat);
            const double entropy_term = normal_expectation(
                [sq](double w) { return a_value(Family::logistic, sq * w); }, quad_nodes);
            return -mhat / std::sqrt(2 * 3.14159265358979323846 * sigmaT2) + entropy_term;
        }
        default:
            throw std::invalid_argument(
                "empirical_extra_error: closed forms exist for gaussian and logistic only");
    }
}

}  // namespace gampgap
