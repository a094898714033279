#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "gampgap/common.hpp"
#include "gampgap/dataset.hpp"
#include "gampgap/likelihood.hpp"
#include "gampgap/penalty.hpp"

namespace gampgap {

// Sum of per-observation negative log likelihoods at theta = F x / sqrt(N),
// plus the penalty. Every fitting route in the library minimizes this.
inline double penalized_objective(const Dataset& data, Family family, const Penalty& pen,
                                  const Eigen::VectorXd& x) {
    const Eigen::VectorXd theta = data.F * x / std::sqrt(static_cast<double>(data.N()));
    double s = 0;
    for (Eigen::Index mu = 0; mu < data.M(); ++mu)
        s += neg_log_lik(family, data.y[mu], theta[mu]);
    return s + penalty_value(pen, x);
}

struct CdOptions {
    double tol = 1e-10;  // infinity norm of the coordinate changes in one sweep
    int max_sweeps = 10000;
    Eigen::VectorXd x0;  // warm start when sized N
};

// Cyclic coordinate descent for the gaussian elastic net. Each coordinate is
// solved exactly: x_i = soft(b_i, lambda1) / (c_i + lambda2) with
// b_i = F_i . (y - theta^{-i}) / sqrt(N) and c_i = |F_i|^2 / N.
inline Eigen::VectorXd cd_fit_gaussian(const Dataset& data, const Penalty& pen,
                                       const CdOptions& opts = {}) {
    validate_dataset(data);
    validate_penalty(pen);
    require_identifiable(pen, data.M(), data.N());
    const Eigen::Index N = data.N();
    const double sqN = std::sqrt(static_cast<double>(N));

    Eigen::VectorXd x = (opts.x0.size() == N) ? opts.x0 : Eigen::VectorXd::Zero(N);
    Eigen::VectorXd colsq(N);
    for (Eigen::Index i = 0; i < N; ++i)
        colsq[i] = data.F.col(i).squaredNorm() / static_cast<double>(N);
    Eigen::VectorXd r = data.y - data.F * x / sqN;

    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        double delta = 0;
        for (Eigen::Index i = 0; i < N; ++i) {
            const double xi = x[i];
            const double b = data.F.col(i).dot(r) / sqN + colsq[i] * xi;
            double xn = 0;
            if (std::abs(b) > pen.lambda1) {
                const double denom = colsq[i] + pen.lambda2;
                if (!(denom > 0))
                    throw LinAlgError("cd_fit_gaussian: zero curvature with an active gradient on coordinate " +
                                      std::to_string(i));
                xn = (b - pen.lambda1 * (b > 0 ? 1.0 : -1.0)) / denom;
            }
            if (xn != xi) {
                r -= data.F.col(i) * ((xn - xi) / sqN);
                delta = std::max(delta, std::abs(xn - xi));
                x[i] = xn;
            }
        }
        if (!x.allFinite())
            throw NumericError("cd_fit_gaussian: NaN or Inf at sweep " + std::to_string(sweep));
        if (delta < opts.tol) return x;
        // the running residual drifts over long runs; rebuild it exactly
        if (sweep % 64 == 0) r = data.y - data.F * x / sqN;
    }
    throw NonConvergenceError("cd_fit_gaussian: sweep limit " + std::to_string(opts.max_sweeps) +
                              " exhausted");
}

namespace detail {

// Cyclic coordinate descent on (1/2) z'Wz - v'z + lambda1 |z|_1 + (lambda2/2) |z|^2.
inline void cd_quadratic(const Eigen::MatrixXd& W, const Eigen::VectorXd& v, const Penalty& pen,
                         const CdOptions& opts, Eigen::VectorXd& z) {
    const Eigen::Index N = W.rows();
    Eigen::VectorXd wz = W * z;
    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        double delta = 0;
        for (Eigen::Index i = 0; i < N; ++i) {
            const double zi = z[i];
            const double u = v[i] - (wz[i] - W(i, i) * zi);
            double zn = 0;
            if (std::abs(u) > pen.lambda1) {
                const double denom = W(i, i) + pen.lambda2;
                if (!(denom > 0))
                    throw LinAlgError("cd_fit_glm: zero curvature with an active gradient on coordinate " +
                                      std::to_string(i));
                zn = (u - pen.lambda1 * (u > 0 ? 1.0 : -1.0)) / denom;
            }
            if (zn != zi) {
                wz += W.col(i) * (zn - zi);
                delta = std::max(delta, std::abs(zn - zi));
                z[i] = zn;
            }
        }
        if (delta < opts.tol) return;
        if (sweep % 64 == 0) wz = W * z;
    }
    throw NonConvergenceError("cd_fit_glm: inner sweep limit " + std::to_string(opts.max_sweeps) +
                              " exhausted");
}

}  // namespace detail

struct GlmCdOptions {
    double tol = 1e-8;  // infinity norm of the accepted outer step
    int max_outer = 200;
    int max_halvings = 20;
    CdOptions inner;
    Eigen::VectorXd x0;  // warm start when sized N
};

// Proximal Newton: the smooth part is modeled by its local quadratic
// W = F'D F/N, R = F'(y - a'(theta))/sqrt(N), the penalized model is solved
// by coordinate descent, and the step is halved until the true objective does
// not increase. Gaussian data makes the model exact, so the loop finishes in
// one accepted step.
inline Eigen::VectorXd cd_fit_glm(const Dataset& data, Family family, const Penalty& pen,
                                  const GlmCdOptions& opts = {}) {
    validate_dataset(data);
    validate_penalty(pen);
    require_identifiable(pen, data.M(), data.N());
    if (family == Family::exponential)
        throw std::invalid_argument(
            "cd_fit_glm: the exponential family's natural parameter must stay negative and the "
            "zero start is infeasible; use the message-passing fit");
    const Eigen::Index M = data.M(), N = data.N();
    const double sqN = std::sqrt(static_cast<double>(N));

    Eigen::VectorXd x = (opts.x0.size() == N) ? opts.x0 : Eigen::VectorXd::Zero(N);
    double fx = penalized_objective(data, family, pen, x);

    Eigen::VectorXd d1(M), d2(M);
    for (int outer = 1; outer <= opts.max_outer; ++outer) {
        const Eigen::VectorXd theta = data.F * x / sqN;
        for (Eigen::Index mu = 0; mu < M; ++mu) {
            const auto d = a_derivs(family, theta[mu]);
            d1[mu] = d.d1;
            d2[mu] = d.d2;
        }
        const Eigen::MatrixXd W =
            data.F.transpose() * d2.asDiagonal() * data.F / static_cast<double>(N);
        const Eigen::VectorXd R = data.F.transpose() * (data.y - d1) / sqN;
        const Eigen::VectorXd v = W * x + R;

        Eigen::VectorXd z = x;
        detail::cd_quadratic(W, v, pen, opts.inner, z);
        const Eigen::VectorXd step = z - x;
        // the model's optimality conditions at z = x coincide with the true
        // ones, so a fixed point of the model map is a solution
        if (step.cwiseAbs().maxCoeff() < opts.tol) return x;

        // the objective is a sum of M unit-scale terms, so comparisons below
        // its summation noise are meaningless; a warm start at the optimum
        // must pass the acceptance test
        const double slack = 1e-12 * std::max(1.0, std::abs(fx));
        double t = 1.0;
        double fnew = penalized_objective(data, family, pen, x + step);
        for (int h = 0; !(fnew <= fx + slack) && h < opts.max_halvings; ++h) {
            t *= 0.5;
            fnew = penalized_objective(data, family, pen, x + t * step);
        }
        if (!(fnew <= fx + slack))
            throw NonConvergenceError("cd_fit_glm: no decrease after " +
                                      std::to_string(opts.max_halvings) +
                                      " halvings, last objective " + std::to_string(fx));
        fnew = std::min(fnew, fx);
        x += t * step;
        fx = fnew;
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e10)
            throw NonConvergenceError("cd_fit_glm: iterate diverged, last objective " +
                                      std::to_string(fx));
        if (t * step.cwiseAbs().maxCoeff() < opts.tol) return x;
    }
    throw NonConvergenceError("cd_fit_glm: outer iteration limit " +
                              std::to_string(opts.max_outer) + " exhausted, last objective " +
                              std::to_string(fx));
}

}  // namespace gampgap
