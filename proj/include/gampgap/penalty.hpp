#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "gampgap/common.hpp"

namespace gampgap {

// Elastic net: pi(x) = lambda1*|x| + (lambda2/2)*x^2, applied per coordinate.
struct Penalty {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

inline void validate_penalty(const Penalty& p) {
    if (!(p.lambda1 >= 0.0) || !std::isfinite(p.lambda1) ||
        !(p.lambda2 >= 0.0) || !std::isfinite(p.lambda2))
        throw std::invalid_argument("penalty: lambda1 and lambda2 must be finite and >= 0");
}

// A pure MLE run (lambda1 = lambda2 = 0) is only identifiable with M >= N.
inline void require_identifiable(const Penalty& p, Eigen::Index M, Eigen::Index N) {
    validate_penalty(p);
    if (p.lambda1 == 0.0 && p.lambda2 == 0.0 && M < N)
        throw std::invalid_argument(
            "penalty: lambda1 = lambda2 = 0 needs M >= N, got M=" + std::to_string(M) +
            " N=" + std::to_string(N));
}

template <class Scalar>
Scalar penalty_value(const Penalty& p, Scalar x) {
    return Scalar(p.lambda1) * std::abs(x) + Scalar(p.lambda2) / 2 * x * x;
}

inline double penalty_value(const Penalty& p, const Eigen::VectorXd& x) {
    return p.lambda1 * x.template lpNorm<1>() + p.lambda2 / 2 * x.squaredNorm();
}

// pi''(x) contribution entering the local-curvature matrices; the |x| part is
// piecewise linear so only lambda2 survives.
inline double penalty_hessian_diag(const Penalty& p) { return p.lambda2; }

template <class Scalar>
struct ProxResult {
    Scalar xhat;  // argmin_x (x-m)^2/(2*sigma) + pi(x)
    Scalar s;     // sigma * d(xhat)/dm, the local variance passed back to the iteration
};

// Closed threshold: |m| = lambda1*sigma maps to xhat = 0, s = 0.
template <class Scalar>
ProxResult<Scalar> prox_en(Scalar m, Scalar sigma, const Penalty& p) {
    const Scalar thr = Scalar(p.lambda1) * sigma;
    if (std::abs(m) <= thr) return {Scalar(0), Scalar(0)};
    const Scalar denom = Scalar(p.lambda2) * sigma + Scalar(1);
    const Scalar shrunk = m > Scalar(0) ? m - thr : m + thr;
    return {shrunk / denom, sigma / denom};
}

inline void prox_en(const Eigen::VectorXd& m, const Eigen::VectorXd& sigma, const Penalty& p,
                    Eigen::VectorXd& xhat, Eigen::VectorXd& s) {
    const Eigen::Index n = m.size();
    xhat.resize(n);
    s.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = prox_en(m[i], sigma[i], p);
        xhat[i] = r.xhat;
        s[i] = r.s;
    }
}

}  // namespace gampgap
