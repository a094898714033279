#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gampgap/common.hpp"

namespace gampgap {

// Natural exponential family: ln f(y|theta) = theta*y - a(theta) + b(y).
// a' is the model mean of y, a'' the model variance.
enum class Family { gaussian, logistic, poisson, exponential };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::gaussian: return "gaussian";
        case Family::logistic: return "logistic";
        case Family::poisson: return "poisson";
        case Family::exponential: return "exponential";
    }
    return "?";
}

inline Family family_from_name(std::string_view s) {
    if (s == "gaussian") return Family::gaussian;
    if (s == "logistic") return Family::logistic;
    if (s == "poisson") return Family::poisson;
    if (s == "exponential") return Family::exponential;
    throw std::invalid_argument("unknown family: " + std::string(s));
}

// The exponential family needs theta strictly negative; the margin keeps
// 1/theta^2 finite when Newton iterates graze zero.
inline constexpr double kExpDomainEdge = -1e-12;

template <class Scalar>
bool theta_in_domain(Family f, Scalar theta) {
    if (f == Family::exponential) return theta < Scalar(kExpDomainEdge);
    return true;
}

template <class Scalar>
void require_domain(Family f, Scalar theta) {
    if (!theta_in_domain(f, theta))
        throw std::domain_error(std::string(family_name(f)) +
                                " likelihood: theta outside domain (theta=" +
                                std::to_string(static_cast<double>(theta)) + ")");
}

template <class Scalar>
Scalar a_value(Family f, Scalar theta) {
    require_domain(f, theta);
    switch (f) {
        case Family::gaussian: return theta * theta / Scalar(2);
        case Family::logistic:
            // ln(1+e^t) = max(t,0) + ln(1+e^{-|t|}), safe for |t| > 700
            return std::max(theta, Scalar(0)) + std::log1p(std::exp(-std::abs(theta)));
        case Family::poisson: return std::exp(theta);
        case Family::exponential: return -std::log(-theta);
    }
    return Scalar(0);
}

template <class Scalar>
struct ADerivs {
    Scalar d1;  // a'(theta), the model mean
    Scalar d2;  // a''(theta), the model variance, >= 0
};

template <class Scalar>
ADerivs<Scalar> a_derivs(Family f, Scalar theta) {
    require_domain(f, theta);
    switch (f) {
        case Family::gaussian: return {theta, Scalar(1)};
        case Family::logistic: {
            const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-theta));
            return {p, p * (Scalar(1) - p)};
        }
        case Family::poisson: {
            const Scalar e = std::exp(theta);
            return {e, e};
        }
        case Family::exponential: {
            const Scalar inv = Scalar(1) / theta;
            return {-inv, inv * inv};
        }
    }
    return {Scalar(0), Scalar(0)};
}

// Cumulant generating function of f(.|theta) evaluated at t is a(theta+t)-a(theta);
// subtracting the linear term a'(theta)*t leaves the Bregman remainder, which is
// what the Fchi correction sums. Nonnegative by convexity of a.
template <class Scalar>
Scalar cumulant_gap(Family f, Scalar theta, Scalar t) {
    require_domain(f, theta);
    require_domain(f, theta + t);
    return a_value(f, theta + t) - a_value(f, theta) - a_derivs(f, theta).d1 * t;
}

// b(y) convention: gaussian carries -y^2/2 so the training error is the halved
// mean squared error; poisson's -ln y! is dropped (constant across models);
// logistic and exponential have b = 0. Constants cancel in every gap estimator.
inline double b_value(Family f, double y) {
    return f == Family::gaussian ? -y * y / 2.0 : 0.0;
}

// -ln f(y|theta) with the b(y) convention above.
inline double neg_log_lik(Family f, double y, double theta) {
    return -(theta * y - a_value(f, theta) + b_value(f, y));
}

}  // namespace gampgap
