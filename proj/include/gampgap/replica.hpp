#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gampgap/common.hpp"
#include "gampgap/likelihood.hpp"
#include "gampgap/penalty.hpp"
#include "gampgap/quadrature.hpp"

namespace gampgap {

// Typical-case order parameters of the penalized fit under iid standard
// gaussian predictors, truth x0 ~ Bernoulli(rho) x N(0, sigma_x^2), and data
// y = G(theta0 + eps) with gaussian noise of std sigma. Q and m are the self-
// and truth-overlaps of the fitted linear predictor, chi the rescaled
// susceptibility beta*(Q - q); the hatted fields are their conjugates.
struct ReplicaOrder {
    double Q = 0.0;
    double m = 0.0;
    double chi = 1.0;
    double theta_hat = 0.0;
    double chi_hat = 0.0;
    double mu_hat = 0.0;
    double rho_hat = 0.0;   // mass of the non-thresholded region, chi*(theta_hat+lambda2)
    double sigma_t2 = 0.0;  // rho*sigma_x^2 + sigma^2
    double rho = 0.0;
    double sigma_x = 1.0;
    double sigma = 0.0;
    bool converged = false;
    bool projected = false;  // m was pulled back to the boundary m^2 <= Q*sigma_t2
    int iterations = 0;
};

struct RsOptions {
    double damping = 0.5;
    double tol = 1e-10;  // per-component change of (Q, m, chi), relative above 1
    int max_iter = 2000;
    int nodes = 61;  // quadrature nodes per dimension
};

namespace detail {

struct RsConjugates {
    double theta_hat, chi_hat, mu_hat;
};

// Root of u + chi*a'(u) = t for the logistic likelihood; a' in (0,1) brackets
// it inside [t - chi, t]. Newton with bisection fallback.
inline double logistic_u_star(double chi, double t, double guess) {
    double lo = t - chi, hi = t;
    double u = std::clamp(guess, lo, hi);
    for (int it = 0; it < 100; ++it) {
        const double p = 1.0 / (1.0 + std::exp(-u));
        const double g = u + chi * p - t;
        if (g > 0.0)
            hi = u;
        else
            lo = u;
        double un = u - g / (1.0 + chi * p * (1.0 - p));
        if (!(un > lo && un < hi)) un = 0.5 * (lo + hi);
        if (std::abs(un - u) <= 1e-13 * (1.0 + std::abs(un))) return un;
        u = un;
    }
    return u;
}

// E[g(nu, y, u*)] over independent standard normals (nu, zeta) for the
// logistic observation side. y = I(sigma_t*nu > 0) jumps at nu = 0, so the nu
// axis is integrated panelwise with a split there; zeta uses Gauss-Hermite.
// u* solves u + chi*a'(u) = h + chi*y at the cavity field
// h = (m*nu + sqrt(Q*sigma_t2 - m^2)*zeta)/sigma_t.
template <std::size_t K, class G>
std::array<double, K> logistic_obs_expectation(double Q, double m, double chi, double sigma_t2,
                                               int nodes, G&& g) {
    const double sigma_t = std::sqrt(sigma_t2);
    const double slope = m / sigma_t;
    const double spread = std::sqrt(std::max(0.0, Q * sigma_t2 - m * m)) / sigma_t;
    const QuadRule& gl = cached_gauss_legendre(nodes);
    const QuadRule& gh = cached_gauss_hermite(nodes);
    const double inv_sqrt_2pi = 0.3989422804014326779;
    const double inv_sqrt_pi = 0.5641895835477562869;
    const double sqrt2 = 1.4142135623730950488;
    std::array<double, K> acc{};
    for (int panel = -4; panel < 4; ++panel) {
        const double y = panel >= 0 ? 1.0 : 0.0;
        const double mid = 3.0 * panel + 1.5, half = 1.5;
        for (Eigen::Index i = 0; i < gl.x.size(); ++i) {
            const double nu = mid + half * gl.x[i];
            const double w_nu = gl.w[i] * half * inv_sqrt_2pi * std::exp(-nu * nu / 2);
            const double t0 = slope * nu + chi * y;
            double u = t0;  // warm start carried along the zeta sweep
            for (Eigen::Index k = 0; k < gh.x.size(); ++k) {
                u = logistic_u_star(chi, t0 + spread * sqrt2 * gh.x[k], u);
                const auto v = g(nu, y, u);
                const double w = w_nu * gh.w[k] * inv_sqrt_pi;
                for (std::size_t j = 0; j < K; ++j) acc[j] += w * v[j];
            }
        }
    }
    return acc;
}

inline RsConjugates conjugate_update(Family family, double alpha, double Q, double m, double chi,
                                     double sigma_t2, int nodes) {
    if (family == Family::gaussian) {
        const double th = alpha / (1.0 + chi);
        const double ch = alpha * (Q - 2.0 * m + sigma_t2) / ((1.0 + chi) * (1.0 + chi));
        return {th, ch, th};
    }
    const auto r = logistic_obs_expectation<3>(
        Q, m, chi, sigma_t2, nodes, [chi](double nu, double y, double u) {
            const auto d = a_derivs(Family::logistic, u);
            const double resid = y - d.d1;
            return std::array<double, 3>{d.d2 / (1.0 + chi * d.d2), resid * resid, nu * resid};
        });
    const double sigma_t = std::sqrt(sigma_t2);
    RsConjugates cj;
    cj.theta_hat = alpha * r[0];
    cj.chi_hat = alpha * r[1];
    // E[zeta*resid] is eliminated by parts first, so the m-derivative needs no
    // division by sqrt(Q*sigma_t2 - m^2)
    cj.mu_hat = alpha * r[2] / sigma_t + m * cj.theta_hat / sigma_t2;
    return cj;
}

struct CoefBranch {
    double q2;    // E[x*(h)^2]
    double xz;    // E[xi * x*(h)], h = s_h * xi
    double mass;  // P(|h| > lambda1)
};

// Moments of the scalar elastic-net prox x*(h) = ST(h, lambda1)/denom under a
// centered gaussian field of std s_h. At lambda1 = 0 the prox is linear and
// the active mass is the full line, point field included.
inline CoefBranch coef_branch(double s_h, const Penalty& pen, double denom, int nodes) {
    if (!(s_h > 0.0)) return {0.0, 0.0, pen.lambda1 == 0.0 ? 1.0 : 0.0};
    const double thr = pen.lambda1;
    const auto xstar = [thr, denom](double h) {
        if (std::abs(h) <= thr) return 0.0;
        return ((h > 0.0) ? h - thr : h + thr) / denom;
    };
    const std::vector<double> br = {-thr / s_h, thr / s_h};
    const double q2 = normal_expectation(
        [&](double z) {
            const double v = xstar(s_h * z);
            return v * v;
        },
        nodes, br);
    const double xz = normal_expectation([&](double z) { return z * xstar(s_h * z); }, nodes, br);
    const double mass =
        thr == 0.0 ? 1.0
                   : normal_expectation(
                         [&](double z) { return std::abs(s_h * z) > thr ? 1.0 : 0.0; }, nodes, br);
    return {q2, xz, mass};
}

struct CoefSide {
    double Q, m, chi, rho_hat;
};

// Order parameters from the conjugates: the effective field is
// sqrt(chi_hat)*z + mu_hat*x0, a two-branch gaussian mixture over the
// spike-and-slab truth. The truth overlap enters through
// E[x0|field] = mu_hat*sigma_x^2/s1^2 * field on the slab branch.
inline CoefSide coefficient_update(const RsConjugates& cj, const Penalty& pen, double rho,
                                   double sigma_x, int nodes) {
    const double denom = cj.theta_hat + pen.lambda2;
    if (!(denom > 0.0)) throw NumericError("rs_solve: theta_hat + lambda2 must stay positive");
    const double s0 = std::sqrt(std::max(0.0, cj.chi_hat));
    const double s1 =
        std::sqrt(std::max(0.0, cj.chi_hat + cj.mu_hat * cj.mu_hat * sigma_x * sigma_x));
    const CoefBranch b0 = coef_branch(s0, pen, denom, nodes);
    const CoefBranch b1 = coef_branch(s1, pen, denom, nodes);
    CoefSide cs;
    cs.Q = (1.0 - rho) * b0.q2 + rho * b1.q2;
    cs.m = s1 > 0.0 ? rho * cj.mu_hat * sigma_x * sigma_x / s1 * b1.xz : 0.0;
    cs.rho_hat = (1.0 - rho) * b0.mass + rho * b1.mass;
    cs.chi = cs.rho_hat / denom;
    return cs;
}

}  // namespace detail

// Damped fixed-point iteration for the replica-symmetric saddle point.
// Gaussian likelihood uses closed-form conjugates; logistic integrates the
// observation side numerically. Families without a generative map here are
// rejected.
inline ReplicaOrder rs_solve(Family family, const Penalty& pen, double alpha, double rho,
                             double sigma_x, double sigma, const RsOptions& opts = {}) {
    validate_penalty(pen);
    if (family != Family::gaussian && family != Family::logistic)
        throw std::invalid_argument("rs_solve: gaussian and logistic likelihoods only");
    if (!(alpha > 0.0)) throw std::invalid_argument("rs_solve: alpha > 0 required");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rs_solve: rho in [0,1] required");
    if (!(sigma_x > 0.0)) throw std::invalid_argument("rs_solve: sigma_x > 0 required");
    if (!(sigma >= 0.0)) throw std::invalid_argument("rs_solve: sigma >= 0 required");

    ReplicaOrder ord;
    ord.rho = rho;
    ord.sigma_x = sigma_x;
    ord.sigma = sigma;
    ord.sigma_t2 = rho * sigma_x * sigma_x + sigma * sigma;
    if (!(ord.sigma_t2 > 0.0))
        throw std::invalid_argument("rs_solve: rho*sigma_x^2 + sigma^2 must be positive");
    ord.Q = rho * sigma_x * sigma_x;
    ord.m = 0.5 * rho * sigma_x * sigma_x;
    ord.chi = 1.0;

    for (int it = 1; it <= opts.max_iter; ++it) {
        ord.iterations = it;
        const auto cj = detail::conjugate_update(family, alpha, ord.Q, ord.m, ord.chi,
                                                 ord.sigma_t2, opts.nodes);
        const auto cs = detail::coefficient_update(cj, pen, rho, sigma_x, opts.nodes);
        const double d = opts.damping;
        double Qn = d * cs.Q + (1.0 - d) * ord.Q;
        double mn = d * cs.m + (1.0 - d) * ord.m;
        const double chin = d * cs.chi + (1.0 - d) * ord.chi;
        if (!std::isfinite(Qn) || !std::isfinite(mn) || !std::isfinite(chin)) break;
        if (mn * mn > Qn * ord.sigma_t2) {
            mn = std::copysign(std::sqrt(Qn * ord.sigma_t2) * (1.0 - 1e-12), mn);
            ord.projected = true;
        }
        const double delta =
            std::max({std::abs(Qn - ord.Q) / std::max(1.0, std::abs(Qn)),
                      std::abs(mn - ord.m) / std::max(1.0, std::abs(mn)),
                      std::abs(chin - ord.chi) / std::max(1.0, std::abs(chin))});
        ord.Q = Qn;
        ord.m = mn;
        ord.chi = chin;
        if (delta < opts.tol) {
            ord.converged = true;
            break;
        }
        // the unstable side of a lambda2 = 0 problem has no fixed point and
        // chi grows geometrically; cut the runaway instead of overflowing
        if (ord.chi > 1e12) break;
    }

    const auto cj =
        detail::conjugate_update(family, alpha, ord.Q, ord.m, ord.chi, ord.sigma_t2, opts.nodes);
    const auto cs = detail::coefficient_update(cj, pen, rho, sigma_x, opts.nodes);
    ord.theta_hat = cj.theta_hat;
    ord.chi_hat = cj.chi_hat;
    ord.mu_hat = cj.mu_hat;
    ord.rho_hat = cs.rho_hat;
    return ord;
}

struct RsErrors {
    double err_extra;  // expected loss on a fresh predictor row
    double gap_in;     // expected in-sample generalization gap, the covariance penalty
    double gdf;        // expected generalized degrees of freedom per observation
    double fv;         // expected functional variance
};

inline RsErrors rs_errors(const ReplicaOrder& ord, Family family, int nodes = 61) {
    RsErrors e{};
    if (family == Family::gaussian) {
        e.err_extra = (ord.Q - 2.0 * ord.m + ord.sigma_t2) / 2.0;
        e.gdf = ord.chi / (1.0 + ord.chi);
        // E[(G - a'(u*))^2] = (Q - 2m + sigma_t2)/(1+chi)^2
        e.fv = ord.chi * (ord.Q - 2.0 * ord.m + ord.sigma_t2) /
               ((1.0 + ord.chi) * (1.0 + ord.chi) * (1.0 + ord.chi));
        e.gap_in = e.gdf;
        return e;
    }
    if (family == Family::logistic) {
        const double sq = std::sqrt(std::max(0.0, ord.Q));
        const double entropy = normal_expectation(
            [sq](double w) { return a_value(Family::logistic, sq * w); }, nodes);
        e.err_extra =
            -ord.m / std::sqrt(2.0 * 3.14159265358979323846 * ord.sigma_t2) + entropy;
        const double chi = ord.chi;
        const auto r = detail::logistic_obs_expectation<2>(
            ord.Q, ord.m, chi, ord.sigma_t2, nodes, [chi](double, double y, double u) {
                const auto d = a_derivs(Family::logistic, u);
                const double resp = chi / (1.0 + chi * d.d2);
                const double resid = y - d.d1;
                return std::array<double, 2>{resp, resid * resid * resp};
            });
        e.gdf = r[0];
        e.fv = r[1];
        e.gap_in = e.gdf;
        return e;
    }
    throw std::invalid_argument("rs_errors: gaussian and logistic likelihoods only");
}

struct AtResult {
    bool unstable;
    double lhs;  // replica coupling response; the RS saddle is unstable when lhs > 1
};

// Local stability of the RS saddle against replica-coupling perturbations.
// The coefficient factor is E[(dx*/dfield)^2] = rho_hat/(theta_hat+lambda2)^2,
// the observation factor E[(d(y - a'(u*))/dcavity)^2].
inline AtResult at_unstable(const ReplicaOrder& ord, Family family, const Penalty& pen,
                            double alpha, int nodes = 61) {
    validate_penalty(pen);
    if (!(alpha > 0.0)) throw std::invalid_argument("at_unstable: alpha > 0 required");
    if (family == Family::gaussian) {
        if (pen.lambda2 == 0.0) {
            // chi*(theta_hat + lambda2) = rho_hat and theta_hat = alpha/(1+chi)
            // collapse the condition to rho_hat/alpha, which stays exact in the
            // ridgeless limit where chi itself diverges
            const double lhs = ord.rho_hat / alpha;
            return {lhs > 1.0, lhs};
        }
        if (!(ord.rho_hat > 0.0)) return {false, 0.0};
        const double r = ord.chi / (1.0 + ord.chi);
        const double lhs = alpha / ord.rho_hat * r * r;
        return {lhs > 1.0, lhs};
    }
    if (family == Family::logistic) {
        const double denom = ord.theta_hat + pen.lambda2;
        const double chi = ord.chi;
        const auto r = detail::logistic_obs_expectation<1>(
            ord.Q, ord.m, chi, ord.sigma_t2, nodes, [chi](double, double, double u) {
                const double a2 = a_derivs(Family::logistic, u).d2;
                const double resp = a2 / (1.0 + chi * a2);
                return std::array<double, 1>{resp * resp};
            });
        const double lhs = alpha * ord.rho_hat / (denom * denom) * r[0];
        return {lhs > 1.0, lhs};
    }
    throw std::invalid_argument("at_unstable: gaussian and logistic likelihoods only");
}

}  // namespace gampgap
