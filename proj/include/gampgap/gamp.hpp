#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "gampgap/common.hpp"
#include "gampgap/dataset.hpp"
#include "gampgap/likelihood.hpp"
#include "gampgap/penalty.hpp"
#include "gampgap/rng.hpp"

namespace gampgap {

// Iterate of the MAP message-passing loop. All variances are the rescaled
// (noise-free-limit) ones; theta_hat is F xhat / sqrt(N) for the returned
// xhat, and the cavity parameter is theta_hat - s_theta * g_out per row.
struct GampState {
    Eigen::VectorXd xhat;       // N
    Eigen::VectorXd s;          // N, >= 0
    Eigen::VectorXd theta_hat;  // M
    Eigen::VectorXd s_theta;    // M, >= 0
    Eigen::VectorXd g_out;      // M, rescaled output score
    Eigen::VectorXd dg_out;     // M, <= 0
    Eigen::VectorXd Sigma;      // N, > 0
    Eigen::VectorXd m;          // N
    int iter = 0;
    bool converged = false;
};

struct GampOptions {
    int max_iter = 1000;
    double tol = 1e-8;       // infinity norm of the xhat change, after damping
    double damping = 0.7;    // new iterate weight for xhat and s
    bool random_init = false;
    std::uint64_t init_seed = 0;
    Eigen::VectorXd x0;      // warm start for xhat when sized N; wins over random_init
};

// Root of (theta - theta_cav)/s_theta = y - a'(theta). The left side is
// increasing and a' is nondecreasing, so the residual is strictly monotone
// and the root unique. Gaussian has the closed form; the rest use Newton
// confined to a sign-changing bracket.
inline double solve_theta_star(double y, double theta_cav, double s_theta, Family family) {
    if (!(s_theta > 0))
        throw std::invalid_argument("solve_theta_star: s_theta > 0 required");
    if (family == Family::gaussian) return (s_theta * y + theta_cav) / (1 + s_theta);

    const auto resid = [&](double th) {
        return (th - theta_cav) / s_theta - (y - a_derivs(family, th).d1);
    };

    double lo, hi;
    if (family == Family::exponential) {
        hi = -1.001e-12;  // just inside theta < 0
        if (!(resid(hi) > 0))
            throw NumericError("solve_theta_star: no root inside the exponential domain");
        lo = std::min(theta_cav, -1.0);
        double step = std::max(1.0, s_theta);
        while (resid(lo) > 0) {
            lo -= step;
            step *= 2;
            if (lo < -1e15) throw NumericError("solve_theta_star: bracket search ran away");
        }
    } else {
        const double w = std::max(1.0, s_theta * (std::abs(y) + 1));
        lo = theta_cav - w;
        hi = theta_cav + w;
        double step = w;
        while (resid(lo) > 0) {
            lo -= step;
            step *= 2;
            if (lo < -1e15) throw NumericError("solve_theta_star: bracket search ran away");
        }
        step = w;
        while (resid(hi) < 0) {
            hi += step;
            step *= 2;
            if (hi > 1e15) throw NumericError("solve_theta_star: bracket search ran away");
        }
    }

    double th = (lo + hi) / 2;
    for (int it = 0; it < 200; ++it) {
        const double r = resid(th);
        if (std::abs(r) < 1e-12) return th;
        if (r < 0)
            lo = th;
        else
            hi = th;
        // the residual granularity is eps*|theta|/s_theta, which exceeds any
        // absolute tolerance for small s_theta; a machine-width bracket still
        // pins the root to full double precision
        if (hi - lo <= 4e-16 * std::max({1.0, std::abs(lo), std::abs(hi)}))
            return (lo + hi) / 2;
        const double slope = 1 / s_theta + a_derivs(family, th).d2;
        double next = th - r / slope;
        // a step past the midpoint of the bracket can ping-pong across flat
        // likelihood tails without shrinking it; bisect instead
        if (!(next > lo && next < hi) || std::abs(next - th) > (hi - lo) / 2)
            next = (lo + hi) / 2;
        th = next;
    }
    throw NonConvergenceError("solve_theta_star: no residual zero or bracket collapse after 200 iterations (y=" +
                              std::to_string(y) + ", theta_cav=" + std::to_string(theta_cav) +
                              ", s_theta=" + std::to_string(s_theta) + ", theta=" + std::to_string(th) + ")");
}

struct GOutResult {
    double g;           // y - a'(theta_star)
    double dg;          // -a''(theta_star) / (1 + s_theta a''(theta_star)), <= 0
    double theta_star;
};

// s_theta = 0 is the fully thresholded limit: theta_star collapses onto the
// cavity parameter and the score derivatives lose their damping denominator.
inline GOutResult g_out_pair(double y, double theta_cav, double s_theta, Family family) {
    if (s_theta <= 0) {
        const auto d = a_derivs(family, theta_cav);
        return {y - d.d1, -d.d2, theta_cav};
    }
    const double ts = solve_theta_star(y, theta_cav, s_theta, family);
    const auto d = a_derivs(family, ts);
    return {y - d.d1, -d.d2 / (1 + s_theta * d.d2), ts};
}

inline GampState gamp_run(const Dataset& data, Family family, const Penalty& pen,
                          const GampOptions& opts = {}) {
    validate_dataset(data);
    require_identifiable(pen, data.M(), data.N());
    const Eigen::Index M = data.M(), N = data.N();
    const double sqN = std::sqrt(double(N));
    const Eigen::MatrixXd F2 = data.F.cwiseAbs2();

    GampState st;
    st.xhat = Eigen::VectorXd::Zero(N);
    st.s = Eigen::VectorXd::Ones(N);
    if (opts.x0.size() == N) {
        st.xhat = opts.x0;
    } else if (opts.random_init) {
        Philox4x64 g(opts.init_seed, 2);
        for (Eigen::Index i = 0; i < N; ++i) st.xhat[i] = 0.1 * g.next_gaussian();
    }
    Eigen::VectorXd g_prev = Eigen::VectorXd::Zero(M);

    Eigen::VectorXd theta_cav(M), g_new(M), dg_new(M), col_curv(N);

    const auto output_pass = [&](const Eigen::VectorXd& xhat, const Eigen::VectorXd& s) {
        st.s_theta = F2 * s / double(N);
        st.theta_hat = data.F * xhat / sqN;
        theta_cav = st.theta_hat - g_prev.cwiseProduct(st.s_theta);
        for (Eigen::Index mu = 0; mu < M; ++mu) {
            const auto r = g_out_pair(data.y[mu], theta_cav[mu], st.s_theta[mu], family);
            g_new[mu] = r.g;
            dg_new[mu] = r.dg;
        }
        // col_curv_i = (F.^2 row i of transpose) dg / N, <= 0
        col_curv = F2.transpose() * dg_new / double(N);
        st.Sigma = -col_curv.cwiseInverse();
        st.m = st.Sigma.cwiseProduct(data.F.transpose() * g_new / sqN -
                                     xhat.cwiseProduct(col_curv));
    };

    Eigen::VectorXd x_new(N), s_new(N);
    for (int t = 1; t <= opts.max_iter; ++t) {
        output_pass(st.xhat, st.s);
        prox_en(st.m, st.Sigma, pen, x_new, s_new);

        const Eigen::VectorXd x_damped = opts.damping * x_new + (1 - opts.damping) * st.xhat;
        const Eigen::VectorXd s_damped = opts.damping * s_new + (1 - opts.damping) * st.s;
        const double delta = (x_damped - st.xhat).cwiseAbs().maxCoeff();
        st.xhat = x_damped;
        st.s = s_damped;
        g_prev = g_new;
        st.iter = t;

        if (!st.xhat.allFinite() || !st.s.allFinite() || !g_prev.allFinite() ||
            !st.s_theta.allFinite())
            throw NumericError("gamp_run: NaN or Inf at iteration " + std::to_string(t));

        if (delta < opts.tol) {
            st.converged = true;
            break;
        }
    }

    // finishing pass: one undamped step so thresholded coordinates come back
    // as exact zeros (damping alone only decays them geometrically), then a
    // refresh of the observation-side quantities at the returned (xhat, s)
    output_pass(st.xhat, st.s);
    prox_en(st.m, st.Sigma, pen, x_new, s_new);
    st.xhat = x_new;
    st.s = s_new;
    g_prev = g_new;
    output_pass(st.xhat, st.s);
    st.g_out = g_new;
    st.dg_out = dg_new;
    if (!st.g_out.allFinite() || !st.dg_out.allFinite() || !st.Sigma.allFinite())
        throw NumericError("gamp_run: NaN or Inf in the final refresh");
    return st;
}

// alpha * mean(s_i^2) * mean(dg_mu^2) > 1 flags a locally unstable fixed point.
inline double stability_margin(const GampState& st, double alpha) {
    const double ms2 = st.s.squaredNorm() / double(st.s.size());
    const double mg2 = st.dg_out.squaredNorm() / double(st.dg_out.size());
    return alpha * ms2 * mg2;
}

}  // namespace gampgap
