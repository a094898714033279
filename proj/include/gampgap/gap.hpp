#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "gampgap/common.hpp"
#include "gampgap/dataset.hpp"
#include "gampgap/gamp.hpp"
#include "gampgap/likelihood.hpp"
#include "gampgap/penalty.hpp"

namespace gampgap {

// Per-observation leave-one-out surrogates. theta_cav is the estimate with
// observation mu's self-feedback removed; s_theta_cav is the S actually used
// in that subtraction; chi_cav folds the curvature mismatch d into chi_theta.
struct CavityQuantities {
    Eigen::VectorXd theta_cav;
    Eigen::VectorXd s_theta_cav;
    Eigen::VectorXd chi_theta;  // s_theta / (1 + s_theta a''(theta_hat))
    Eigen::VectorXd chi_cav;    // chi_theta / (1 + d chi_theta)
    Eigen::VectorXd d;
};

struct GapTerms {
    double cfv = 0;
    double fchi = 0;
    double delta = 0;  // cfv + fchi
};

// One row of estimator output. radius_ok is the gaussian series diagnostic;
// other families report true. degenerate marks an empty support.
struct GapReport {
    double err_train = 0;
    double gdf = 0;
    double sure = 0;
    double fv = 0;
    double waic = 0;
    double cfv = 0;
    double fchi = 0;
    double delta_loocv_hat = 0;
    double err_loocv_hat = 0;
    bool radius_ok = true;
    double stability_margin = 0;
    bool degenerate = false;
};

struct SeriesRadius {
    bool ok = true;
    double worst_ratio = 0;
};

// -(1/M) sum [theta y - a(theta) + b(y)]
inline double training_error(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& y,
                             Family family) {
    const Eigen::Index M = y.size();
    if (theta_hat.size() != M)
        throw std::invalid_argument("training_error: vector sizes must match");
    double s = 0;
    for (Eigen::Index mu = 0; mu < M; ++mu) s += neg_log_lik(family, y[mu], theta_hat[mu]);
    return s / static_cast<double>(M);
}

// chi = s_theta / (1 + s_theta a''); dg = -a''/(1 + s_theta a'') makes this
// chi = s_theta (1 + s_theta dg) without re-evaluating a''.
inline double chi_from_dg(double s_theta, double dg) { return s_theta * (1.0 + s_theta * dg); }

// (1/M) sum chi_theta, the model-parameter response summed per observation.
inline double gdf_gamp(const GampState& st, Family family) {
    (void)family;  // a'' at theta_star already lives in dg_out
    double s = 0;
    for (Eigen::Index mu = 0; mu < st.s_theta.size(); ++mu)
        s += chi_from_dg(st.s_theta[mu], st.dg_out[mu]);
    return s / static_cast<double>(st.s_theta.size());
}

// In-sample prediction error estimate under known gaussian noise.
inline double sure(double err_train, double gdf, double noise_var) {
    if (!(noise_var > 0)) throw std::invalid_argument("sure: noise variance must be positive");
    return 2.0 * noise_var * err_train + 2.0 * noise_var * gdf;
}

// (1/M) sum g_out^2 chi_theta, the per-observation log-likelihood variance.
inline double fv_gamp(const GampState& st, const Eigen::VectorXd& y, Family family) {
    (void)y;
    (void)family;
    double s = 0;
    for (Eigen::Index mu = 0; mu < st.s_theta.size(); ++mu)
        s += st.g_out[mu] * st.g_out[mu] * chi_from_dg(st.s_theta[mu], st.dg_out[mu]);
    return s / static_cast<double>(st.s_theta.size());
}

namespace detail {

// Central difference of a'' at theta; feeds the d_mu Taylor fallback.
inline double a3_fd(Family family, double theta) {
    const double h = 1e-5;
    return (a_derivs(family, theta + h).d2 - a_derivs(family, theta - h).d2) / (2.0 * h);
}

}  // namespace detail

// Leave-one-out surrogates from a converged state. With use_cavity_variance
// the subtraction uses s_theta^{\mu} = chi_theta/(1 - a''(theta_cav) chi_theta)
// resolved in two passes: a'' is taken at the plain-route theta_cav first,
// then theta_cav is recomputed once with the cavity S.
inline CavityQuantities cavity_from_state(const GampState& st, const Eigen::VectorXd& y,
                                          Family family, bool use_cavity_variance) {
    const Eigen::Index M = y.size();
    if (st.theta_hat.size() != M || st.s_theta.size() != M)
        throw std::invalid_argument("cavity_from_state: vector sizes must match");

    CavityQuantities cav;
    cav.theta_cav.resize(M);
    cav.s_theta_cav.resize(M);
    cav.chi_theta.resize(M);
    cav.chi_cav.resize(M);
    cav.d.resize(M);

    for (Eigen::Index mu = 0; mu < M; ++mu) {
        const double th = st.theta_hat[mu];
        const auto der = a_derivs(family, th);
        const double r = y[mu] - der.d1;
        const double chi = st.s_theta[mu] / (1.0 + st.s_theta[mu] * der.d2);
        cav.chi_theta[mu] = chi;

        double S = st.s_theta[mu];
        double tc = th - S * r;
        if (use_cavity_variance) {
            const double den = 1.0 - a_derivs(family, tc).d2 * chi;
            if (den <= 1e-10)
                throw NumericError("cavity_from_state: singular cavity variance at observation " +
                                   std::to_string(mu));
            S = chi / den;
            tc = th - S * r;
        }
        cav.s_theta_cav[mu] = S;
        cav.theta_cav[mu] = tc;

        const double delta = th - tc;
        double d;
        if (std::abs(delta) < 1e-8) {
            d = -0.5 * detail::a3_fd(family, th) * delta;
        } else {
            d = (der.d1 - a_derivs(family, tc).d1) / delta - der.d2;
        }
        cav.d[mu] = d;
        cav.chi_cav[mu] = chi / (1.0 + d * chi);
    }
    return cav;
}

// cfv = (1/M) sum r^2 chi_cav with r = y - a'(theta_cav);
// fchi = -(1/M) sum [a(theta_cav + chi_cav r) - a(theta_cav) - a'(theta_cav) chi_cav r]
inline GapTerms delta_loocv_hat(const CavityQuantities& cav, const Eigen::VectorXd& y,
                                Family family) {
    const Eigen::Index M = y.size();
    if (cav.theta_cav.size() != M)
        throw std::invalid_argument("delta_loocv_hat: vector sizes must match");
    GapTerms out;
    for (Eigen::Index mu = 0; mu < M; ++mu) {
        const double tc = cav.theta_cav[mu];
        const double r = y[mu] - a_derivs(family, tc).d1;
        out.cfv += r * r * cav.chi_cav[mu];
        try {
            out.fchi -= cumulant_gap(family, tc, cav.chi_cav[mu] * r);
        } catch (const std::domain_error& e) {
            throw std::domain_error("delta_loocv_hat: observation " + std::to_string(mu) + ": " +
                                    e.what());
        }
    }
    out.cfv /= static_cast<double>(M);
    out.fchi /= static_cast<double>(M);
    out.delta = out.cfv + out.fchi;
    return out;
}

// eta * max s_theta/(1+s_theta) < 1 bounds the holdout series expansion.
inline SeriesRadius series_radius_ok(const GampState& st, Family family, double eta = 1.0) {
    if (family != Family::gaussian)
        throw std::invalid_argument(
            "series_radius_ok: the convergence-radius bound covers the gaussian family only");
    SeriesRadius out;
    for (Eigen::Index mu = 0; mu < st.s_theta.size(); ++mu)
        out.worst_ratio =
            std::max(out.worst_ratio, eta * st.s_theta[mu] / (1.0 + st.s_theta[mu]));
    out.ok = out.worst_ratio < 1.0 - 1e-9;
    return out;
}

// Full estimator row from a converged state (the message-passing route).
inline GapReport gap_from_state(const GampState& st, const Dataset& data, Family family,
                                bool use_cavity_variance = false, double noise_var = 1.0) {
    GapReport rep;
    rep.err_train = training_error(st.theta_hat, data.y, family);
    rep.gdf = gdf_gamp(st, family);
    rep.sure = sure(rep.err_train, rep.gdf, noise_var);
    rep.fv = fv_gamp(st, data.y, family);
    rep.waic = rep.err_train + rep.fv;
    const CavityQuantities cav = cavity_from_state(st, data.y, family, use_cavity_variance);
    const GapTerms terms = delta_loocv_hat(cav, data.y, family);
    rep.cfv = terms.cfv;
    rep.fchi = terms.fchi;
    rep.delta_loocv_hat = terms.delta;
    rep.err_loocv_hat = rep.err_train + terms.delta;
    if (family == Family::gaussian) rep.radius_ok = series_radius_ok(st, family).ok;
    rep.stability_margin = stability_margin(st, data.alpha());
    return rep;
}

// Same row from any stationary point: the parameter responses come from the
// penalized Hessian restricted to the support (every coordinate when
// lambda1 = 0), then the state route is reused on the reconstructed
// quantities. Empty support yields the degenerate null-model report.
inline GapReport gap_from_estimate(const Eigen::VectorXd& xhat, const Dataset& data,
                                   Family family, const Penalty& pen,
                                   bool use_cavity_variance = false, double noise_var = 1.0) {
    validate_dataset(data);
    const Eigen::Index M = data.M(), N = data.N();
    if (xhat.size() != N) throw std::invalid_argument("gap_from_estimate: xhat has wrong size");
    const double dN = static_cast<double>(N);
    const Eigen::VectorXd theta = data.F * xhat / std::sqrt(dN);

    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < N; ++i)
        if (pen.lambda1 == 0 || xhat[i] != 0) support.push_back(i);

    GampState view;
    view.xhat = xhat;
    view.theta_hat = theta;
    view.converged = true;
    view.s = Eigen::VectorXd::Zero(N);

    Eigen::VectorXd d2(M);
    for (Eigen::Index mu = 0; mu < M; ++mu) d2[mu] = a_derivs(family, theta[mu]).d2;

    if (support.empty()) {
        GapReport rep;
        rep.degenerate = true;
        rep.err_train = training_error(theta, data.y, family);
        rep.sure = sure(rep.err_train, 0.0, noise_var);
        rep.waic = rep.err_train;
        rep.err_loocv_hat = rep.err_train;
        return rep;
    }

    const Eigen::Index k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd FL(M, k);
    for (Eigen::Index j = 0; j < k; ++j) FL.col(j) = data.F.col(support[j]);

    Eigen::MatrixXd J = FL.transpose() * d2.asDiagonal() * FL / dN;
    J.diagonal().array() += pen.lambda2;
    Eigen::MatrixXd chi;
    if (pen.lambda2 == 0) {
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible())
            throw LinAlgError("gap_from_estimate: singular penalized Hessian on the support");
        chi = lu.inverse();
    } else {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(J);
        chi = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
        if (ldlt.info() != Eigen::Success || !chi.allFinite())
            throw LinAlgError("gap_from_estimate: singular penalized Hessian on the support");
    }

    for (Eigen::Index j = 0; j < k; ++j) view.s[support[j]] = chi(j, j);
    if (use_cavity_variance) {
        // full quadratic form (1/N) f_mu' chi f_mu; the off-diagonal terms
        // vanish only in mean for i.i.d. rows, and for the gaussian family
        // this is the exact per-observation response of the fit to y_mu
        const Eigen::VectorXd q = (FL * chi).cwiseProduct(FL).rowwise().sum() / dN;
        view.s_theta.resize(M);
        for (Eigen::Index mu = 0; mu < M; ++mu) {
            const double den = 1.0 - d2[mu] * q[mu];
            if (den <= 1e-10)
                throw NumericError(
                    "gap_from_estimate: singular cavity variance at observation " +
                    std::to_string(mu));
            // s_theta is stored pre-subtraction so the downstream map
            // s/(1+s a'') returns the quadratic form unchanged
            view.s_theta[mu] = q[mu] / den;
        }
    } else {
        view.s_theta = data.F.cwiseAbs2() * view.s / dN;
    }
    view.g_out.resize(M);
    view.dg_out.resize(M);
    for (Eigen::Index mu = 0; mu < M; ++mu) {
        view.g_out[mu] = data.y[mu] - a_derivs(family, theta[mu]).d1;
        view.dg_out[mu] = -d2[mu] / (1.0 + view.s_theta[mu] * d2[mu]);
    }
    return gap_from_state(view, data, family, use_cavity_variance, noise_var);
}

struct TicAic {
    double tic_gap = 0;
    double aic_gap = 0;
};

// tic_gap = Tr(S J^{-1})/M with S = (1/N) F' diag(r^2) F and J the penalized
// Hessian, both restricted to the support; aic_gap counts parameters.
inline TicAic tic_aic(const Eigen::VectorXd& xhat, const Dataset& data, Family family,
                      const Penalty& pen) {
    validate_dataset(data);
    const Eigen::Index M = data.M(), N = data.N();
    if (xhat.size() != N) throw std::invalid_argument("tic_aic: xhat has wrong size");
    const double dN = static_cast<double>(N);
    const Eigen::VectorXd theta = data.F * xhat / std::sqrt(dN);

    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < N; ++i)
        if (pen.lambda1 == 0 || xhat[i] != 0) support.push_back(i);

    TicAic out;
    Eigen::Index nnz = 0;
    for (Eigen::Index i = 0; i < N; ++i)
        if (xhat[i] != 0) ++nnz;
    out.aic_gap = static_cast<double>(nnz) / static_cast<double>(M);
    if (support.empty()) return out;

    const Eigen::Index k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd FL(M, k);
    for (Eigen::Index j = 0; j < k; ++j) FL.col(j) = data.F.col(support[j]);

    Eigen::VectorXd d2(M), r2(M);
    for (Eigen::Index mu = 0; mu < M; ++mu) {
        const auto der = a_derivs(family, theta[mu]);
        d2[mu] = der.d2;
        const double r = data.y[mu] - der.d1;
        r2[mu] = r * r;
    }
    Eigen::MatrixXd J = FL.transpose() * d2.asDiagonal() * FL / dN;
    J.diagonal().array() += pen.lambda2;
    const Eigen::MatrixXd S = FL.transpose() * r2.asDiagonal() * FL / dN;

    const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) throw LinAlgError("tic_aic: singular penalized Hessian");
    out.tic_gap = lu.solve(S).trace() / static_cast<double>(M);
    return out;
}

}  // namespace gampgap
