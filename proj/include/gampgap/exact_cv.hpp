#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "gampgap/cd.hpp"
#include "gampgap/common.hpp"
#include "gampgap/dataset.hpp"
#include "gampgap/gamp.hpp"
#include "gampgap/likelihood.hpp"
#include "gampgap/penalty.hpp"

namespace gampgap {

// Leverages and fitted values of a linear smoother, plus the two scalars
// everything downstream wants from them.
struct HatSummary {
    Eigen::VectorXd h_diag;  // H_mumu
    Eigen::VectorXd yhat;    // H y
    double df = 0;           // Tr(H) / M
    double press = 0;
};

// (1/2M) sum ((y - yhat) / (1 - H_mumu))^2
inline double press_loocv(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                          const Eigen::VectorXd& h_diag) {
    const Eigen::Index M = y.size();
    if (yhat.size() != M || h_diag.size() != M)
        throw std::invalid_argument("press_loocv: vector sizes must match");
    double s = 0;
    for (Eigen::Index mu = 0; mu < M; ++mu) {
        if (h_diag[mu] >= 1.0)
            throw NumericError("press_loocv: leverage at or above 1 for observation " +
                               std::to_string(mu));
        const double r = (y[mu] - yhat[mu]) / (1.0 - h_diag[mu]);
        s += r * r;
    }
    return s / (2.0 * static_cast<double>(M));
}

// H = (1/N) F (F'F/N + lambda2 I)^{-1} F'. Only the diagonal and H y are
// formed, never H itself.
inline HatSummary ridge_hat(const Dataset& data, double lambda2) {
    validate_dataset(data);
    if (lambda2 < 0) throw std::invalid_argument("ridge_hat: lambda2 must be nonnegative");
    const Eigen::Index M = data.M(), N = data.N();
    const double dN = static_cast<double>(N);

    Eigen::MatrixXd A = data.F.transpose() * data.F / dN;
    A.diagonal().array() += lambda2;

    Eigen::MatrixXd B;  // A^{-1} F'
    if (lambda2 == 0) {
        if (M <= N)
            throw LinAlgError("ridge_hat: lambda2 = 0 needs more observations than predictors");
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (!lu.isInvertible())
            throw LinAlgError("ridge_hat: singular normal matrix at lambda2 = 0");
        B = lu.solve(data.F.transpose());
    } else {
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() != Eigen::Success)
            throw LinAlgError("ridge_hat: normal matrix factorization failed");
        B = ldlt.solve(data.F.transpose());
    }

    HatSummary out;
    out.h_diag.resize(M);
    for (Eigen::Index mu = 0; mu < M; ++mu)
        out.h_diag[mu] = data.F.row(mu).dot(B.col(mu)) / dN;
    out.yhat = data.F * (B * data.y) / dN;
    out.df = out.h_diag.sum() / static_cast<double>(M);

    if (lambda2 == 0) {
        Eigen::Index worst = 0;
        const double hmax = out.h_diag.maxCoeff(&worst);
        // the holdout identity is singular at leverage 1; refuse the formula
        if (hmax > 1.0 - 1e-8)
            throw NumericError("ridge_hat: leverage " + std::to_string(hmax) +
                               " at observation " + std::to_string(worst) +
                               " leaves no margin for the holdout identity at lambda2 = 0");
    }
    out.press = press_loocv(data.y, out.yhat, out.h_diag);
    return out;
}

// Copy of the dataset with observation mu removed.
inline Dataset leave_one_out(const Dataset& data, Eigen::Index mu) {
    const Eigen::Index M = data.M(), N = data.N();
    if (mu < 0 || mu >= M) throw std::invalid_argument("leave_one_out: index out of range");
    Dataset sub;
    sub.y.resize(M - 1);
    sub.F.resize(M - 1, N);
    sub.y.head(mu) = data.y.head(mu);
    sub.y.tail(M - 1 - mu) = data.y.tail(M - 1 - mu);
    sub.F.topRows(mu) = data.F.topRows(mu);
    sub.F.bottomRows(M - 1 - mu) = data.F.bottomRows(M - 1 - mu);
    return sub;
}

enum class RefitSolver { cd, gamp };

struct BruteOptions {
    bool skip_failures = false;  // record failed refits instead of throwing
    GampOptions gamp;
    GlmCdOptions cd;
};

struct BruteLoocvResult {
    double err_loocv = 0;             // mean holdout loss over completed refits
    Eigen::VectorXd per_mu;           // holdout losses, NaN where skipped
    std::vector<Eigen::Index> failed; // ascending indices of skipped refits
};

// M refits, each on the dataset with one observation removed and each warm
// started from the full-data solution. Refits run under parallel_for; the
// mean is reduced in index order.
inline BruteLoocvResult brute_loocv(const Dataset& data, Family family, const Penalty& pen,
                                    RefitSolver solver, const BruteOptions& opts = {}) {
    validate_dataset(data);
    validate_penalty(pen);
    const Eigen::Index M = data.M(), N = data.N();
    const double sqN = std::sqrt(static_cast<double>(N));

    BruteLoocvResult out;
    out.per_mu = Eigen::VectorXd::Constant(M, std::numeric_limits<double>::quiet_NaN());

    if (M == 1) {
        // the training set is empty, so the fit is the penalty-only argmax x = 0
        out.per_mu[0] = neg_log_lik(family, data.y[0], 0.0);
        out.err_loocv = out.per_mu[0];
        return out;
    }

    const auto fit = [&](const Dataset& d, const Eigen::VectorXd* warm) -> Eigen::VectorXd {
        if (solver == RefitSolver::gamp) {
            GampOptions go = opts.gamp;
            if (warm) go.x0 = *warm;
            const GampState st = gamp_run(d, family, pen, go);
            if (!st.converged)
                throw NonConvergenceError("message-passing fit did not converge in " +
                                          std::to_string(st.iter) + " iterations");
            return st.xhat;
        }
        if (family == Family::gaussian) {
            CdOptions co = opts.cd.inner;
            if (warm) co.x0 = *warm;
            return cd_fit_gaussian(d, pen, co);
        }
        GlmCdOptions go = opts.cd;
        if (warm) go.x0 = *warm;
        return cd_fit_glm(d, family, pen, go);
    };

    const Eigen::VectorXd xfull = fit(data, nullptr);

    std::vector<char> bad(static_cast<std::size_t>(M), 0);
    parallel_for(static_cast<std::size_t>(M), [&](std::size_t mu) {
        const Eigen::Index i = static_cast<Eigen::Index>(mu);
        try {
            const Eigen::VectorXd xh = fit(leave_one_out(data, i), &xfull);
            out.per_mu[i] = neg_log_lik(family, data.y[i], data.F.row(i).dot(xh) / sqN);
        } catch (const std::exception& e) {
            if (!opts.skip_failures)
                throw NonConvergenceError("brute_loocv: refit failed leaving out observation " +
                                          std::to_string(i) + ": " + e.what());
            bad[mu] = 1;
        }
    });

    double sum = 0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < M; ++i) {
        if (bad[static_cast<std::size_t>(i)]) {
            out.failed.push_back(i);
            continue;
        }
        sum += out.per_mu[i];
        ++count;
    }
    out.err_loocv = count ? sum / static_cast<double>(count)
                          : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace gampgap
