#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gampgap/cd.hpp"
#include "gampgap/common.hpp"
#include "gampgap/datagen.hpp"
#include "gampgap/exact_cv.hpp"
#include "gampgap/gamp.hpp"
#include "gampgap/gap.hpp"
#include "gampgap/replica.hpp"

namespace gampgap {

// Which construction fills a delta_loocv_hat column. The *_cavity variants
// substitute the cavity variance for the full-sample one inside the
// correction terms; the hessian variants rebuild the responses from the
// penalized Hessian at xhat instead of the message-passing state.
enum class GapRoute { gamp, gamp_cavity, hessian, hessian_cavity };

inline const char* route_name(GapRoute r) {
    switch (r) {
        case GapRoute::gamp: return "gamp";
        case GapRoute::gamp_cavity: return "gamp_cavity";
        case GapRoute::hessian: return "hessian";
        case GapRoute::hessian_cavity: return "hessian_cavity";
    }
    throw std::invalid_argument("route_name: unknown route");
}

inline GapRoute route_from_name(const std::string& s) {
    if (s == "gamp") return GapRoute::gamp;
    if (s == "gamp_cavity") return GapRoute::gamp_cavity;
    if (s == "hessian") return GapRoute::hessian;
    if (s == "hessian_cavity" || s == "cavity") return GapRoute::hessian_cavity;
    throw std::invalid_argument("unknown estimator route '" + s + "'");
}

// One sweep axis; the grid holds the values swept along it. none means a
// single point taken from the fixed n/lambda1 fields.
enum class SweepAxis { none, n, alpha, lambda1, alpha_tilde };

struct SweepConfig {
    Family family = Family::gaussian;
    PredictorSpec predictors{};
    int m_rows = 200;
    int n_cols = 0;  // fixed N; required unless the axis provides it
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    SweepAxis axis = SweepAxis::none;
    std::vector<double> grid;
    double rho = 1.0;
    double sigma_x = 1.0;
    double sigma = 1.0;
    int seeds = 20;
    std::uint64_t base_seed = 1;
    std::vector<GapRoute> routes{GapRoute::gamp};
    RefitSolver solver = RefitSolver::gamp;
    bool join_replica = false;
    bool exact = true;  // off writes NaN into the delta_loocv_exact columns
    GampOptions gamp{};
    GlmCdOptions cd{};
};

inline void validate_sweep_config(const SweepConfig& cfg) {
    if (cfg.m_rows < 1) throw std::invalid_argument("sweep: m must be at least 1");
    if (cfg.axis != SweepAxis::n && cfg.axis != SweepAxis::alpha && cfg.n_cols < 1)
        throw std::invalid_argument("sweep: n must be at least 1");
    for (double v : cfg.grid) {
        if (!std::isfinite(v)) throw std::invalid_argument("sweep: non-finite grid value");
        if (cfg.axis == SweepAxis::n && (v < 1 || v != std::floor(v)))
            throw std::invalid_argument("sweep: n grid values must be positive integers");
        if ((cfg.axis == SweepAxis::alpha || cfg.axis == SweepAxis::alpha_tilde) && v <= 0)
            throw std::invalid_argument("sweep: ratio grid values must be positive");
        if (cfg.axis == SweepAxis::lambda1 && v < 0)
            throw std::invalid_argument("sweep: lambda1 grid values must be nonnegative");
    }
    validate_penalty(Penalty{cfg.lambda1, cfg.lambda2});
    if (cfg.rho < 0 || cfg.rho > 1) throw std::invalid_argument("sweep: rho must lie in [0,1]");
    if (cfg.sigma_x <= 0) throw std::invalid_argument("sweep: sigma_x must be positive");
    if (cfg.sigma < 0) throw std::invalid_argument("sweep: sigma must be nonnegative");
    if (cfg.seeds < 1) throw std::invalid_argument("sweep: seeds must be at least 1");
    if (cfg.routes.empty()) throw std::invalid_argument("sweep: at least one route required");
    for (std::size_t i = 0; i < cfg.routes.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.routes.size(); ++j)
            if (cfg.routes[i] == cfg.routes[j])
                throw std::invalid_argument("sweep: duplicate route");
    if (cfg.solver == RefitSolver::cd)
        for (GapRoute r : cfg.routes)
            if (r == GapRoute::gamp || r == GapRoute::gamp_cavity)
                throw std::invalid_argument(
                    "sweep: message-passing routes need the gamp solver");
    if (cfg.join_replica && cfg.family != Family::gaussian && cfg.family != Family::logistic)
        throw std::invalid_argument(
            "sweep: theory columns cover gaussian and logistic likelihoods only");
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(v);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline double parse_num(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number '" + v + "' for " + key);
    }
}

inline void set_axis(SweepConfig& cfg, SweepAxis axis, const std::string& value,
                     const std::string& key) {
    if (cfg.axis != SweepAxis::none)
        throw std::invalid_argument("config: more than one grid key (" + key + ")");
    cfg.axis = axis;
    cfg.grid.clear();
    for (const std::string& s : split_list(value)) cfg.grid.push_back(parse_num(s, key));
}

}  // namespace detail

// key = value lines; # starts a comment; lists are comma separated.
inline SweepConfig parse_sweep_config_text(const std::string& text) {
    SweepConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key == "family") {
            cfg.family = family_from_name(value);
        } else if (key == "kind") {
            if (value == "iid")
                cfg.predictors.kind = PredictorKind::iid;
            else if (value == "correlated")
                cfg.predictors.kind = PredictorKind::correlated;
            else if (value == "rank_deficient")
                cfg.predictors.kind = PredictorKind::rank_deficient;
            else
                throw std::invalid_argument("config: unknown predictor kind '" + value + "'");
        } else if (key == "sigma_d") {
            cfg.predictors.sigma_d = detail::parse_num(value, key);
        } else if (key == "rho_f") {
            cfg.predictors.rho_F = detail::parse_num(value, key);
        } else if (key == "m") {
            cfg.m_rows = static_cast<int>(detail::parse_num(value, key));
        } else if (key == "n") {
            cfg.n_cols = static_cast<int>(detail::parse_num(value, key));
        } else if (key == "n_grid") {
            detail::set_axis(cfg, SweepAxis::n, value, key);
        } else if (key == "alpha_grid") {
            detail::set_axis(cfg, SweepAxis::alpha, value, key);
        } else if (key == "lambda1_grid") {
            detail::set_axis(cfg, SweepAxis::lambda1, value, key);
        } else if (key == "alpha_tilde_grid") {
            detail::set_axis(cfg, SweepAxis::alpha_tilde, value, key);
        } else if (key == "lambda1") {
            cfg.lambda1 = detail::parse_num(value, key);
        } else if (key == "lambda2") {
            cfg.lambda2 = detail::parse_num(value, key);
        } else if (key == "rho") {
            cfg.rho = detail::parse_num(value, key);
        } else if (key == "sigma_x") {
            cfg.sigma_x = detail::parse_num(value, key);
        } else if (key == "sigma") {
            cfg.sigma = detail::parse_num(value, key);
        } else if (key == "seeds") {
            cfg.seeds = static_cast<int>(detail::parse_num(value, key));
        } else if (key == "base_seed") {
            cfg.base_seed = static_cast<std::uint64_t>(detail::parse_num(value, key));
        } else if (key == "routes") {
            cfg.routes.clear();
            for (const std::string& s : detail::split_list(value))
                cfg.routes.push_back(route_from_name(s));
        } else if (key == "solver") {
            if (value == "gamp")
                cfg.solver = RefitSolver::gamp;
            else if (value == "cd")
                cfg.solver = RefitSolver::cd;
            else
                throw std::invalid_argument("config: unknown solver '" + value + "'");
        } else if (key == "replica") {
            cfg.join_replica = detail::parse_bool(value, key);
        } else if (key == "exact") {
            cfg.exact = detail::parse_bool(value, key);
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    validate_sweep_config(cfg);
    return cfg;
}

inline SweepConfig parse_sweep_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sweep_config_text(buf.str());
}

struct PinResult {
    double lambda1 = 0.0;
    Eigen::Index nnz = 0;
    bool achieved = false;  // support count within +-1 of round(M/target)
};

namespace detail {

inline Eigen::VectorXd fit_once(const Dataset& data, Family family, const Penalty& pen,
                                RefitSolver solver, const GampOptions& gopts,
                                const GlmCdOptions& copts) {
    if (solver == RefitSolver::gamp) {
        const GampState st = gamp_run(data, family, pen, gopts);
        if (!st.converged)
            throw NonConvergenceError("fit did not converge in " + std::to_string(st.iter) +
                                      " iterations");
        return st.xhat;
    }
    if (family == Family::gaussian) return cd_fit_gaussian(data, pen, copts.inner);
    return cd_fit_glm(data, family, pen, copts);
}

inline Eigen::Index nnz_of(const Eigen::VectorXd& x) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) ++k;
    return k;
}

}  // namespace detail

// Bisection over lambda1 until the fitted support count hits round(M/target)
// within +-1. The support is only approximately monotone in lambda1, so the
// closest visited point is returned (achieved = false) when 60 halvings do
// not land inside the band.
inline PinResult pin_alpha_tilde(const Dataset& data, Family family, double lambda2,
                                 double target_alpha_tilde,
                                 RefitSolver solver = RefitSolver::gamp,
                                 const GampOptions& gopts = {}, const GlmCdOptions& copts = {}) {
    validate_dataset(data);
    const Eigen::Index M = data.M(), N = data.N();
    if (!std::isfinite(target_alpha_tilde) || target_alpha_tilde <= 0)
        throw std::invalid_argument("pin_alpha_tilde: target must be positive");
    const Eigen::Index want = static_cast<Eigen::Index>(
        std::llround(static_cast<double>(M) / target_alpha_tilde));
    if (want < 1 || want > std::min(M, N))
        throw std::invalid_argument(
            "pin_alpha_tilde: target support count falls outside [1, min(M,N)]");

    const auto count_at = [&](double l1) {
        return detail::nnz_of(
            detail::fit_once(data, family, Penalty{l1, lambda2}, solver, gopts, copts));
    };

    PinResult best;
    best.lambda1 = 0.0;
    best.nnz = count_at(0.0);
    if (std::llabs(best.nnz - want) <= 1) {
        best.achieved = true;
        return best;
    }
    if (best.nnz < want) return best;  // denser than anything lambda1 can reach

    double lo = 0.0, hi = 1.0;
    Eigen::Index nnz_hi = count_at(hi);
    int doublings = 0;
    while (nnz_hi > want + 1 && doublings < 60) {
        lo = hi;
        hi *= 2.0;
        nnz_hi = count_at(hi);
        ++doublings;
    }
    if (std::llabs(nnz_hi - want) <= 1) return {hi, nnz_hi, true};
    if (std::llabs(nnz_hi - want) < std::llabs(best.nnz - want)) best = {hi, nnz_hi, false};

    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Eigen::Index k = count_at(mid);
        if (std::llabs(k - want) <= 1) return {mid, k, true};
        if (std::llabs(k - want) < std::llabs(best.nnz - want)) best = {mid, k, false};
        if (k > want)
            lo = mid;
        else
            hi = mid;
    }
    return best;
}

struct SweepTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct SweepOutput {
    SweepTable aggregate;  // one row per grid point
    SweepTable raw;        // one row per (grid point, seed)
};

namespace detail {

constexpr int kSweepStats = 12;
inline const std::array<const char*, kSweepStats>& sweep_stat_names() {
    static const std::array<const char*, kSweepStats> names = {
        "err_train",        "gdf",
        "sure",             "fv",
        "waic",             "cfv",
        "fchi",             "delta_loocv_hat",
        "delta_loocv_exact", "err_extra_empirical",
        "stability_margin", "radius_ok"};
    return names;
}

struct SeedOutcome {
    bool failed = true;
    int refit_skips = 0;
    double alpha_tilde = std::numeric_limits<double>::quiet_NaN();
    std::array<double, kSweepStats> stats;
    std::vector<double> route_delta;

    SeedOutcome() { stats.fill(std::numeric_limits<double>::quiet_NaN()); }
};

inline SeedOutcome run_point_seed(const SweepConfig& cfg, int n, const Penalty& pen,
                                  std::uint64_t seed) {
    SeedOutcome out;
    out.route_delta.assign(cfg.routes.size(), std::numeric_limits<double>::quiet_NaN());
    if (!std::isfinite(pen.lambda1)) return out;

    const Eigen::MatrixXd F = gen_predictors(cfg.predictors, cfg.m_rows, n, seed);
    auto [data, truth] =
        gen_truth_and_data(F, cfg.family, cfg.rho, cfg.sigma_x, cfg.sigma, seed);

    GampState st;
    Eigen::VectorXd xhat;
    try {
        if (cfg.solver == RefitSolver::gamp) {
            st = gamp_run(data, cfg.family, pen, cfg.gamp);
            if (!st.converged) return out;
            xhat = st.xhat;
        } else {
            xhat = fit_once(data, cfg.family, pen, RefitSolver::cd, cfg.gamp, cfg.cd);
        }
    } catch (const std::exception&) {
        return out;
    }
    out.failed = false;

    const double noise_var = cfg.family == Family::gaussian ? cfg.sigma * cfg.sigma : 1.0;
    for (std::size_t r = 0; r < cfg.routes.size(); ++r) {
        const GapRoute route = cfg.routes[r];
        const bool cavity = route == GapRoute::gamp_cavity || route == GapRoute::hessian_cavity;
        GapReport rep;
        try {
            if (route == GapRoute::gamp || route == GapRoute::gamp_cavity)
                rep = gap_from_state(st, data, cfg.family, cavity, noise_var);
            else
                rep = gap_from_estimate(xhat, data, cfg.family, pen, cavity, noise_var);
        } catch (const std::exception&) {
            continue;
        }
        out.route_delta[r] = rep.delta_loocv_hat;
        if (r == 0) {
            out.stats[0] = rep.err_train;
            out.stats[1] = rep.gdf;
            out.stats[2] = rep.sure;
            out.stats[3] = rep.fv;
            out.stats[4] = rep.waic;
            out.stats[5] = rep.cfv;
            out.stats[6] = rep.fchi;
            out.stats[7] = rep.delta_loocv_hat;
            out.stats[10] = rep.stability_margin;
            out.stats[11] = rep.radius_ok ? 1.0 : 0.0;
        }
    }

    if (cfg.exact && std::isfinite(out.stats[0])) {
        try {
            double err_loo;
            if (cfg.family == Family::gaussian && pen.lambda1 == 0.0) {
                const HatSummary hs = ridge_hat(data, pen.lambda2);
                err_loo = press_loocv(data.y, hs.yhat, hs.h_diag);
            } else {
                BruteOptions bo;
                bo.skip_failures = true;
                bo.gamp = cfg.gamp;
                bo.cd = cfg.cd;
                const RefitSolver rs = cfg.family == Family::exponential ? RefitSolver::gamp
                                                                         : RefitSolver::cd;
                const BruteLoocvResult br = brute_loocv(data, cfg.family, pen, rs, bo);
                out.refit_skips = static_cast<int>(br.failed.size());
                err_loo = br.err_loocv;
            }
            out.stats[8] = err_loo - out.stats[0];
        } catch (const std::exception&) {
            ++out.refit_skips;
        }
    }

    if (cfg.family == Family::gaussian || cfg.family == Family::logistic)
        out.stats[9] = empirical_extra_error(xhat, truth, cfg.family);

    if (pen.lambda1 > 0.0) {
        const Eigen::Index k = nnz_of(xhat);
        if (k > 0) out.alpha_tilde = static_cast<double>(cfg.m_rows) / static_cast<double>(k);
    } else {
        out.alpha_tilde = static_cast<double>(cfg.m_rows) / static_cast<double>(n);
    }
    return out;
}

}  // namespace detail

// Grid points x seeds run as independent tasks; rows come out in grid order
// with seed base_seed + index shared across grid points and routes, so
// every comparison along the sweep is paired. Solver failures are counted
// in the failures column and excluded from the means, never fatal.
inline SweepOutput run_sweep(const SweepConfig& cfg) {
    validate_sweep_config(cfg);
    const auto nan = std::numeric_limits<double>::quiet_NaN();

    struct Point {
        int n = 0;
        double lambda1 = 0.0;
    };
    std::vector<Point> points;
    switch (cfg.axis) {
        case SweepAxis::none:
            points.push_back({cfg.n_cols, cfg.lambda1});
            break;
        case SweepAxis::n:
            for (double v : cfg.grid) points.push_back({static_cast<int>(v), cfg.lambda1});
            break;
        case SweepAxis::alpha:
            for (double v : cfg.grid) {
                const int n = std::max<int>(1, static_cast<int>(std::llround(cfg.m_rows / v)));
                points.push_back({n, cfg.lambda1});
            }
            break;
        case SweepAxis::lambda1:
            for (double v : cfg.grid) points.push_back({cfg.n_cols, v});
            break;
        case SweepAxis::alpha_tilde:
            // targets resolve to lambda1 values on the first seed's data
            for (double v : cfg.grid) {
                const Eigen::MatrixXd F =
                    gen_predictors(cfg.predictors, cfg.m_rows, cfg.n_cols, cfg.base_seed);
                auto [d, t] =
                    gen_truth_and_data(F, cfg.family, cfg.rho, cfg.sigma_x, cfg.sigma,
                                       cfg.base_seed);
                double l1 = nan;
                try {
                    l1 = pin_alpha_tilde(d, cfg.family, cfg.lambda2, v, cfg.solver, cfg.gamp,
                                         cfg.cd)
                             .lambda1;
                } catch (const std::exception&) {
                }
                points.push_back({cfg.n_cols, l1});
            }
            break;
    }

    SweepOutput out;
    auto& agg = out.aggregate.columns;
    agg = {"seed_count", "M", "N", "alpha", "alpha_tilde", "lambda1", "lambda2"};
    for (const char* s : detail::sweep_stat_names()) agg.push_back(s);
    for (const char* s : detail::sweep_stat_names()) agg.push_back(std::string("se_") + s);
    for (std::size_t r = 1; r < cfg.routes.size(); ++r) {
        const std::string base = std::string(route_name(cfg.routes[r])) + "_delta_loocv_hat";
        agg.push_back(base);
        agg.push_back("se_" + base);
    }
    if (cfg.join_replica)
        for (const char* s : {"rs_Q", "rs_m", "rs_chi", "rs_rho_hat", "rs_err_extra", "rs_gdf",
                              "rs_fv", "rs_at_lhs", "rs_at_unstable"})
            agg.push_back(s);
    agg.push_back("failures");

    auto& raw = out.raw.columns;
    raw = {"seed", "M", "N", "alpha", "alpha_tilde", "lambda1", "lambda2"};
    for (const char* s : detail::sweep_stat_names()) raw.push_back(s);
    for (std::size_t r = 1; r < cfg.routes.size(); ++r)
        raw.push_back(std::string(route_name(cfg.routes[r])) + "_delta_loocv_hat");
    raw.push_back("failed");

    const std::size_t n_points = points.size(), n_seeds = static_cast<std::size_t>(cfg.seeds);
    std::vector<detail::SeedOutcome> cell(n_points * n_seeds);
    parallel_for(n_points * n_seeds, [&](std::size_t task) {
        const std::size_t p = task / n_seeds, s = task % n_seeds;
        cell[task] = detail::run_point_seed(cfg, points[p].n,
                                            Penalty{points[p].lambda1, cfg.lambda2},
                                            cfg.base_seed + s);
    });

    for (std::size_t p = 0; p < n_points; ++p) {
        const double alpha = static_cast<double>(cfg.m_rows) / points[p].n;

        int failures = 0, completed = 0;
        std::array<std::vector<double>, detail::kSweepStats> samples;
        std::vector<std::vector<double>> route_samples(cfg.routes.size());
        std::vector<double> tildes;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const detail::SeedOutcome& o = cell[p * n_seeds + s];

            std::vector<double> rr = {static_cast<double>(cfg.base_seed + s),
                                      static_cast<double>(cfg.m_rows),
                                      static_cast<double>(points[p].n),
                                      alpha,
                                      o.alpha_tilde,
                                      points[p].lambda1,
                                      cfg.lambda2};
            for (double v : o.stats) rr.push_back(v);
            for (std::size_t r = 1; r < cfg.routes.size(); ++r)
                rr.push_back(o.route_delta[r]);
            rr.push_back(o.failed ? 1.0 : 0.0);
            out.raw.rows.push_back(std::move(rr));

            failures += o.refit_skips;
            if (o.failed) {
                ++failures;
                continue;
            }
            ++completed;
            for (int k = 0; k < detail::kSweepStats; ++k) samples[k].push_back(o.stats[k]);
            for (std::size_t r = 0; r < cfg.routes.size(); ++r)
                route_samples[r].push_back(o.route_delta[r]);
            if (std::isfinite(o.alpha_tilde)) tildes.push_back(o.alpha_tilde);
        }

        std::vector<double> row = {static_cast<double>(completed),
                                   static_cast<double>(cfg.m_rows),
                                   static_cast<double>(points[p].n),
                                   alpha,
                                   tildes.empty() ? nan : mean_of(tildes),
                                   points[p].lambda1,
                                   cfg.lambda2};
        for (int k = 0; k < detail::kSweepStats; ++k) row.push_back(mean_of(samples[k]));
        for (int k = 0; k < detail::kSweepStats; ++k) row.push_back(se_of(samples[k]));
        for (std::size_t r = 1; r < cfg.routes.size(); ++r) {
            row.push_back(mean_of(route_samples[r]));
            row.push_back(se_of(route_samples[r]));
        }
        if (cfg.join_replica) {
            std::array<double, 9> rs;
            rs.fill(nan);
            try {
                const Penalty pen{points[p].lambda1, cfg.lambda2};
                const ReplicaOrder ord = rs_solve(cfg.family, pen, alpha, cfg.rho, cfg.sigma_x,
                                                  cfg.sigma);
                if (ord.converged) {
                    const RsErrors re = rs_errors(ord, cfg.family);
                    const AtResult at = at_unstable(ord, cfg.family, pen, alpha);
                    rs = {ord.Q,       ord.m,  ord.chi, ord.rho_hat, re.err_extra,
                          re.gdf,      re.fv,  at.lhs,  at.unstable ? 1.0 : 0.0};
                }
            } catch (const std::exception&) {
            }
            for (double v : rs) row.push_back(v);
        }
        row.push_back(static_cast<double>(failures));
        out.aggregate.rows.push_back(std::move(row));
    }
    return out;
}

// 12 significant digits, enough for every tolerance in the suite while
// keeping the files diffable.
inline std::string fmt_sig12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline void write_sweep_csv(const std::string& path, const SweepTable& table) {
    std::ofstream outf(path);
    if (!outf) throw std::runtime_error("sweep: cannot open " + path + " for writing");
    for (std::size_t c = 0; c < table.columns.size(); ++c)
        outf << (c ? "," : "") << table.columns[c];
    outf << "\n";
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size())
            throw std::logic_error("sweep: row width does not match header");
        for (std::size_t c = 0; c < row.size(); ++c)
            outf << (c ? "," : "") << fmt_sig12(row[c]);
        outf << "\n";
    }
    if (!outf) throw std::runtime_error("sweep: write failed for " + path);
}

}  // namespace gampgap
