#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "gampgap/harness.hpp"
#include "gampgap/io.hpp"

using namespace gampgap;
using nlohmann::json;

namespace {

void print_csv(const std::vector<std::string>& cols, const std::vector<double>& vals) {
    for (std::size_t c = 0; c < cols.size(); ++c)
        std::printf("%s%s", c ? "," : "", cols[c].c_str());
    std::printf("\n");
    for (std::size_t c = 0; c < vals.size(); ++c)
        std::printf("%s%s", c ? "," : "", fmt_sig12(vals[c]).c_str());
    std::printf("\n");
}

void print_table(const SweepTable& t) {
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        std::printf("%s%s", c ? "," : "", t.columns[c].c_str());
    std::printf("\n");
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            std::printf("%s%s", c ? "," : "", fmt_sig12(row[c]).c_str());
        std::printf("\n");
    }
}

PredictorKind kind_from_name(const std::string& s) {
    if (s == "iid") return PredictorKind::iid;
    if (s == "correlated") return PredictorKind::correlated;
    if (s == "rank_deficient") return PredictorKind::rank_deficient;
    throw std::invalid_argument("unknown predictor kind '" + s + "'");
}

RefitSolver solver_from_name(const std::string& s) {
    if (s == "gamp") return RefitSolver::gamp;
    if (s == "cd") return RefitSolver::cd;
    throw std::invalid_argument("unknown solver '" + s + "'");
}

struct FitArgs {
    std::string data, family = "gaussian", solver = "gamp", out;
    double lambda1 = 0, lambda2 = 0;
};

int run_fit(const FitArgs& a) {
    const Dataset d = read_dataset_csv(a.data);
    const Family fam = family_from_name(a.family);
    const Penalty pen{a.lambda1, a.lambda2};
    const RefitSolver sv = solver_from_name(a.solver);

    json j;
    j["family"] = a.family;
    j["solver"] = a.solver;
    j["M"] = d.M();
    j["N"] = d.N();
    j["lambda1"] = a.lambda1;
    j["lambda2"] = a.lambda2;

    Eigen::VectorXd xhat;
    bool converged = true;
    if (sv == RefitSolver::gamp) {
        const GampState st = gamp_run(d, fam, pen);
        converged = st.converged;
        xhat = st.xhat;
        j["converged"] = st.converged;
        j["iterations"] = st.iter;
        j["stability_margin"] = stability_margin(st, d.alpha());
        if (fam == Family::gaussian) j["radius_ok"] = series_radius_ok(st, fam).ok;
    } else {
        if (fam == Family::gaussian)
            xhat = cd_fit_gaussian(d, pen);
        else
            xhat = cd_fit_glm(d, fam, pen);
        j["converged"] = true;
    }
    const Eigen::VectorXd theta = d.F * xhat / std::sqrt(double(d.N()));
    j["err_train"] = training_error(theta, d.y, fam);
    Eigen::Index nnz = 0;
    for (Eigen::Index i = 0; i < xhat.size(); ++i)
        if (xhat[i] != 0.0) ++nnz;
    j["nnz"] = nnz;

    if (a.out.empty()) {
        j["xhat"] = std::vector<double>(xhat.data(), xhat.data() + xhat.size());
    } else {
        std::ofstream f(a.out);
        if (!f) throw std::runtime_error("cannot open for writing: " + a.out);
        f << "x\n";
        for (Eigen::Index i = 0; i < xhat.size(); ++i) f << fmt_sig12(xhat[i]) << "\n";
        j["xhat_file"] = a.out;
    }
    std::printf("%s\n", j.dump(2).c_str());
    return converged ? 0 : 1;
}

struct GapArgs {
    std::string data, truth, family = "gaussian", solver = "gamp", route = "gamp";
    double lambda1 = 0, lambda2 = 0, sigma = 1.0;
    bool exact = false;
};

int run_gap(const GapArgs& a) {
    const Dataset d = read_dataset_csv(a.data);
    const Family fam = family_from_name(a.family);
    const Penalty pen{a.lambda1, a.lambda2};
    const RefitSolver sv = solver_from_name(a.solver);

    bool cavity = false, hessian = false;
    if (a.route == "gamp") {
    } else if (a.route == "gamp_cavity") {
        cavity = true;
    } else if (a.route == "hessian") {
        hessian = true;
    } else if (a.route == "cavity" || a.route == "hessian_cavity") {
        // the cavity variance is defined through the off-diagonal parameter
        // responses, which only the Hessian route has
        hessian = cavity = true;
    } else {
        throw std::invalid_argument("unknown route '" + a.route + "'");
    }
    if (sv == RefitSolver::cd && !hessian)
        throw std::invalid_argument("message-passing routes need --solver gamp");

    GampState st;
    Eigen::VectorXd xhat;
    if (sv == RefitSolver::gamp) {
        st = gamp_run(d, fam, pen);
        if (!st.converged)
            throw NonConvergenceError("fit did not converge in " + std::to_string(st.iter) +
                                      " iterations");
        xhat = st.xhat;
    } else {
        xhat = fam == Family::gaussian ? cd_fit_gaussian(d, pen) : cd_fit_glm(d, fam, pen);
    }

    const double noise_var = fam == Family::gaussian ? a.sigma * a.sigma : 1.0;
    const GapReport rep = hessian ? gap_from_estimate(xhat, d, fam, pen, cavity, noise_var)
                                  : gap_from_state(st, d, fam, cavity, noise_var);

    const auto nan = std::numeric_limits<double>::quiet_NaN();
    double delta_exact = nan;
    if (a.exact) {
        if (fam == Family::gaussian && pen.lambda1 == 0.0) {
            const HatSummary hs = ridge_hat(d, pen.lambda2);
            delta_exact = press_loocv(d.y, hs.yhat, hs.h_diag) - rep.err_train;
        } else {
            BruteOptions bo;
            bo.skip_failures = true;
            const RefitSolver rs =
                fam == Family::exponential ? RefitSolver::gamp : RefitSolver::cd;
            const BruteLoocvResult br = brute_loocv(d, fam, pen, rs, bo);
            if (!br.failed.empty())
                std::fprintf(stderr, "note: %zu holdout refits skipped\n", br.failed.size());
            delta_exact = br.err_loocv - rep.err_train;
        }
    }
    double err_extra = nan;
    if (!a.truth.empty()) {
        const GroundTruth t = read_truth_csv(a.truth);
        err_extra = empirical_extra_error(xhat, t, fam);
    }

    print_csv({"err_train", "gdf", "sure", "fv", "waic", "cfv", "fchi", "delta_loocv_hat",
               "delta_loocv_exact", "err_extra_empirical", "stability_margin", "radius_ok"},
              {rep.err_train, rep.gdf, rep.sure, rep.fv, rep.waic, rep.cfv, rep.fchi,
               rep.delta_loocv_hat, delta_exact, err_extra, rep.stability_margin,
               rep.radius_ok ? 1.0 : 0.0});
    return 0;
}

struct LoocvArgs {
    std::string data, family = "gaussian", mode, solver = "cd";
    double lambda1 = 0, lambda2 = 0;
    bool skip_failures = false;
};

int run_loocv(const LoocvArgs& a) {
    const Dataset d = read_dataset_csv(a.data);
    const Family fam = family_from_name(a.family);
    const Penalty pen{a.lambda1, a.lambda2};

    double err_train, err_loocv;
    double failures = 0;
    if (a.mode == "press") {
        if (fam != Family::gaussian || pen.lambda1 != 0.0)
            throw std::invalid_argument(
                "press mode covers the ridge-penalized gaussian likelihood only");
        const HatSummary hs = ridge_hat(d, pen.lambda2);
        err_train = training_error(hs.yhat, d.y, fam);
        err_loocv = press_loocv(d.y, hs.yhat, hs.h_diag);
    } else if (a.mode == "brute") {
        const RefitSolver sv = solver_from_name(a.solver);
        BruteOptions bo;
        bo.skip_failures = a.skip_failures;
        const BruteLoocvResult br = brute_loocv(d, fam, pen, sv, bo);
        failures = double(br.failed.size());
        const Eigen::VectorXd xhat = fam == Family::gaussian && sv == RefitSolver::cd
                                         ? cd_fit_gaussian(d, pen)
                                         : detail::fit_once(d, fam, pen, sv, {}, {});
        err_train = training_error(d.F * xhat / std::sqrt(double(d.N())), d.y, fam);
        err_loocv = br.err_loocv;
    } else {
        throw std::invalid_argument("unknown mode '" + a.mode + "' (press or brute)");
    }
    print_csv({"err_train", "err_loocv", "delta_loocv", "failures"},
              {err_train, err_loocv, err_loocv - err_train, failures});
    return 0;
}

struct ReplicaArgs {
    std::string family = "gaussian";
    std::vector<double> alpha_grid;
    double rho = 1.0, sigma = 1.0, sigma_x = 1.0, lambda1 = 0, lambda2 = 0;
    int nodes = 61;
};

int run_replica(const ReplicaArgs& a) {
    const Family fam = family_from_name(a.family);
    const Penalty pen{a.lambda1, a.lambda2};
    RsOptions opts;
    opts.nodes = a.nodes;
    const auto nan = std::numeric_limits<double>::quiet_NaN();

    const std::vector<std::string> cols = {"alpha",     "lambda1", "lambda2", "Q",
                                           "m",         "chi",     "rho_hat", "err_extra",
                                           "gdf",       "fv",      "at_lhs",  "at_unstable"};
    for (std::size_t c = 0; c < cols.size(); ++c)
        std::printf("%s%s", c ? "," : "", cols[c].c_str());
    std::printf("\n");

    for (double alpha : a.alpha_grid) {
        const ReplicaOrder ord = rs_solve(fam, pen, alpha, a.rho, a.sigma_x, a.sigma, opts);
        std::vector<double> row = {alpha,   a.lambda1, a.lambda2, ord.Q,
                                   ord.m,   ord.chi,   ord.rho_hat, nan,
                                   nan,     nan,       nan,       nan};
        if (ord.converged) {
            const RsErrors re = rs_errors(ord, fam, a.nodes);
            const AtResult at = at_unstable(ord, fam, pen, alpha, a.nodes);
            row[7] = re.err_extra;
            row[8] = re.gdf;
            row[9] = re.fv;
            row[10] = at.lhs;
            row[11] = at.unstable ? 1.0 : 0.0;
        } else {
            std::fprintf(stderr, "note: no fixed point at alpha = %s after %d iterations\n",
                         fmt_sig12(alpha).c_str(), ord.iterations);
        }
        for (std::size_t c = 0; c < row.size(); ++c)
            std::printf("%s%s", c ? "," : "", fmt_sig12(row[c]).c_str());
        std::printf("\n");
    }
    return 0;
}

struct SweepArgs {
    std::string config, out, raw;
};

int run_sweep_cmd(const SweepArgs& a) {
    const SweepConfig cfg = parse_sweep_config(a.config);
    const SweepOutput out = run_sweep(cfg);
    std::string raw_path = a.raw;
    if (!a.out.empty()) {
        write_sweep_csv(a.out, out.aggregate);
        if (raw_path.empty()) {
            raw_path = a.out;
            const std::string suffix = ".csv";
            if (raw_path.size() > suffix.size() &&
                raw_path.compare(raw_path.size() - suffix.size(), suffix.size(), suffix) == 0)
                raw_path.erase(raw_path.size() - suffix.size());
            raw_path += ".raw.csv";
        }
    } else {
        print_table(out.aggregate);
    }
    if (!raw_path.empty()) write_sweep_csv(raw_path, out.raw);
    return 0;
}

struct GenArgs {
    std::string family = "gaussian", kind = "iid", data, truth;
    int m = 0, n = 0;
    double sigma_d = 0.5, rho_f = 0.9, rho = 1.0, sigma_x = 1.0, sigma = 1.0;
    std::uint64_t seed = 1;
};

int run_gen(const GenArgs& a) {
    const Family fam = family_from_name(a.family);
    PredictorSpec spec;
    spec.kind = kind_from_name(a.kind);
    spec.sigma_d = a.sigma_d;
    spec.rho_F = a.rho_f;
    const Eigen::MatrixXd F = gen_predictors(spec, a.m, a.n, a.seed);
    auto [d, t] = gen_truth_and_data(F, fam, a.rho, a.sigma_x, a.sigma, a.seed);
    write_dataset_csv(a.data, d);
    if (!a.truth.empty()) write_truth_csv(a.truth, t);

    json j;
    j["family"] = a.family;
    j["kind"] = a.kind;
    j["M"] = a.m;
    j["N"] = a.n;
    j["seed"] = a.seed;
    j["data"] = a.data;
    if (!a.truth.empty()) j["truth"] = a.truth;
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"penalized GLM fits, generalization-gap estimators, exact LOOCV, and the"
                 " matching asymptotic theory"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit a penalized model to a dataset file");
    fit_cmd->add_option("--family", fit.family, "gaussian | logistic | poisson | exponential");
    fit_cmd->add_option("--lambda1", fit.lambda1, "l1 penalty weight");
    fit_cmd->add_option("--lambda2", fit.lambda2, "l2 penalty weight");
    fit_cmd->add_option("--data", fit.data, "dataset CSV (column 0 = y)")->required();
    fit_cmd->add_option("--solver", fit.solver, "gamp | cd");
    fit_cmd->add_option("--out", fit.out, "write coefficients to this CSV instead of stdout");

    GapArgs gap;
    auto* gap_cmd =
        app.add_subcommand("gap", "estimate the generalization gap without refitting");
    gap_cmd->add_option("--family", gap.family, "likelihood name");
    gap_cmd->add_option("--lambda1", gap.lambda1, "l1 penalty weight");
    gap_cmd->add_option("--lambda2", gap.lambda2, "l2 penalty weight");
    gap_cmd->add_option("--data", gap.data, "dataset CSV")->required();
    gap_cmd->add_option("--route", gap.route, "gamp | hessian | cavity | gamp_cavity");
    gap_cmd->add_option("--solver", gap.solver, "gamp | cd");
    gap_cmd->add_option("--sigma", gap.sigma, "noise std used by the risk estimate");
    gap_cmd->add_option("--truth", gap.truth, "ground-truth sidecar CSV");
    gap_cmd->add_flag("--exact", gap.exact, "also run exact holdouts for delta_loocv_exact");

    LoocvArgs loocv;
    auto* loocv_cmd = app.add_subcommand("loocv", "exact leave-one-out cross validation");
    loocv_cmd->add_option("--family", loocv.family, "likelihood name");
    loocv_cmd->add_option("--lambda1", loocv.lambda1, "l1 penalty weight");
    loocv_cmd->add_option("--lambda2", loocv.lambda2, "l2 penalty weight");
    loocv_cmd->add_option("--data", loocv.data, "dataset CSV")->required();
    loocv_cmd->add_option("--mode", loocv.mode, "press | brute")->required();
    loocv_cmd->add_option("--solver", loocv.solver, "refit solver for brute mode: cd | gamp");
    loocv_cmd->add_flag("--skip-failures", loocv.skip_failures,
                        "record failed refits instead of aborting");

    ReplicaArgs rep;
    auto* rep_cmd = app.add_subcommand("replica", "asymptotic theory over an alpha grid");
    rep_cmd->add_option("--family", rep.family, "gaussian | logistic");
    rep_cmd->add_option("--alpha-grid", rep.alpha_grid, "sample-to-parameter ratios")
        ->required()
        ->delimiter(',');
    rep_cmd->add_option("--rho", rep.rho, "nonzero fraction of true coefficients");
    rep_cmd->add_option("--sigma", rep.sigma, "noise std");
    rep_cmd->add_option("--sigma-x", rep.sigma_x, "std of nonzero true coefficients");
    rep_cmd->add_option("--lambda1", rep.lambda1, "l1 penalty weight");
    rep_cmd->add_option("--lambda2", rep.lambda2, "l2 penalty weight");
    rep_cmd->add_option("--nodes", rep.nodes, "quadrature nodes per axis");

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "seeded experiment grid from a config file");
    sweep_cmd->add_option("--config", sweep.config, "key = value config file")->required();
    sweep_cmd->add_option("--out", sweep.out, "aggregate CSV path (stdout when omitted)");
    sweep_cmd->add_option("--raw", sweep.raw, "per-seed CSV path");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset and sidecar");
    gen_cmd->add_option("--family", gen.family, "likelihood name");
    gen_cmd->add_option("--kind", gen.kind, "iid | correlated | rank_deficient");
    gen_cmd->add_option("--sigma-d", gen.sigma_d, "correlated row-covariance decay");
    gen_cmd->add_option("--rho-f", gen.rho_f, "rank-deficient surviving fraction");
    gen_cmd->add_option("--m", gen.m, "rows")->required();
    gen_cmd->add_option("--n", gen.n, "columns")->required();
    gen_cmd->add_option("--rho", gen.rho, "nonzero fraction of true coefficients");
    gen_cmd->add_option("--sigma-x", gen.sigma_x, "std of nonzero true coefficients");
    gen_cmd->add_option("--sigma", gen.sigma, "noise std");
    gen_cmd->add_option("--seed", gen.seed, "stream seed");
    gen_cmd->add_option("--data", gen.data, "dataset CSV output path")->required();
    gen_cmd->add_option("--truth", gen.truth, "ground-truth sidecar output path");

    try {
        app.parse(argc, argv);
        if (*fit_cmd) return run_fit(fit);
        if (*gap_cmd) return run_gap(gap);
        if (*loocv_cmd) return run_loocv(loocv);
        if (*rep_cmd) return run_replica(rep);
        if (*sweep_cmd) return run_sweep_cmd(sweep);
        if (*gen_cmd) return run_gen(gen);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
