#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gampgap/datagen.hpp"
#include "gampgap/io.hpp"
#include "gampgap/rng.hpp"

using namespace gampgap;

TEST_CASE("Philox4x64-10 reproduces reference outputs") {
    // Reference words generated with an independent implementation of the
    // same algorithm (key = (seed, stream), 256-bit counter from zero).
    {
        Philox4x64 g(0, 0);
        const std::uint64_t want[8] = {0x02f4ba6408e4d89bULL, 0x3dd62b0b9ca8c5b2ULL,
                                       0x1c8667a55d902e79ULL, 0x907d7a052fd5b4dcULL,
                                       0x809bf322883987c3ULL, 0x471128b9e807f7ddULL,
                                       0xf250ba0dbec065b7ULL, 0xfc6ed66767a457bcULL};
        for (int i = 0; i < 8; ++i) CHECK(g.raw64() == want[i]);
    }
    {
        Philox4x64 g(0xdeadbeefULL, 0);
        const std::uint64_t want[4] = {0xa4e930dc738acaf1ULL, 0xb1c7ecc6484e9cf0ULL,
                                       0x6b88a411909298aaULL, 0x66f3c896201f7262ULL};
        for (int i = 0; i < 4; ++i) CHECK(g.raw64() == want[i]);
    }
    {
        Philox4x64 g(42, 7);
        g.set_counter(123, 456, 789, 1011);
        const std::uint64_t want[4] = {0xbb9eecb0b0f579acULL, 0x63083333ef6a13bfULL,
                                       0x5a14271aab41d5bcULL, 0x03a6e56188ec05d3ULL};
        for (int i = 0; i < 4; ++i) CHECK(g.raw64() == want[i]);
    }
}

TEST_CASE("streams and seeds separate; sequences are reproducible") {
    Philox4x64 a1(17, 0), a2(17, 0), b(17, 1), c(18, 0);
    bool same_stream_equal = true, other_stream_differs = false, other_seed_differs = false;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t r = a1.raw64();
        same_stream_equal = same_stream_equal && (r == a2.raw64());
        other_stream_differs = other_stream_differs || (r != b.raw64());
        other_seed_differs = other_seed_differs || (r != c.raw64());
    }
    CHECK(same_stream_equal);
    CHECK(other_stream_differs);
    CHECK(other_seed_differs);
}

TEST_CASE("uniforms live in [0,1) with the right first moments") {
    Philox4x64 g(5, 0);
    const int n = 100000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        const double u = g.next_uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sumsq += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(sumsq / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.03));
}

TEST_CASE("gaussians have unit variance and thin-tail symmetry") {
    Philox4x64 g(6, 0);
    const int n = 100000;
    double sum = 0, sumsq = 0, sum3 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = g.next_gaussian();
        sum += z;
        sumsq += z * z;
        sum3 += z * z * z;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.03));
    CHECK(std::abs(sum3 / n) < 0.1);
}

TEST_CASE("next_below is bounded, unbiased enough, and deterministic") {
    Philox4x64 g(7, 0);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const std::uint64_t v = g.next_below(7);
        CHECK(v < 7);
        ++counts[std::size_t(v)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
    Philox4x64 h1(7, 3), h2(7, 3);
    for (int i = 0; i < 100; ++i) CHECK(h1.next_below(1000) == h2.next_below(1000));
}

TEST_CASE("iid predictors: deterministic, near-standardized columns") {
    const auto F1 = gen_predictors({PredictorKind::iid}, 200, 100, 11);
    const auto F2 = gen_predictors({PredictorKind::iid}, 200, 100, 11);
    CHECK((F1 - F2).cwiseAbs().maxCoeff() == 0.0);
    const auto F3 = gen_predictors({PredictorKind::iid}, 200, 100, 12);
    CHECK((F1 - F3).cwiseAbs().maxCoeff() > 0.0);
    for (Eigen::Index i = 0; i < F1.cols(); ++i)
        CHECK(std::abs(F1.col(i).squaredNorm() / 200.0 - 1.0) < 0.35);
}

TEST_CASE("correlated predictors: AR(1) row covariance") {
    PredictorSpec spec;
    spec.kind = PredictorKind::correlated;
    spec.sigma_d = 0.5;
    const Eigen::Index M = 5000, N = 10;
    const auto F = gen_predictors(spec, M, N, 21);
    const Eigen::MatrixXd C = F.transpose() * F / double(M);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j)
            CHECK(std::abs(C(i, j) - std::pow(0.5, double(std::abs(i - j)))) < 0.1);

    spec.sigma_d = 0.0;
    CHECK_THROWS_AS(gen_predictors(spec, 10, 10, 1), std::invalid_argument);
    spec.sigma_d = 1.5;
    CHECK_THROWS_AS(gen_predictors(spec, 10, 10, 1), std::invalid_argument);
    spec.sigma_d = -0.3;
    CHECK_THROWS_AS(gen_predictors(spec, 10, 10, 1), std::invalid_argument);
}

TEST_CASE("rank-deficient predictors: exact rank and exact column scale") {
    PredictorSpec spec;
    spec.kind = PredictorKind::rank_deficient;
    spec.rho_F = 0.9;
    const Eigen::Index M = 200, N = 400;
    const auto F = gen_predictors(spec, M, N, 31);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(F);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > 1e-8 * sv[0]) ++rank;
    CHECK(rank == 180);
    for (Eigen::Index i = 0; i < N; ++i)
        CHECK(F.col(i).squaredNorm() == doctest::Approx(double(M)).epsilon(1e-12));

    spec.rho_F = 0.0;
    CHECK_THROWS_AS(gen_predictors(spec, 10, 10, 1), std::invalid_argument);
}

TEST_CASE("truth generation: support size, theta0 identity, noiseless responses") {
    const auto F = gen_predictors({PredictorKind::iid}, 60, 80, 41);
    auto [d, t] = gen_truth_and_data(F, Family::gaussian, 0.25, 1.3, 0.7, 41);
    int nnz = 0;
    for (Eigen::Index i = 0; i < t.x0.size(); ++i)
        if (t.x0[i] != 0.0) ++nnz;
    CHECK(nnz == 20);  // round(0.25 * 80)
    CHECK((t.theta0 - F * t.x0 / std::sqrt(80.0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.y.size() == 60);
    CHECK(t.sigma == 0.7);

    // rho = 1 gives a dense draw; sigma = 0 makes y = theta0 exactly
    auto [d2, t2] = gen_truth_and_data(F, Family::gaussian, 1.0, 1.0, 0.0, 42);
    for (Eigen::Index i = 0; i < t2.x0.size(); ++i) CHECK(t2.x0[i] != 0.0);
    CHECK((d2.y - t2.theta0).cwiseAbs().maxCoeff() == 0.0);

    // identical seeds replay bit for bit
    auto [d3, t3] = gen_truth_and_data(F, Family::gaussian, 0.25, 1.3, 0.7, 41);
    CHECK((d3.y - d.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t3.x0 - t.x0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("logistic responses are balanced bits when theta0 = 0") {
    const auto F = gen_predictors({PredictorKind::iid}, 10000, 5, 51);
    auto [d, t] = gen_truth_and_data(F, Family::logistic, 0.0, 1.0, 1.0, 51);
    CHECK(t.x0.cwiseAbs().maxCoeff() == 0.0);
    double ones = 0;
    for (Eigen::Index mu = 0; mu < d.y.size(); ++mu) {
        CHECK((d.y[mu] == 0.0 || d.y[mu] == 1.0));
        ones += d.y[mu];
    }
    CHECK(ones / double(d.y.size()) == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("poisson responses have the right conditional mean and variance") {
    // sigma_x = 2 pushes some rates above the large-lambda split at 30
    const auto F = gen_predictors({PredictorKind::iid}, 4000, 20, 61);
    auto [d, t] = gen_truth_and_data(F, Family::poisson, 1.0, 2.0, 0.0, 61);
    double z = 0, var_sum = 0;
    double max_rate = 0;
    for (Eigen::Index mu = 0; mu < d.y.size(); ++mu) {
        CHECK(d.y[mu] >= 0.0);
        CHECK(d.y[mu] == std::floor(d.y[mu]));
        const double lam = std::exp(t.theta0[mu]);
        max_rate = std::max(max_rate, lam);
        z += d.y[mu] - lam;
        var_sum += lam;
    }
    CHECK(max_rate > 30.0);
    // sum(y - lambda) / sqrt(sum lambda) is approximately standard normal
    CHECK(std::abs(z / std::sqrt(var_sum)) < 4.0);
}

TEST_CASE("exponential responses respect the domain policy") {
    // N = 1 with a constant positive column: theta0 keeps the sign of x0,
    // so a resample succeeds within a few attempts
    Eigen::MatrixXd F = Eigen::MatrixXd::Ones(3, 1);
    auto [d, t] =
        gen_truth_and_data(F, Family::exponential, 1.0, 1.0, 0.0, 5, ExpDomainPolicy::resample);
    CHECK(t.theta0.maxCoeff() < 0.0);
    for (Eigen::Index mu = 0; mu < d.y.size(); ++mu) CHECK(d.y[mu] >= 0.0);

    // the error policy throws as soon as a seed lands a positive theta0
    bool threw = false;
    for (std::uint64_t seed = 0; seed < 20 && !threw; ++seed) {
        try {
            gen_truth_and_data(F, Family::exponential, 1.0, 1.0, 0.0, seed,
                               ExpDomainPolicy::error);
        } catch (const std::domain_error&) {
            threw = true;
        }
    }
    CHECK(threw);
}

TEST_CASE("dataset and truth CSV files round trip exactly") {
    const auto F = gen_predictors({PredictorKind::iid}, 12, 7, 71);
    auto [d, t] = gen_truth_and_data(F, Family::gaussian, 0.5, 1.1, 0.3, 71);
    const std::string dpath = "roundtrip_data.csv", tpath = "roundtrip_truth.csv";
    write_dataset_csv(dpath, d);
    write_truth_csv(tpath, t);
    const Dataset d2 = read_dataset_csv(dpath);
    const GroundTruth t2 = read_truth_csv(tpath);
    CHECK(d2.M() == d.M());
    CHECK(d2.N() == d.N());
    CHECK((d2.y - d.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d2.F - d.F).cwiseAbs().maxCoeff() == 0.0);
    CHECK((t2.x0 - t.x0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(t2.sigma == t.sigma);
    CHECK(t2.rho == t.rho);
    CHECK(t2.sigma_x == t.sigma_x);
    std::remove(dpath.c_str());
    std::remove(tpath.c_str());
}

TEST_CASE("dataset validation flags bad scaling and rejects bad shapes") {
    Dataset d;
    d.F = Eigen::MatrixXd::Ones(10, 3);
    d.y = Eigen::VectorXd::Zero(10);
    CHECK(validate_dataset(d).empty());  // sum F^2 = 10 = M per column
    d.F.col(1) *= 2.0;                   // sum jumps to 4M
    CHECK(validate_dataset(d).size() == 1);

    Dataset bad = d;
    bad.y = Eigen::VectorXd::Zero(9);
    CHECK_THROWS_AS(validate_dataset(bad), std::invalid_argument);
    bad = d;
    bad.F(0, 0) = std::nan("");
    CHECK_THROWS_AS(validate_dataset(bad), std::invalid_argument);
}

TEST_CASE("extra-sample error: closed cases and fresh-sample Monte Carlo") {
    // Truth built by hand with ||x0||^2/N = rho*sigma_x^2 exactly, so the
    // population sigma_T^2 in the formula matches the realized overlap.
    const Eigen::Index N = 50;
    const double rho = 0.4, sigma_x = 1.2, sigma = 0.6;
    Philox4x64 g(99, 2);
    GroundTruth t;
    t.x0 = Eigen::VectorXd::Zero(N);
    for (Eigen::Index i = 0; i < Eigen::Index(rho * N); ++i) t.x0[i] = g.next_gaussian();
    t.x0 *= std::sqrt(rho * sigma_x * sigma_x * double(N)) / t.x0.norm();
    t.sigma = sigma;
    t.rho = rho;
    t.sigma_x = sigma_x;
    const double sigmaT2 = rho * sigma_x * sigma_x + sigma * sigma;

    CHECK(empirical_extra_error(t.x0, t, Family::gaussian) ==
          doctest::Approx(sigma * sigma / 2).epsilon(1e-12));
    CHECK(empirical_extra_error(Eigen::VectorXd::Zero(N), t, Family::gaussian) ==
          doctest::Approx(sigmaT2 / 2).epsilon(1e-12));
    CHECK_THROWS_AS(empirical_extra_error(t.x0, t, Family::poisson), std::invalid_argument);

    // an imperfect estimate, fixed across the Monte Carlo
    Eigen::VectorXd xhat = 0.7 * t.x0;
    for (Eigen::Index i = 0; i < N; ++i) xhat[i] += 0.3 * g.next_gaussian();

    for (Family fam : {Family::gaussian, Family::logistic}) {
        const int n_mc = 200000;
        double sum = 0, sumsq = 0;
        const double sqN = std::sqrt(double(N));
        for (int rep = 0; rep < n_mc; ++rep) {
            double th0 = 0, thh = 0;
            for (Eigen::Index i = 0; i < N; ++i) {
                const double f = g.next_gaussian();
                th0 += f * t.x0[i];
                thh += f * xhat[i];
            }
            th0 /= sqN;
            thh /= sqN;
            const double eps = sigma * g.next_gaussian();
            const double y =
                fam == Family::gaussian ? th0 + eps : double(th0 + eps > 0.0);
            const double loss = neg_log_lik(fam, y, thh);
            sum += loss;
            sumsq += loss * loss;
        }
        const double mc = sum / n_mc;
        const double se = std::sqrt((sumsq / n_mc - mc * mc) / n_mc);
        CHECK(std::abs(empirical_extra_error(xhat, t, fam) - mc) < 3 * se);
    }
}
