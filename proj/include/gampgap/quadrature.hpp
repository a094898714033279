#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace gampgap {

struct QuadRule {
    Eigen::VectorXd x;
    Eigen::VectorXd w;
};

namespace detail {

// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
// matrix, weights are mu0 times the squared first eigenvector components.
inline QuadRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
    const int n = int(offdiag.size()) + 1;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k) {
        J(k, k + 1) = offdiag[k];
        J(k + 1, k) = offdiag[k];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadRule r;
    r.x = es.eigenvalues();
    r.w = mu0 * es.eigenvectors().row(0).transpose().array().square();
    return r;
}

}  // namespace detail

// Physicists' Gauss-Hermite: sum_k w_k f(x_k) ~ integral e^{-t^2} f(t) dt.
inline QuadRule gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n >= 1 required");
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(k / 2.0);
    return detail::golub_welsch(off, std::sqrt(3.14159265358979323846));
}

// Gauss-Legendre on [-1, 1].
inline QuadRule gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1 required");
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
    return detail::golub_welsch(off, 2.0);
}

inline const QuadRule& cached_gauss_legendre(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
    return it->second;
}

inline const QuadRule& cached_gauss_hermite(int n) {
    static std::map<int, QuadRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, gauss_hermite(n)).first;
    return it->second;
}

// E[f(Z)] for Z ~ N(0,1), by panelwise Gauss-Legendre with the gaussian
// weight folded into the integrand. The domain [-12, 12] is split at the
// supplied breakpoints (kinks or jumps of f) and then into panels no wider
// than 3, so each panel sees a smooth integrand and node doubling converges
// below 1e-8 even when f has kinks.
template <class F>
double normal_expectation(F&& f, int nodes, std::vector<double> breaks = {}) {
    constexpr double kHalfWidth = 12.0;
    constexpr double kMaxPanel = 3.0;
    std::vector<double> edges;
    edges.push_back(-kHalfWidth);
    for (double b : breaks)
        if (b > -kHalfWidth && b < kHalfWidth) edges.push_back(b);
    edges.push_back(kHalfWidth);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-13; }),
                edges.end());

    const QuadRule& gl = cached_gauss_legendre(nodes);
    const double inv_sqrt_2pi = 0.3989422804014326779;
    double total = 0.0;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double a = edges[e], b = edges[e + 1];
        const int panels = std::max(1, int(std::ceil((b - a) / kMaxPanel)));
        const double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double lo = a + p * h;
            const double mid = lo + h / 2, half = h / 2;
            double acc = 0.0;
            for (int k = 0; k < gl.x.size(); ++k) {
                const double z = mid + half * gl.x[k];
                acc += gl.w[k] * f(z) * std::exp(-z * z / 2);
            }
            total += acc * half * inv_sqrt_2pi;
        }
    }
    return total;
}

}  // namespace gampgap
