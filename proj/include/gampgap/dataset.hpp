#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gampgap {

// One regression problem: responses y (length M) and predictors F (M x N).
// Model parameters are theta = F x / sqrt(N) throughout.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd F;

    Eigen::Index M() const { return F.rows(); }
    Eigen::Index N() const { return F.cols(); }
    double alpha() const { return double(M()) / double(N()); }
};

// Known generating process, kept beside a synthetic Dataset.
struct GroundTruth {
    Eigen::VectorXd x0;      // length N
    Eigen::VectorXd theta0;  // F x0 / sqrt(N), length M
    double sigma = 0.0;      // noise std
    double rho = 1.0;        // nonzero fraction of x0
    double sigma_x = 1.0;    // std of the nonzero coefficients
};

// Hard failures throw; soft ones (column scaling off by more than 20% from
// sum_mu F^2 = M) come back as warning strings for the caller to surface.
inline std::vector<std::string> validate_dataset(const Dataset& d) {
    if (d.F.rows() < 1 || d.F.cols() < 1)
        throw std::invalid_argument("dataset: F must be at least 1x1");
    if (d.y.size() != d.F.rows())
        throw std::invalid_argument("dataset: y length " + std::to_string(d.y.size()) +
                                    " does not match F rows " + std::to_string(d.F.rows()));
    if (!d.y.allFinite() || !d.F.allFinite())
        throw std::invalid_argument("dataset: NaN or Inf entry");
    std::vector<std::string> warnings;
    const double M = double(d.M());
    for (Eigen::Index i = 0; i < d.N(); ++i) {
        const double ss = d.F.col(i).squaredNorm();
        if (std::abs(ss / M - 1.0) > 0.20)
            warnings.push_back("column " + std::to_string(i) + ": sum of squares " +
                               std::to_string(ss) + " deviates from M=" + std::to_string(M) +
                               " by more than 20%");
    }
    return warnings;
}

}  // namespace gampgap
