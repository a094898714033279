#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gampgap/dataset.hpp"

namespace gampgap {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("csv: bad number '" + s + "' in " + where);
    }
}

// Shortest representation that round-trips a double.
inline std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Dataset file: header row, column 0 = y, columns 1..N = predictors.
inline void write_dataset_csv(const std::string& path, const Dataset& d) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "y";
    for (Eigen::Index i = 0; i < d.N(); ++i) f << ",F" << (i + 1);
    f << "\n";
    for (Eigen::Index mu = 0; mu < d.M(); ++mu) {
        f << detail::fmt_full(d.y[mu]);
        for (Eigen::Index i = 0; i < d.N(); ++i) f << "," << detail::fmt_full(d.F(mu, i));
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
    const std::size_t ncols = detail::split_csv_line(line).size();
    if (ncols < 2) throw std::runtime_error("csv: need y plus at least one predictor in " + path);
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != ncols)
            throw std::runtime_error("csv: row " + std::to_string(lineno) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(ncols) + " in " + path);
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j)
            row[j] = detail::parse_double(cells[j], path + ":" + std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("csv: no data rows in " + path);
    Dataset d;
    d.y.resize(Eigen::Index(rows.size()));
    d.F.resize(Eigen::Index(rows.size()), Eigen::Index(ncols - 1));
    for (std::size_t mu = 0; mu < rows.size(); ++mu) {
        d.y[Eigen::Index(mu)] = rows[mu][0];
        for (std::size_t i = 1; i < ncols; ++i)
            d.F(Eigen::Index(mu), Eigen::Index(i - 1)) = rows[mu][i];
    }
    return d;
}

// Ground-truth sidecar: long form with header "name,value"; scalar rows
// sigma, rho, sigma_x, then one x0_<i> row per coefficient. theta0 is not
// stored; recompute it as F x0 / sqrt(N) next to the dataset it belongs to.
inline void write_truth_csv(const std::string& path, const GroundTruth& t) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "name,value\n";
    f << "sigma," << detail::fmt_full(t.sigma) << "\n";
    f << "rho," << detail::fmt_full(t.rho) << "\n";
    f << "sigma_x," << detail::fmt_full(t.sigma_x) << "\n";
    for (Eigen::Index i = 0; i < t.x0.size(); ++i)
        f << "x0_" << i << "," << detail::fmt_full(t.x0[i]) << "\n";
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline GroundTruth read_truth_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
    GroundTruth t;
    std::vector<double> x0;
    bool saw_sigma = false, saw_rho = false, saw_sx = false;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 2)
            throw std::runtime_error("csv: row " + std::to_string(lineno) +
                                     " needs name,value in " + path);
        const double v = detail::parse_double(cells[1], path + ":" + std::to_string(lineno));
        if (cells[0] == "sigma") {
            t.sigma = v;
            saw_sigma = true;
        } else if (cells[0] == "rho") {
            t.rho = v;
            saw_rho = true;
        } else if (cells[0] == "sigma_x") {
            t.sigma_x = v;
            saw_sx = true;
        } else if (cells[0].rfind("x0_", 0) == 0) {
            const std::size_t idx = std::stoul(cells[0].substr(3));
            if (x0.size() <= idx) x0.resize(idx + 1, 0.0);
            x0[idx] = v;
        } else {
            throw std::runtime_error("csv: unknown row '" + cells[0] + "' in " + path);
        }
    }
    if (!saw_sigma || !saw_rho || !saw_sx)
        throw std::runtime_error("csv: truth file missing sigma/rho/sigma_x in " + path);
    t.x0 = Eigen::Map<Eigen::VectorXd>(x0.data(), Eigen::Index(x0.size()));
    return t;
}

}  // namespace gampgap
