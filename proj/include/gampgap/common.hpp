#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace gampgap {

// Numeric failure inside an iterative routine (divergence, failed scalar solve).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required linear system was singular or produced non-finite values.
struct LinAlgError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonConvergenceError : NumericError {
    using NumericError::NumericError;
};

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Standard error of the mean; NaN for fewer than two samples.
inline double se_of(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(v);
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

// Worker cap: GAMP_GAP_THREADS if set, else hardware concurrency.
inline unsigned thread_budget() {
    if (const char* env = std::getenv("GAMP_GAP_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Runs fn(i) for i in [0, n) over at most thread_budget() workers.
// Exceptions are captured and the first one (lowest index) is rethrown
// after all workers finish, so partial work never leaks.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = std::min<std::size_t>(thread_budget(), n ? n : 1);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::pair<std::size_t, std::exception_ptr>> errors(workers, {n, nullptr});
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    if (!errors[w].second) errors[w] = {i, std::current_exception()};
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    std::size_t first = n;
    std::exception_ptr eptr;
    for (auto& [idx, e] : errors)
        if (e && idx < first) {
            first = idx;
            eptr = e;
        }
    if (eptr) std::rethrow_exception(eptr);
}

}  // namespace gampgap
