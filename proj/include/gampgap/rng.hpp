#pragma once

#include <cmath>
#include <cstdint>

namespace gampgap {

// Philox4x64-10 counter generator. Word order, multipliers, and Weyl constants
// follow the Random123 reference implementation, so streams are reproducible
// from any language with the same convention. key = (seed, stream); the 256-bit
// counter starts at zero and increments once per 4-word block.
class Philox4x64 {
  public:
    Philox4x64(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{seed, stream}, ctr_{0, 0, 0, 0} {}

    std::uint64_t raw64() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    // 53-bit uniform on [0,1): (raw >> 11) * 2^-53
    double next_uniform() {
        return double(raw64() >> 11) * 0x1.0p-53;
    }

    // Box-Muller pair, cos branch first, sin branch cached. u1 is redrawn on
    // the (probability 2^-53) event u1 = 0 so log stays finite.
    double next_gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_uniform();
        while (u1 == 0.0) u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(ang);
        have_cached_ = true;
        return r * std::cos(ang);
    }

    // Unbiased integer in [0, n) by rejection on the top of the 64-bit range.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t rem = (~std::uint64_t(0) % n + 1) % n;  // 2^64 mod n
        const std::uint64_t lim = ~std::uint64_t(0) - rem;          // last accepted value
        std::uint64_t r = raw64();
        while (r > lim) r = raw64();
        return r % n;
    }

  private:
    static constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
    static constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
    static constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;

    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        const unsigned __int128 prod = (unsigned __int128)a * b;
        hi = std::uint64_t(prod >> 64);
        lo = std::uint64_t(prod);
    }

    void refill() {
        // counter bumps before the block is produced, matching the reference
        // convention (fresh state emits the block for counter value 1)
        for (int i = 0; i < 4; ++i) {
            if (++ctr_[i] != 0) break;
        }
        std::uint64_t x0 = ctr_[0], x1 = ctr_[1], x2 = ctr_[2], x3 = ctr_[3];
        std::uint64_t k0 = key_[0], k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            std::uint64_t hi0, lo0, hi1, lo1;
            mulhilo(kM0, x0, hi0, lo0);
            mulhilo(kM1, x2, hi1, lo1);
            x0 = hi1 ^ x1 ^ k0;
            x1 = lo1;
            x2 = hi0 ^ x3 ^ k1;
            x3 = lo0;
            k0 += kW0;
            k1 += kW1;
        }
        buf_[0] = x0;
        buf_[1] = x1;
        buf_[2] = x2;
        buf_[3] = x3;
        buf_pos_ = 0;
    }

    std::uint64_t key_[2];
    std::uint64_t ctr_[4];
    std::uint64_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;

  public:
    // Test hook: start from an explicit counter block.
    void set_counter(std::uint64_t c0, std::uint64_t c1, std::uint64_t c2, std::uint64_t c3) {
        ctr_[0] = c0;
        ctr_[1] = c1;
        ctr_[2] = c2;
        ctr_[3] = c3;
        buf_pos_ = 4;
        have_cached_ = false;
    }
};

}  // namespace gampgap
