#pragma once

// Counter-based random numbers.
//
// All randomness in the library flows through Philox4x32-10. A generator is fully
// described by a 64-bit key (the seed) and a 128-bit counter, so there is no
// hidden global state and independent streams are derived by hashing a
// (seed, stream id) pair through the same block function:
//
//     derive_seed(seed, stream) = first 64 bits of Philox(key = seed,
//                                 counter = {stream.lo, stream.hi, 0x5eed, 0x51})

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>

namespace lowrank {

class Philox
{
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    explicit Philox(std::uint64_t seed = 0) : key_{lo(seed), hi(seed)} {}

    /// The raw Philox4x32-10 bijection.
    static Block block(Block ctr, Key key)
    {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

    /// Seed of an independent child stream.
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
    {
        const Block out = block({lo(stream), hi(stream), 0x5eedu, 0x51u}, {lo(seed), hi(seed)});
        return (std::uint64_t{out[1]} << 32) | out[0];
    }

    Philox split(std::uint64_t stream) const { return Philox(derive_seed(seed(), stream)); }

    std::uint64_t seed() const { return (std::uint64_t{key_[1]} << 32) | key_[0]; }

    result_type operator()()
    {
        if (used_ == 4) {
            buffer_ = block(counter_, key_);
            advance();
            used_ = 0;
        }
        return buffer_[used_++];
    }

    std::uint64_t next_u64()
    {
        const std::uint64_t a = (*this)();
        const std::uint64_t b = (*this)();
        return (a << 32) | b;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), rejection sampled.
    std::uint64_t uniform_index(std::uint64_t n)
    {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()
                                    - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = next_u64();
        while (v >= limit)
            v = next_u64();
        return v % n;
    }

    /// Standard normal via Box-Muller.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Circularly-symmetric complex normal with E|z|^2 = 1.
    std::complex<double> complex_normal()
    {
        const double re = normal();
        const double im = normal();
        return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
    }

    double rademacher() { return ((*this)() & 1u) ? 1.0 : -1.0; }

    std::complex<double> unimodular() { return std::polar(1.0, 2.0 * std::numbers::pi * uniform()); }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static constexpr std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
    static constexpr std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

    void advance()
    {
        for (auto& word : counter_)
            if (++word != 0)
                break;
    }

    Key key_;
    Block counter_{0, 0, 0, 0};
    Block buffer_{0, 0, 0, 0};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace lowrank
