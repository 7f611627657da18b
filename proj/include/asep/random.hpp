#pragma once

#include <bit>
#include <cstdint>
#include <limits>

namespace asep {

/// SplitMix64: seeds other generators and hashes (seed, N, run) tuples.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

private:
    std::uint64_t state_;
};

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit constexpr Xoshiro256(std::uint64_t seed) noexcept : seed_(seed) {
        SplitMix64 sm(seed);
        for (auto& w : s_) w = sm();
    }

    constexpr result_type operator()() noexcept {
        const std::uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = std::rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0,1), 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0,1]; safe as an argument to log().
    constexpr double uniform_pos() noexcept {
        return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n) by multiply-shift on 32 bits; n < 2^32.
    static constexpr std::uint32_t bounded32(std::uint32_t bits, std::uint32_t n) noexcept {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(bits) * n) >> 32);
    }

    constexpr std::uint64_t seed() const noexcept { return seed_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4]{};
};

/// Seed of run `run` at system size `n_sites`: seed_base XOR hash(N, r).
constexpr std::uint64_t derive_seed(std::uint64_t seed_base, std::uint64_t n_sites,
                                    std::uint64_t run) noexcept {
    SplitMix64 h(n_sites * 0x100000001b3ULL + run);
    h();
    return seed_base ^ h();
}

} // namespace asep
