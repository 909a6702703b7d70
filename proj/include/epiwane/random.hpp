#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace epiwane {

/// splitmix64 finaliser. Used both to seed streams and to derive stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Reserved stream indices. Non-negative indices are infection numbers
// (0 = initial profile, i >= 1 = profile after the i-th infection).
inline constexpr std::int64_t kCandidateStream = -1;
inline constexpr std::int64_t kInitialFlagStream = -2;
inline constexpr std::int64_t kReplicateStream = -3;
inline constexpr std::int64_t kDriverStream = -4;
inline constexpr std::int64_t kBankStream = -5;

/// Key of the stream for (master seed, individual, stream index).
constexpr std::uint64_t stream_key(std::uint64_t master, std::uint64_t k, std::int64_t i) noexcept
{
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ (k * 0xd1b54a32d192ed03ULL));
    h = splitmix64(h ^ static_cast<std::uint64_t>(i) * 0x8cb92ba72f3d8dd7ULL);
    return h;
}

/// xoshiro256++ generator, seeded through splitmix64. Satisfies
/// UniformRandomBitGenerator so it can drive the <random> distributions.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t seed = 0) noexcept
    {
        std::uint64_t x = seed;
        for (auto& w : s_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }

    Stream(std::uint64_t master, std::uint64_t k, std::int64_t i) noexcept : Stream(stream_key(master, k, i)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on (0, 1); never returns 0 or 1.
    double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    double exponential(double rate) noexcept { return -std::log(uniform()) / rate; }

    bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
};

} // namespace epiwane
