#pragma once

#include <cstdint>

namespace emstdp {

// Counter-based pseudo-random streams (splitmix64 finalizer). Every draw is
// a pure function of (seed, stream, counter), so results never depend on
// call order or thread scheduling and identical configs replay bit-exactly.
namespace rng {

enum class Stream : std::uint64_t {
    forward_weights = 1,
    feedback_fa = 2,
    feedback_dfa = 3,
    shuffle = 4,
    rounding = 5,
    dataset = 6,
    misc = 7,
};

inline std::uint64_t mix(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t draw(std::uint64_t seed, Stream stream, std::uint64_t counter)
{
    std::uint64_t x = mix(seed ^ (0xA0761D6478BD642FULL * static_cast<std::uint64_t>(stream)));
    return mix(x ^ counter);
}

// Uniform double in [0, 1), 53-bit resolution.
inline double u01(std::uint64_t seed, Stream stream, std::uint64_t counter)
{
    return static_cast<double>(draw(seed, stream, counter) >> 11) * 0x1.0p-53;
}

// Uniform integer in [lo, hi] inclusive.
inline std::int64_t uniform_int(std::uint64_t seed, Stream stream, std::uint64_t counter,
        std::int64_t lo, std::int64_t hi)
{
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t r = draw(seed, stream, counter);
    const auto wide = static_cast<unsigned __int128>(r) * span;
    return lo + static_cast<std::int64_t>(wide >> 64);
}

// Uniform double in [-a, a].
inline double uniform_sym(std::uint64_t seed, Stream stream, std::uint64_t counter, double a)
{
    return (2.0 * u01(seed, stream, counter) - 1.0) * a;
}

} // namespace rng
} // namespace emstdp
