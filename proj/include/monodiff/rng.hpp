#pragma once

#include <cmath>
#include <cstdint>

namespace monodiff::rng {

/// SplitMix64 finalizer; bijective 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based keyed draw: independent of call order, so parallel and
/// serial generation produce identical streams.
inline std::uint64_t keyed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = mix64(h ^ stream);
    h = mix64(h ^ counter);
    return h;
}

/// Map to the open interval (0,1); never returns 0 or 1.
inline double to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return to_unit(keyed(seed, stream, counter));
}

/// Standard normal draw keyed by (seed, stream, counter) via Box-Muller.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const double u1 = to_unit(keyed(seed, stream, 2 * counter));
    const double u2 = to_unit(keyed(seed, stream, 2 * counter + 1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Derive a child seed (per ensemble member, per subsystem).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt));
}

} // namespace monodiff::rng
