#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace aqs {

// std::mt19937_64 output is pinned by the standard, but the distribution
// adaptors are not, so all transforms here are written out explicitly.
// Golden values frozen in tests rely on this.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Integer in [0, n), n >= 1. Rejection-free modulo is fine at desk scale.
    std::uint64_t below(std::uint64_t n) { return eng_() % n; }

    /// Standard normal via Box-Muller; consumes exactly two draws, no cached spare.
    double gaussian() {
        double u1 = static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 eng_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a label, so each
/// consumer (device noise, link loss, holdout draw, ...) replays identically
/// regardless of what the others consumed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t idx = 0) {
    std::uint64_t h = master;
    for (unsigned char c : tag) h = splitmix64(h ^ c);
    return splitmix64(h ^ (0x5bf03635ull + idx));
}

}  // namespace aqs
