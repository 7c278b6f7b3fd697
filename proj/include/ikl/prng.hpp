#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ikl {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {
inline std::uint64_t splitmix64_fin(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: the value at position c is a pure function of
// (seed, c), so a copy of the (seed, counter) pair reproduces the stream
// exactly. Normal draws consume exactly two uniforms each (Box-Muller),
// keeping the counter a faithful stream position.
class Prng {
public:
    explicit Prng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() {
        ++counter_;
        return detail::splitmix64_fin(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_normal() {
        // u1 in (0, 1] so the log is finite.
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Independent named substream. Derived from the original seed only, so
    // split order and parent consumption do not matter.
    Prng split(std::string_view label) const {
        return Prng(detail::splitmix64_fin(seed_ ^ (fnv1a64(label) | 1)));
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace ikl
