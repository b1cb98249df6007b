#pragma once

// Keyed, platform-stable hashing used wherever a seeded choice must not depend
// on call order (codon picks, split membership, stratified draws).
// std::hash and the <random> distributions are implementation-defined, so they
// are not used for anything that ends up in a report.

#include <cstdint>
#include <string_view>

namespace dualeval {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t mix_key(std::uint64_t seed, std::string_view id, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed ^ fnv1a64(id)) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Uniform integer in [0, bound) from a 64-bit key (multiply-shift reduction).
inline std::uint64_t reduce_to(std::uint64_t key, std::uint64_t bound) noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(key) * bound) >> 64);
}

/// Sequential stream over splitmix64; deterministic and portable.
class SplitMix {
public:
    explicit SplitMix(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t below(std::uint64_t bound) noexcept { return reduce_to(next(), bound); }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

}  // namespace dualeval
