#pragma once

#include <cmath>
#include <cstdint>

namespace mf {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Key for the stream (seed, a, b). Distinct tuples give independent streams.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(mix64(seed) ^ (a * 0xd1b54a32d192ed03ULL)) ^ (b * 0x8cb92ba72f3d8dd7ULL));
}

// Stream tags used by the simulators.
inline constexpr std::uint64_t kTagData = 0x44415441ULL;
inline constexpr std::uint64_t kTagInit = 0x494e4954ULL;
inline constexpr std::uint64_t kTagNoise = 0x4e4f4953ULL;
inline constexpr std::uint64_t kTagRisk = 0x5249534bULL;

/// Counter-based generator: draw n of the stream keyed by k is mix64(k + n*phi),
/// a pure function of (key, n). Streams can be created anywhere in any order
/// and always yield the same values.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}
    CounterRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) : key_(stream_key(seed, a, b)) {}

    std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * (counter_++)); }

    /// Uniform on (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the second variate is kept for the next call.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace mf
