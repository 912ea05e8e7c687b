#pragma once

#include <cmath>
#include <cstdint>

namespace nlmecv {

// Counter-based deterministic RNG. Every stream is keyed by a tuple
// (seed, replicate, subject, stream-id), so draws are independent of the
// order in which replicates or subjects are generated, and identical on
// every platform (no std::distribution involved).
class StreamRng {
public:
    StreamRng(std::uint64_t seed, std::uint64_t replicate = 0,
              std::uint64_t subject = 0, std::uint64_t stream = 0)
        : state_(mix(mix(mix(mix(0x9e3779b97f4a7c15ULL ^ seed) + replicate) +
                         subject) +
                     stream)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Standard normal via Box-Muller; pairs are consumed eagerly so the
    // stream position stays a pure function of the draw count.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Multiply-shift; bias is < 2^-64 per draw, irrelevant here.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    // splitmix64 finalizer.
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace nlmecv
