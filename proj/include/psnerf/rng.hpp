#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace psnerf {

// Counter-based random stream: draw i is a pure function of (seed, i), so
// substreams can be forked per ray batch and replayed bit-identically at any
// thread count.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    // Independent substream derived from the current seed and a stream key.
    RngStream fork(std::uint64_t key) const {
        return RngStream(mix(seed_ ^ (0x9e3779b97f4a7c15ULL * (key + 1))), 0);
    }

    std::uint64_t next_u64() { return mix(seed_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform in [0, 1).
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (one value per call, no caching so the
    // counter fully determines the stream state).
    double next_normal() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        while (u1 <= 1e-300) u1 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::vector<double> gaussian_vector(std::size_t n, double stddev) {
        if (stddev < 0.0) throw std::invalid_argument("gaussian_vector: negative stddev");
        std::vector<double> out(n);
        for (auto& v : out) v = stddev == 0.0 ? 0.0 : stddev * next_normal();
        return out;
    }

    // Uniform integer in [0, n).
    std::uint64_t next_index(std::uint64_t n) { return next_u64() % n; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace psnerf
