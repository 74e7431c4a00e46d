#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mecluster {

// Deterministic stream-keyed RNG. Every consumer derives its own stream from
// the master seed plus a fixed tuple of integer keys (dataset index, method
// id, replicate, component, ...). Streams never depend on thread identity or
// scheduling, so results are bit-identical for any worker count.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    // splitmix64 finalizer; decorrelates consecutive keys.
    static std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Folds a key tuple into a single 64-bit stream seed.
    static std::uint64_t key(std::uint64_t master,
                             std::initializer_list<std::uint64_t> parts) noexcept {
        std::uint64_t h = mix(master);
        for (std::uint64_t p : parts) h = mix(h ^ mix(p));
        return h;
    }

    static RngStream substream(std::uint64_t master,
                               std::initializer_list<std::uint64_t> parts) {
        return RngStream(key(master, parts));
    }

    double uniform() { return unif_(engine_); }                    // [0, 1)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    double normal() { return normal_(engine_); }                   // N(0, 1)
    double normal(double mean, double sd) { return mean + sd * normal(); }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n); n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace mecluster
