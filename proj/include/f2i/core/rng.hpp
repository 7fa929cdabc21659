#pragma once

#include <cstdint>
#include <random>

#include "f2i/core/tensor.hpp"

namespace f2i {

/// Deterministic random source. Built on std::mt19937_64 (whose sequence is
/// fully specified by the standard) with hand-rolled uniform/normal draws so
/// streams do not depend on libstdc++ distribution internals.
class Rng {
  public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    /// Independent stream keyed by (seed, stream, index). Used to give every
    /// training iteration / record / subject its own reproducible stream, so
    /// resuming at iteration k replays the exact draws of an unbroken run.
    static Rng keyed(uint64_t seed, uint64_t stream, uint64_t index = 0) {
        uint64_t k = mix(mix(mix(0x9e3779b97f4a7c15ull ^ seed) + stream) + index);
        return Rng(k);
    }

    uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Unbiased via rejection.
    int64_t below(int64_t n) {
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int64_t>(x % un);
    }

    /// Standard normal via Box-Muller (no cached spare: one draw consumes
    /// exactly two uniforms, keeping streams easy to reason about).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    /// Normal truncated to +-2 standard deviations (resampled).
    double trunc_normal(double stddev) {
        double z;
        do {
            z = normal();
        } while (z < -2.0 || z > 2.0);
        return z * stddev;
    }

    template <class T>
    void fill_normal(TensorT<T>& t, double mean = 0.0, double stddev = 1.0) {
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<T>(mean + stddev * normal());
    }

    template <class T>
    void fill_uniform(TensorT<T>& t, double lo, double hi) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    }

    template <class T>
    void fill_trunc_normal(TensorT<T>& t, double stddev) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(trunc_normal(stddev));
    }

    static uint64_t mix(uint64_t x) {  // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace f2i
