#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dtrf {

// Deterministic, implementation-owned RNG (splitmix64). All stochastic parts
// of the library draw from this so runs are reproducible bit-for-bit across
// compilers and standard libraries. normal() spends two uniforms per call and
// keeps no cached spare, so forked streams never interleave state.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n) { return int(next_u64() % uint64_t(n)); }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Derives an independent stream; deterministic in (parent seed, stream id).
    Rng fork(uint64_t stream) const { return Rng(mix(state_, stream)); }

    Rng fork(std::string_view tag) const { return Rng(mix(state_, hash_str(tag))); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = int(v.size()) - 1; i > 0; --i) {
            std::swap(v[i], v[size_t(uniform_int(i + 1))]);
        }
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(std::string_view s) {
        uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
        for (char c : s) {
            h ^= uint8_t(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

  private:
    uint64_t state_;
};

} // namespace dtrf
