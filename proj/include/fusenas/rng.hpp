#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace fusenas {

// Deterministic random stream. All randomness in a run flows from one root
// seed through named sub-streams, so identical (seed, stream) pairs replay
// the same sequence regardless of where the stream is consumed.
//
// Conversions from raw 64-bit draws are written out by hand instead of using
// std distributions, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : base_(splitmix(seed)), engine_(base_) {}

    Rng(uint64_t seed, const std::string& stream)
        : base_(mix(seed, fnv1a(stream))), engine_(base_) {}

    // Derives an independent child stream, e.g. one per sample or per step.
    Rng child(const std::string& stream, uint64_t index = 0) const {
        return Rng(mix(mix(base_, fnv1a(stream)), index), RawTag{});
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;  // no modulo bias
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Standard exponential; used for simplex sampling.
    double exponential() {
        double u = uniform();
        while (u <= 1e-300) u = uniform();
        return -std::log(u);
    }

    static uint64_t fnv1a(const std::string& s) {
        uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    struct RawTag {};
    Rng(uint64_t mixed, RawTag) : base_(mixed), engine_(mixed) {}

    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static uint64_t mix(uint64_t a, uint64_t b) { return splitmix(a ^ splitmix(b)); }

    uint64_t base_ = 0;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fusenas
