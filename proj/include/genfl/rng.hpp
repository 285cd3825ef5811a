#pragma once

// Deterministic random streams. Every consumer derives its own stream from
// (root seed, context, ids...) so results do not depend on the execution
// schedule. Generators are fixed-algorithm (splitmix64 seeding, xoshiro256++
// core, Box-Muller normals) rather than <random> distributions, which are
// implementation-defined.

#include <array>
#include <cmath>
#include <cstdint>

namespace genfl::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive(std::uint64_t root, std::uint64_t a) {
    std::uint64_t s = root;
    std::uint64_t h = splitmix64(s);
    s = h ^ (a + 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

inline std::uint64_t derive(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
    return derive(derive(root, a), b);
}

inline std::uint64_t derive(std::uint64_t root, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return derive(derive(root, a, b), c);
}

class Stream {
public:
    explicit Stream(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, bound) via rejection (no modulo bias)
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // standard normal, Box-Muller with cached spare
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // standard normal conditioned on |z| <= max_abs, by rejection
    double next_normal_truncated(double max_abs) {
        for (;;) {
            double z = next_normal();
            if (std::abs(z) <= max_abs) return z;
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stream-derivation contexts. Keeping them in one table avoids collisions
// between subsystems that share a root seed.
enum Context : std::uint64_t {
    kDataGen = 1,
    kPartition = 2,
    kSplit = 3,
    kPriorInit = 4,
    kClientSampling = 5,
    kClientUpdate = 6,
    kPriorUpdate = 7,
    kCertify = 8,
    kTestEval = 9,
    kPriorSampling = 10,
    kPersonalise = 11,
};

}  // namespace genfl::rng
