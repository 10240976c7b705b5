// rng.hpp - seeded random streams and the stage-seed derivation scheme.
#pragma once

#include <cstdint>
#include <string_view>

namespace regseg {

// splitmix64 step; the generator behind every random stream in this project.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Stage-seed derivation: seed = splitmix(splitmix(master ^ fnv1a(stage)) ^ index).
// Each (stage, index) pair gets an independent stream, so changing how many
// seeds one stage consumes never perturbs another stage.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                                 std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : stage) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t s = master ^ h;
    std::uint64_t a = splitmix64(s);
    std::uint64_t t = a ^ index;
    return splitmix64(t);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); modulo bias is irrelevant at the sizes used here
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    // Box-Muller; consumes exactly two uniforms per call.
    double normal();

private:
    std::uint64_t state_;
};

} // namespace regseg
