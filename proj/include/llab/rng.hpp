#pragma once

#include <cstdint>
#include <string_view>

namespace llab {

// Deterministic xoshiro256** generator. std:: distributions are
// implementation-defined, so uniform/normal sampling is hand-rolled to keep
// artifacts byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent stream for (purpose, seed). The label is hashed into the
    // seed so that e.g. "init" and "noise" streams never overlap even when
    // the user seed is the same.
    static Rng stream(std::uint64_t seed, std::string_view label);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double next_double();

    float uniform(float lo, float hi);

    // Standard normal via Box-Muller (two uniforms per draw, no caching).
    float normal();

    // Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n);

    // Rademacher +-1.
    float sign();

private:
    std::uint64_t state_[4];
};

// FNV-1a, used for labeled stream derivation and config hashing.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace llab
