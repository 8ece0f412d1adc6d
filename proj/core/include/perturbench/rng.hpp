#pragma once

#include <cstdint>

namespace perturbench {

/// Counter-based generator: the n-th draw is a pure function of (key, n), so
/// streams are identical on every platform and substreams never overlap.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();
    /// +1 or -1 with equal probability.
    double sign();

    /// Independent generator derived from this one's key and `id`.
    Rng substream(std::uint64_t id) const;

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    bool operator==(const Rng&) const = default;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
/// Order-sensitive combination of two 64-bit values.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

}  // namespace perturbench
