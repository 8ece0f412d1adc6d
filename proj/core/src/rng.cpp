#include "perturbench/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace perturbench {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2)));
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : key_(hash_combine(seed, stream)) {}

std::uint64_t Rng::next_u64() {
    const std::uint64_t n = counter_++;
    return mix64(key_ ^ mix64(n * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: empty range");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r < limit) return r % n;
    }
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::sign() { return (next_u64() >> 63) != 0 ? 1.0 : -1.0; }

Rng Rng::substream(std::uint64_t id) const {
    Rng out;
    out.key_ = hash_combine(key_, id ^ 0xA0761D6478BD642Full);
    out.counter_ = 0;
    return out;
}

}  // namespace perturbench
