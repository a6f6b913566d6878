#include "gradmix/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gradmix {

namespace {

// splitmix64; used only for seeding and key mixing.
std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

Rng Rng::fork(std::string_view name) const { return fork(name, 0, 0); }
Rng Rng::fork(std::string_view name, std::uint64_t i) const { return fork(name, i, 0); }

Rng Rng::fork(std::string_view name, std::uint64_t i, std::uint64_t j) const {
    // Mix the parent state (unadvanced) with the stream key.
    std::uint64_t key = fnv1a(name);
    std::uint64_t sm = s_[0] ^ rotl(key, 1);
    sm ^= rotl(s_[1], 17) ^ (i * 0x9e3779b97f4a7c15ull);
    sm ^= rotl(s_[2], 33) ^ (j * 0xc2b2ae3d27d4eb4full);
    sm ^= rotl(s_[3], 47);
    Rng r;
    for (auto& w : r.s_) w = splitmix64(sm);
    return r;
}

std::uint64_t Rng::next_u64() {
    std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53 random bits into [0, 1).
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::logic_error("uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    // Box-Muller; consumes exactly two uniforms, second output discarded.
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw std::logic_error("gamma: shape must be positive");
    if (shape < 1.0) {
        // Boost to shape+1 and scale back.
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double Rng::beta_symmetric(double alpha) {
    if (!(alpha > 0.0)) throw std::logic_error("beta_symmetric: alpha must be positive");
    double x = gamma(alpha);
    double y = gamma(alpha);
    if (x + y == 0.0) return 0.5;
    return x / (x + y);
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    shuffle(idx);
    if (k < n) idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace gradmix
