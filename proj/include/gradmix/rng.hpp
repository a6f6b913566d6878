#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gradmix {

/// Deterministic counter-free PRNG (xoshiro256**) with named substreams.
///
/// Every consumer of randomness forks its own stream from the run seed by
/// name (and optional indices), so enabling or disabling one feature never
/// shifts the draws seen by another. Forking is pure: the parent stream is
/// not advanced.
class Rng {
   public:
    explicit Rng(std::uint64_t seed);

    /// Derive an independent stream keyed by a purpose name and indices.
    Rng fork(std::string_view name) const;
    Rng fork(std::string_view name, std::uint64_t i) const;
    Rng fork(std::string_view name, std::uint64_t i, std::uint64_t j) const;

    std::uint64_t next_u64();

    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal via Box-Muller (two uniforms per draw, no caching).
    double normal();
    /// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape);
    /// Beta(alpha, alpha) via two gamma draws; alpha > 0.
    double beta_symmetric(double alpha);

    /// Fisher-Yates shuffle, deterministic for a given stream state.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// First k entries of a shuffled index range [0, n).
    std::vector<int> sample_without_replacement(int n, int k);

   private:
    Rng() = default;
    std::uint64_t s_[4] = {0, 0, 0, 0};
};

}  // namespace gradmix
