#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cellforge::num {

/// Seeded deterministic stream of uniforms and standard normals.
///
/// mt19937_64 is specified bit-exactly by the standard, and every variate here
/// is derived from it through explicit arithmetic (no std::*_distribution,
/// whose outputs are implementation-defined), so sequences are reproducible
/// across platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
    double normal();

    /// Uniform integer in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent stream keyed by (this stream's seed, stream index).
    Rng derive(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

/// SplitMix64 step; used to decorrelate derived stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cellforge::num
