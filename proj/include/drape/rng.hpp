#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "drape/common.hpp"

namespace drape {

/// Mixes a base seed with an index (splitmix64 finalizer), giving
/// per-item streams that are independent of iteration order and thread
/// count.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Seeded RNG with self-contained distributions so streams are reproducible
/// across standard libraries (std distributions are implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call; cached pair unused
    /// deliberately so the stream position is easy to reason about).
    double normal() {
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Uniform integer in [0, n).
    int index(int n) {
        check(n > 0, "Rng::index: empty range");
        return static_cast<int>(gen_() % static_cast<uint64_t>(n));
    }

    /// Derives an independent child stream; mixing keeps low-entropy seeds apart.
    Rng fork(uint64_t salt) {
        uint64_t s = gen_() ^ (salt * 0x9e3779b97f4a7c15ull + 0xbf58476d1ce4e5b9ull);
        return Rng(s);
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i)
            std::swap(xs[i - 1], xs[static_cast<size_t>(gen_() % i)]);
    }

private:
    std::mt19937_64 gen_;
};

} // namespace drape
