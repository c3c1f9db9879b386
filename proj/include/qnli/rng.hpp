#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace qnli {

// All randomness in the kit flows through this header so that runs are
// reproducible bit-for-bit from a single root seed. Standard-library
// distributions are avoided on purpose: their outputs are
// implementation-defined, which would break golden files.

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Independent sub-stream for a named consumer of the root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
    return mix64(root ^ hash_str(label));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ = mix64(state_ + 0x2545f4914f6cdd1dULL);
        return state_;
    }

    /// Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Multiply-shift; bias is negligible at the
    /// scales used here and the mapping is fully specified.
    std::uint64_t below(std::uint64_t n) {
        return std::uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (one draw per call, no cached spare).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    std::uint64_t state_;
};

/// Fisher-Yates with the explicit bounded sampler above.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = std::size_t(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

/// Counter-based standard normal: the same (seed, epoch, word, slot) key
/// always yields the same draw, regardless of evaluation order or thread
/// schedule.
inline double keyed_normal(std::uint64_t seed, std::uint64_t epoch,
                           std::uint64_t word_hash, std::uint64_t slot) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ epoch);
    h = mix64(h ^ word_hash);
    h = mix64(h ^ slot);
    Rng r(h);
    return r.normal();
}

}  // namespace qnli
