#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace tined {

/// Deterministic 64-bit generator (SplitMix64). All randomness in the
/// engine flows through this type so that runs are bit-reproducible across
/// platforms; standard-library distributions are implementation-defined and
/// deliberately avoided.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal via Box-Muller. Deterministic; caches the paired value.
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    /// k distinct values from [0, n), returned sorted ascending.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  private:
    std::uint64_t state_;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// Derives an independent sub-seed from a base seed, a purpose tag and an
/// index. Separate streams keep unrelated random consumers (layer init,
/// per-epoch dropout, edge sampling, splits) from perturbing each other when
/// a feature is toggled on or off.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0);

}  // namespace tined
