#pragma once

#include <cstdint>

namespace signshield {

/// Deterministic random stream with platform-stable output.
///
/// All randomness in the toolkit flows through this class so that a run is
/// reproducible from a single seed. Child streams are derived from the
/// creation seed and an index, never from the current draw position, which
/// makes fan-out across workers order-independent.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [lo, hi) with 24 bits of resolution.
    float uniform(float lo, float hi);

    /// Uniform integer in [0, n). Requires n >= 1.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Gaussian draw (Box-Muller, cached spare).
    float normal(float mean, float stddev);

    /// Independent stream keyed by (creation seed, index).
    Rng child(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    float spare_ = 0.0f;
};

/// splitmix64 output function; also used for seed derivation.
std::uint64_t mix_u64(std::uint64_t z);

}  // namespace signshield
