#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace plate {

/// Mixes a parent seed with a consumer tag into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// xoshiro256** seeded through splitmix64. Single-owner; hand child streams
/// to other consumers with split().
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    SeededRng split(std::string_view tag) const { return SeededRng(derive_seed(seed_, tag)); }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Standard normal (Box-Muller).
    double normal() noexcept;
    /// +1 or -1 with equal probability.
    double rademacher() noexcept;
    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace plate
