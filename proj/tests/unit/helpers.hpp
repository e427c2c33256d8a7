#pragma once

#include <cmath>
#include <cstdint>

#include "plate/numerics/linalg.hpp"
#include "plate/numerics/matrix.hpp"
#include "plate/numerics/rng.hpp"

namespace testing {

inline plate::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    plate::SeededRng rng(seed);
    return plate::gaussian_matrix(rows, cols, rng);
}

inline plate::Matrix random_symmetric(std::size_t n, std::uint64_t seed) {
    const plate::Matrix a = random_matrix(n, n, seed);
    return 0.5 * (a + plate::transpose(a));
}

inline plate::Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    return plate::qr_orthonormalize(random_matrix(rows, cols, seed));
}

/// Relative error with an absolute floor, the usual gradient-check metric.
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing
