#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "plate/numerics/matrix.hpp"

namespace plate {

/// Low-energy input basis Q of the frozen rows.
struct InputBasis {
    Matrix q;  // d_in x k, orthonormal columns
    std::size_t k = 0;
    double tau = 0.0;
    std::size_t k_max = 0;
    double energy_captured = 0.0;  // energy fraction left outside span(Q)
    bool randomized = false;       // produced by the SRHT path
};

struct SrhtConfig {
    std::size_t coarse_probes = 8;
    std::size_t refined_probes = 32;
    std::size_t candidate_count = 0;  // 0 picks min(4 * k_max, d_in)
    std::size_t polish_iters = 8;     // block Krylov steps after the candidate Rayleigh-Ritz
    std::uint64_t seed = 0;
};

enum class BasisPath { Auto, Dense, Srht };

/// Dense path is used up to this input width when BasisPath::Auto.
inline constexpr std::size_t kDenseBasisMaxDim = 1024;

std::size_t default_k_max(std::size_t d_in);

/// W_frozen^T W_frozen.
Matrix gram(const Matrix& w_frozen);

/// Basis dimension from an ascending spectrum: k = min(k_max, d_in - m)
/// with m the fewest top eigenvalues holding a tau fraction of the energy.
std::size_t choose_k(std::span<const double> eigvals_ascending, double tau, std::size_t k_max);

InputBasis dense_low_energy_basis(const Matrix& w_frozen, double tau, std::size_t k_max);

/// Randomized path: SRHT rotation, Hutchinson coordinate screening
/// (coarse then refined probes), then a polish inside the candidate span.
InputBasis srht_low_energy_basis(const Matrix& w_frozen, double tau, std::size_t k_max,
                                 const SrhtConfig& cfg);

InputBasis low_energy_basis(const Matrix& w_frozen, double tau, std::size_t k_max, BasisPath path,
                            const SrhtConfig& cfg);

}  // namespace plate
