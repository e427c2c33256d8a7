#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "plate/numerics/matrix.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column i pairs with values[i]
};

/// Full spectrum of a symmetric matrix (Householder tridiagonalization and
/// implicit QR). The input must be symmetric to 1e-10 relative.
EigenDecomposition sym_eig(const Matrix& g);

/// Unnormalized Walsh-Hadamard transform; length must be a power of two.
std::vector<double> fwht(std::span<const double> v);
void fwht_inplace(std::span<double> v);

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

/// Orthonormal basis with the same column span (modified Gram-Schmidt,
/// two passes). Throws RankDeficiencyError if V is numerically rank deficient.
Matrix qr_orthonormalize(const Matrix& v);

/// Orthonormal basis of the numerical column span; columns whose residual
/// falls below rel_tol times the largest column norm are dropped.
Matrix orthonormal_range(const Matrix& v, double rel_tol = 1e-10);

/// Orthonormal basis (n x (n - m)) of the orthogonal complement of the
/// columns of `columns` (n x m, m <= n), via a full Householder QR.
Matrix complement_basis(const Matrix& columns);

/// Principal angles (ascending, radians) between span(q1) and span(q2).
/// Cosines come from the singular values of q1^T q2; small angles are
/// resolved from the sines to keep full accuracy near zero.
std::vector<double> principal_angles(const Matrix& q1, const Matrix& q2);

/// Max entry of |Q^T Q - I|.
double orthonormality_error(const Matrix& q);

/// i.i.d. standard normal entries.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, SeededRng& rng);

}  // namespace plate
