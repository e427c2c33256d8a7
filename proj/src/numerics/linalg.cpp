#include "plate/numerics/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "plate/error.hpp"

namespace plate {

namespace {

// Singular values of m (descending) via the eigenvalues of the smaller Gram.
std::vector<double> singular_values(const Matrix& m) {
    const Matrix gram = m.rows() >= m.cols() ? matmul_tn(m, m) : matmul_nt(m, m);
    auto eig = sym_eig(gram);
    std::vector<double> s(eig.values.rbegin(), eig.values.rend());
    for (double& v : s) v = std::sqrt(std::max(0.0, v));
    return s;
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& g) {
    PLATE_REQUIRE(g.rows() == g.cols(), "sym_eig: matrix must be square, got " +
                                            std::to_string(g.rows()) + "x" + std::to_string(g.cols()));
    PLATE_REQUIRE(g.all_finite(), "sym_eig: non-finite entry");
    const std::size_t n = g.rows();
    const double scale = max_abs(g);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            PLATE_REQUIRE(std::abs(g(i, j) - g(j, i)) <= 1e-10 * scale,
                          "sym_eig: matrix is not symmetric at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> in(g.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const Eigen::MatrixXd sym = 0.5 * (in + in.transpose());
    EigenDecomposition out;
    if (n == 0) return out;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success)
        throw NumericalError("sym_eig: eigensolver did not converge (n=" + std::to_string(n) + ")");
    out.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
    out.vectors = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.vectors(i, j) = es.eigenvectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return out;
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fwht_inplace(std::span<double> v) {
    PLATE_REQUIRE(is_power_of_two(v.size()),
                  "fwht: length " + std::to_string(v.size()) + " is not a power of two");
    const std::size_t n = v.size();
    for (std::size_t h = 1; h < n; h <<= 1) {
        for (std::size_t i = 0; i < n; i += 2 * h) {
            for (std::size_t j = i; j < i + h; ++j) {
                const double x = v[j];
                const double y = v[j + h];
                v[j] = x + y;
                v[j + h] = x - y;
            }
        }
    }
}

std::vector<double> fwht(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    fwht_inplace(out);
    return out;
}

Matrix qr_orthonormalize(const Matrix& v) {
    PLATE_REQUIRE(v.cols() <= v.rows(), "qr_orthonormalize: more columns than rows");
    PLATE_REQUIRE(v.all_finite(), "qr_orthonormalize: non-finite entry");
    const std::size_t n = v.rows();
    const std::size_t k = v.cols();
    double max_norm = 0.0;
    for (std::size_t j = 0; j < k; ++j) max_norm = std::max(max_norm, norm2(column(v, j)));
    const double tol = 1e-10 * std::max(max_norm, 1e-300);

    Matrix qt(k, n);  // rows hold the basis vectors
    for (std::size_t j = 0; j < k; ++j) {
        auto col = column(v, j);
        const double original = norm2(col);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t i = 0; i < j; ++i) {
                const double proj = dot(qt.row(i), col);
                const auto qi = qt.row(i);
                for (std::size_t r = 0; r < n; ++r) col[r] -= proj * qi[r];
            }
        }
        const double residual = norm2(col);
        if (residual <= tol || residual <= 1e-10 * original || original == 0.0) {
            const auto sv = singular_values(v);
            const double cut = 1e-10 * (sv.empty() ? 0.0 : sv.front());
            const auto rank = static_cast<std::size_t>(
                std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cut; }));
            throw RankDeficiencyError("qr_orthonormalize: input is rank deficient (numerical rank " +
                                          std::to_string(rank) + " of " + std::to_string(k) + ")",
                                      rank);
        }
        auto qj = qt.row(j);
        for (std::size_t r = 0; r < n; ++r) qj[r] = col[r] / residual;
    }
    return transpose(qt);
}

Matrix orthonormal_range(const Matrix& v, double rel_tol) {
    const std::size_t n = v.rows();
    double max_norm = 0.0;
    for (std::size_t j = 0; j < v.cols(); ++j) max_norm = std::max(max_norm, norm2(column(v, j)));
    std::vector<std::vector<double>> basis;
    if (max_norm == 0.0) return Matrix(n, 0);
    for (std::size_t j = 0; j < v.cols() && basis.size() < n; ++j) {
        auto col = column(v, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double proj = dot(b, col);
                for (std::size_t r = 0; r < n; ++r) col[r] -= proj * b[r];
            }
        }
        const double residual = norm2(col);
        if (residual <= rel_tol * max_norm) continue;
        for (double& x : col) x /= residual;
        basis.push_back(std::move(col));
    }
    Matrix out(n, basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j)
        for (std::size_t r = 0; r < n; ++r) out(r, j) = basis[j][r];
    return out;
}

Matrix complement_basis(const Matrix& columns) {
    const std::size_t n = columns.rows();
    const std::size_t m = columns.cols();
    PLATE_REQUIRE(m <= n, "complement_basis: more columns than rows");
    // Householder QR of `columns`; reflectors stored as unit vectors.
    Matrix r = columns;
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<double> u(n, 0.0);
        double norm = 0.0;
        for (std::size_t i = j; i < n; ++i) norm += r(i, j) * r(i, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            reflectors.emplace_back();  // identity reflector
            continue;
        }
        const double alpha = r(j, j) >= 0.0 ? -norm : norm;
        for (std::size_t i = j; i < n; ++i) u[i] = r(i, j);
        u[j] -= alpha;
        const double unorm = norm2(u);
        if (unorm == 0.0) {
            reflectors.emplace_back();
            continue;
        }
        for (double& x : u) x /= unorm;
        for (std::size_t c = j; c < m; ++c) {
            double d = 0.0;
            for (std::size_t i = j; i < n; ++i) d += u[i] * r(i, c);
            for (std::size_t i = j; i < n; ++i) r(i, c) -= 2.0 * d * u[i];
        }
        reflectors.push_back(std::move(u));
    }
    // Columns m..n-1 of Q = H_0 H_1 ... H_{m-1} applied to e_m..e_{n-1}.
    Matrix q(n, n - m);
    for (std::size_t c = 0; c < n - m; ++c) {
        std::vector<double> e(n, 0.0);
        e[m + c] = 1.0;
        for (std::size_t jj = m; jj-- > 0;) {
            const auto& u = reflectors[jj];
            if (u.empty()) continue;
            const double d = dot(u, e);
            for (std::size_t i = 0; i < n; ++i) e[i] -= 2.0 * d * u[i];
        }
        for (std::size_t i = 0; i < n; ++i) q(i, c) = e[i];
    }
    return q;
}

double orthonormality_error(const Matrix& q) {
    const Matrix g = matmul_tn(q, q);
    double err = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
            err = std::max(err, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return err;
}

std::vector<double> principal_angles(const Matrix& q1, const Matrix& q2) {
    PLATE_REQUIRE(q1.rows() == q2.rows(), "principal_angles: row counts differ");
    PLATE_REQUIRE(orthonormality_error(q1) <= 1e-8, "principal_angles: first basis is not orthonormal");
    PLATE_REQUIRE(orthonormality_error(q2) <= 1e-8, "principal_angles: second basis is not orthonormal");
    // Angles are symmetric in the two spans; let `a` be the wider basis.
    const Matrix& a = q1.cols() >= q2.cols() ? q1 : q2;
    const Matrix& b = q1.cols() >= q2.cols() ? q2 : q1;
    const std::size_t count = b.cols();
    if (count == 0) return {};

    const Matrix cross = matmul_tn(a, b);  // a.cols x count
    auto cosines = singular_values(cross);  // descending
    cosines.resize(count, 0.0);
    const Matrix residual = b - matmul(a, cross);  // component of span(b) outside span(a)
    auto sines = singular_values(residual);
    sines.resize(count, 0.0);
    std::sort(sines.begin(), sines.end());  // ascending

    std::vector<double> angles(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double c = std::clamp(cosines[i], -1.0, 1.0);
        const double s = std::clamp(sines[i], -1.0, 1.0);
        angles[i] = s * s < 0.5 ? std::asin(s) : std::acos(c);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
    PLATE_REQUIRE(rows >= 1 && cols >= 1, "gaussian_matrix: dimensions must be positive");
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

}  // namespace plate
