#include "plate/numerics/lanczos.hpp"

#include <algorithm>
#include <cmath>

#include "plate/error.hpp"
#include "plate/numerics/linalg.hpp"

namespace plate {

namespace {

struct Ritz {
    double value;
    std::vector<double> coeffs;
};

Ritz top_ritz(const std::vector<double>& alpha, const std::vector<double>& beta) {
    const std::size_t m = alpha.size();
    Matrix t(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        t(i, i) = alpha[i];
        if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[i];
    }
    auto eig = sym_eig(t);
    return {eig.values.back(), column(eig.vectors, m - 1)};
}

}  // namespace

TopEigenpair lanczos_top(const SymmetricOperator& op, std::vector<double> start, int max_iters,
                         double tol) {
    PLATE_REQUIRE(max_iters >= 1, "lanczos_top: max_iters must be positive");
    const std::size_t n = start.size();
    const double start_norm = norm2(start);
    PLATE_REQUIRE(start_norm > 0.0, "lanczos_top: start vector is zero");
    for (double& x : start) x /= start_norm;

    std::vector<std::vector<double>> basis;
    std::vector<double> alpha;
    std::vector<double> beta;
    basis.push_back(std::move(start));

    TopEigenpair out;
    double previous = 0.0;
    int stable = 0;
    Ritz ritz{0.0, {}};
    std::vector<double> w(n);
    for (int it = 0; it < max_iters; ++it) {
        const auto& v = basis.back();
        std::fill(w.begin(), w.end(), 0.0);
        op(v, w);
        const double a = dot(w, v);
        alpha.push_back(a);
        // Full reorthogonalization, twice for stability.
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                const double proj = dot(w, b);
                for (std::size_t i = 0; i < n; ++i) w[i] -= proj * b[i];
            }
        }
        ritz = top_ritz(alpha, beta);
        out.iterations = it + 1;
        if (it > 0) {
            const double change = std::abs(ritz.value - previous);
            stable = change <= tol * std::max(std::abs(ritz.value), 1e-300) ? stable + 1 : 0;
        }
        previous = ritz.value;
        const double b = norm2(w);
        const double scale = std::max(std::abs(ritz.value), 1e-300);
        if (b <= 1e-12 * scale || basis.size() == n) {
            out.converged = true;
            break;
        }
        if (stable >= 2) {
            out.converged = true;
            break;
        }
        if (it + 1 == max_iters) break;
        beta.push_back(b);
        for (double& x : w) x /= b;
        basis.push_back(w);
    }

    out.value = ritz.value;
    out.vector.assign(n, 0.0);
    for (std::size_t j = 0; j < ritz.coeffs.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) out.vector[i] += ritz.coeffs[j] * basis[j][i];
    const double norm = norm2(out.vector);
    if (norm > 0.0)
        for (double& x : out.vector) x /= norm;
    return out;
}

}  // namespace plate
