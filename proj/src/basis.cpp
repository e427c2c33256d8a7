#include "plate/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plate/error.hpp"
#include "plate/numerics/linalg.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

namespace {

double clamp_fraction(double x) { return std::clamp(x, 0.0, 1.0); }

// W^T (W x) for every column of x, without forming the Gram.
Matrix gram_apply(const Matrix& w, const Matrix& x) { return matmul_tn(w, matmul(w, x)); }

}  // namespace

std::size_t default_k_max(std::size_t d_in) { return std::min<std::size_t>(512, d_in); }

Matrix gram(const Matrix& w_frozen) { return matmul_tn(w_frozen, w_frozen); }

std::size_t choose_k(std::span<const double> eigvals_ascending, double tau, std::size_t k_max) {
    PLATE_REQUIRE(!eigvals_ascending.empty(), "choose_k: empty spectrum");
    PLATE_REQUIRE(tau > 0.0 && tau < 1.0, "choose_k: tau must lie in (0, 1)");
    PLATE_REQUIRE(k_max >= 1, "choose_k: k_max must be at least 1");
    const std::size_t d = eigvals_ascending.size();
    double top = 0.0;
    for (double v : eigvals_ascending) top = std::max(top, std::abs(v));
    std::vector<double> vals(eigvals_ascending.begin(), eigvals_ascending.end());
    for (double& v : vals) {
        PLATE_REQUIRE(v >= -1e-10 * std::max(1.0, top), "choose_k: eigenvalue " + std::to_string(v) +
                                                            " is meaningfully negative");
        v = std::max(v, 0.0);
    }
    std::sort(vals.begin(), vals.end());
    const double total = std::accumulate(vals.begin(), vals.end(), 0.0);
    std::size_t k;
    if (total <= 0.0) {
        k = std::min(k_max, d);
    } else {
        const double target = tau * total * (1.0 - 1e-12);
        double acc = 0.0;
        std::size_t m = 0;
        while (m < d && acc < target) {
            acc += vals[d - 1 - m];
            ++m;
        }
        k = std::min(k_max, d - m);
    }
    return std::max<std::size_t>(k, 1);
}

InputBasis dense_low_energy_basis(const Matrix& w_frozen, double tau, std::size_t k_max) {
    PLATE_REQUIRE(w_frozen.cols() >= 1, "dense_low_energy_basis: d_in must be positive");
    const Matrix g = gram(w_frozen);
    auto eig = sym_eig(g);
    for (double& v : eig.values) v = std::max(v, 0.0);
    InputBasis out;
    out.tau = tau;
    out.k_max = k_max;
    out.k = std::min(choose_k(eig.values, tau, k_max), w_frozen.cols());
    out.q = first_cols(eig.vectors, out.k);
    const double total = std::accumulate(eig.values.begin(), eig.values.end(), 0.0);
    const double low = std::accumulate(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(out.k), 0.0);
    out.energy_captured = total > 0.0 ? clamp_fraction((total - low) / total) : 1.0;
    return out;
}

InputBasis srht_low_energy_basis(const Matrix& w_frozen, double tau, std::size_t k_max,
                                 const SrhtConfig& cfg) {
    const std::size_t d = w_frozen.cols();
    const std::size_t rows = w_frozen.rows();
    PLATE_REQUIRE(d >= 2, "srht_low_energy_basis: d_in must be at least 2");
    PLATE_REQUIRE(k_max >= 1, "srht_low_energy_basis: k_max must be positive");
    PLATE_REQUIRE(cfg.coarse_probes >= 1 && cfg.refined_probes >= cfg.coarse_probes,
                  "srht_low_energy_basis: need refined_probes >= coarse_probes >= 1");
    const std::size_t candidates =
        cfg.candidate_count == 0 ? std::min(4 * k_max, d) : cfg.candidate_count;
    PLATE_REQUIRE(candidates >= 1 && candidates <= d,
                  "srht_low_energy_basis: candidate_count must lie in [1, d_in]");

    const std::size_t n = next_power_of_two(d);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    SeededRng root(cfg.seed);
    SeededRng sign_rng = root.split("srht-signs");
    SeededRng probe_rng = root.split("hutchinson");
    std::vector<double> signs(n);
    for (double& s : signs) s = sign_rng.rademacher();

    // Stage (i)+(ii): coordinate energies of the rotated operator,
    // e_i = E[(Omega^T W^T u)_i^2] for Rademacher u.
    double trace_sum = 0.0;
    std::size_t trace_count = 0;
    auto run_probes = [&](std::size_t count) {
        std::vector<double> energy(n, 0.0);
        std::vector<double> y(n);
        Matrix u(rows, 1);
        for (std::size_t p = 0; p < count; ++p) {
            for (double& v : u.values()) v = probe_rng.rademacher();
            std::fill(y.begin(), y.end(), 0.0);
            if (rows > 0) {
                const Matrix g = matmul_tn(w_frozen, u);  // d x 1
                for (std::size_t j = 0; j < d; ++j) y[j] = signs[j] * g.values()[j];
            }
            fwht_inplace(y);
            double sq = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double v = y[i] * inv_sqrt_n;
                energy[i] += v * v;
                sq += v * v;
            }
            trace_sum += sq;
            ++trace_count;
        }
        for (double& e : energy) e /= static_cast<double>(count);
        return energy;
    };
    const auto coarse = run_probes(cfg.coarse_probes);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return coarse[a] < coarse[b]; });
    const std::size_t keep = std::min(n, std::max(n / 2, candidates));
    std::vector<std::size_t> half(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    const auto refined = run_probes(cfg.refined_probes);
    std::stable_sort(half.begin(), half.end(), [&](std::size_t a, std::size_t b) {
        return refined[a] != refined[b] ? refined[a] < refined[b] : a < b;
    });
    half.resize(candidates);
    std::sort(half.begin(), half.end());
    const double trace_est = trace_sum / static_cast<double>(trace_count);
    if (!std::isfinite(trace_est)) throw NumericalError("srht_low_energy_basis: probe energies overflowed");

    // Candidate directions Omega e_c = D H e_c / sqrt(n), padded coordinates dropped.
    Matrix x(d, candidates);
    for (std::size_t c = 0; c < candidates; ++c) {
        const std::size_t coord = half[c];
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (__builtin_popcountll(j & coord) & 1) ? -1.0 : 1.0;
            x(j, c) = signs[j] * h * inv_sqrt_n;
        }
    }
    x = orthonormal_range(x);

    // Stage (iii): Rayleigh-Ritz in the candidate span, then block Krylov
    // steps grown from the lowest Ritz vectors.
    if (rows > 0 && max_abs(w_frozen) > 0.0) {
        const Matrix y0 = matmul(w_frozen, x);
        const auto ritz = sym_eig(matmul_tn(y0, y0));
        Matrix block = matmul(x, first_cols(ritz.vectors, std::min(x.cols(), 2 * k_max)));
        x = block;  // the Krylov space grows from this block alone
        for (std::size_t it = 0; it < cfg.polish_iters && x.cols() < d; ++it) {
            block = gram_apply(w_frozen, block);
            for (std::size_t c = 0; c < block.cols(); ++c) {
                double nrm = 0.0;
                for (std::size_t r = 0; r < d; ++r) nrm += block(r, c) * block(r, c);
                nrm = std::sqrt(nrm);
                if (nrm > 0.0)
                    for (std::size_t r = 0; r < d; ++r) block(r, c) /= nrm;
            }
            Matrix joined(d, x.cols() + block.cols());
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t c = 0; c < x.cols(); ++c) joined(r, c) = x(r, c);
                for (std::size_t c = 0; c < block.cols(); ++c) joined(r, x.cols() + c) = block(r, c);
            }
            const std::size_t before = x.cols();
            x = orthonormal_range(joined);
            if (x.cols() == before) break;
            std::vector<std::size_t> fresh(x.cols() - before);
            std::iota(fresh.begin(), fresh.end(), before);
            block = select_cols(x, fresh);
        }
    }
    const std::size_t span = x.cols();
    const Matrix y = matmul(w_frozen, x);
    auto small = sym_eig(matmul_tn(y, y));
    for (double& v : small.values) v = std::max(v, 0.0);

    // Energy profile: candidate-restricted spectrum for the bottom, the
    // probe trace for the total.
    const double cand_sum = std::accumulate(small.values.begin(), small.values.end(), 0.0);
    std::vector<double> profile = small.values;
    if (d > span) {
        const double rest = std::max(trace_est - cand_sum, 0.0) / static_cast<double>(d - span);
        profile.insert(profile.end(), d - span, std::max(rest, small.values.empty() ? 0.0 : small.values.back()));
    }
    const std::size_t k = choose_k(profile, tau, k_max);
    if (k > span)
        throw ContractError("srht_low_energy_basis: candidate_count (" + std::to_string(span) +
                            ") is smaller than the resulting k (" + std::to_string(k) + ")");

    InputBasis out;
    out.tau = tau;
    out.k_max = k_max;
    out.k = k;
    out.randomized = true;
    out.q = matmul(x, first_cols(small.vectors, k));
    out.q = qr_orthonormalize(out.q);
    const double low = std::accumulate(small.values.begin(), small.values.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
    out.energy_captured = trace_est > 0.0 ? clamp_fraction((trace_est - low) / trace_est) : 1.0;
    if (!out.q.all_finite()) throw NumericalError("srht_low_energy_basis: non-finite basis");
    return out;
}

InputBasis low_energy_basis(const Matrix& w_frozen, double tau, std::size_t k_max, BasisPath path,
                            const SrhtConfig& cfg) {
    const bool use_srht =
        path == BasisPath::Srht || (path == BasisPath::Auto && w_frozen.cols() > kDenseBasisMaxDim);
    return use_srht ? srht_low_energy_basis(w_frozen, tau, k_max, cfg)
                    : dense_low_energy_basis(w_frozen, tau, k_max);
}

}  // namespace plate
