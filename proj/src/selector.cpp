#include "plate/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plate/error.hpp"
#include "plate/numerics/linalg.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

namespace {

constexpr double kDeadRowNorm = 1e-12;

std::vector<std::size_t> sample_anchors(std::size_t d_out, std::size_t count, SeededRng& rng) {
    std::vector<std::size_t> pool(d_out);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    if (count >= d_out) return pool;
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + rng.below(d_out - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

NeuronScores score_neurons(const Matrix& w, const ScoringConfig& cfg) {
    const std::size_t d_out = w.rows();
    const std::size_t d_in = w.cols();
    PLATE_REQUIRE(d_out >= 1 && d_in >= 1, "score_neurons: weight matrix is empty");
    PLATE_REQUIRE(w.all_finite(), "score_neurons: non-finite weight");
    const std::size_t dim = cfg.projection_dim == 0 ? std::min<std::size_t>(256, d_in) : cfg.projection_dim;
    if (!cfg.exact_mode)
        PLATE_REQUIRE(dim <= d_in, "score_neurons: projection_dim " + std::to_string(dim) +
                                       " exceeds d_in " + std::to_string(d_in));
    const std::size_t anchor_count =
        cfg.anchor_count == 0 ? std::min<std::size_t>(64, d_out) : std::min(cfg.anchor_count, d_out);
    PLATE_REQUIRE(anchor_count >= 1, "score_neurons: anchor_count must be positive");

    SeededRng root(cfg.seed);
    SeededRng anchor_rng = root.split("anchors");
    SeededRng projection_rng = root.split("projection");

    std::vector<bool> dead(d_out, false);
    Matrix z;
    if (cfg.exact_mode) {
        z = w;
    } else {
        // Entries N(0, 1/d') so inner products estimate cosines.
        Matrix proj = gaussian_matrix(d_in, dim, projection_rng);
        const double s = 1.0 / std::sqrt(static_cast<double>(dim));
        for (double& v : proj.values()) v *= s;
        z = matmul(w, proj);
    }
    for (std::size_t i = 0; i < d_out; ++i) {
        if (norm2(w.row(i)) < kDeadRowNorm) {
            dead[i] = true;
            std::fill(z.row(i).begin(), z.row(i).end(), 0.0);
            continue;
        }
        auto zi = z.row(i);
        const double n = norm2(zi);
        if (n == 0.0) {
            dead[i] = true;
            continue;
        }
        for (double& v : zi) v /= n;
    }

    NeuronScores out;
    out.anchors = sample_anchors(d_out, anchor_count, anchor_rng);
    const Matrix anchor_rows = select_rows(z, out.anchors);
    const Matrix sims = matmul_nt(z, anchor_rows);  // d_out x |A|
    out.scores.assign(d_out, 0.0);
    for (std::size_t i = 0; i < d_out; ++i) {
        if (dead[i]) continue;
        double sum = 0.0;
        std::size_t terms = 0;
        for (std::size_t a = 0; a < out.anchors.size(); ++a) {
            if (cfg.exclude_self && out.anchors[a] == i) continue;
            sum += std::abs(sims(i, a));
            ++terms;
        }
        out.scores[i] = terms == 0 ? 0.0 : std::min(1.0, sum / static_cast<double>(terms));
    }
    return out;
}

SelectorB select_redundant(const Matrix& w, std::size_t r, const ScoringConfig& cfg) {
    PLATE_REQUIRE(r >= 1 && r <= w.rows(), "select_redundant: r=" + std::to_string(r) +
                                               " must lie in [1, d_out=" + std::to_string(w.rows()) + "]");
    auto scored = score_neurons(w, cfg);
    std::vector<std::size_t> order(w.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scored.scores[a] > scored.scores[b];
    });
    SelectorB sel;
    sel.d_out = w.rows();
    sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(r));
    std::sort(sel.indices.begin(), sel.indices.end());
    sel.scores = std::move(scored.scores);
    sel.anchors = std::move(scored.anchors);
    return sel;
}

Matrix frozen_rows(const Matrix& w, const SelectorB& sel) {
    PLATE_REQUIRE(sel.d_out == w.rows(), "frozen_rows: selector does not match weight rows");
    std::vector<std::size_t> keep;
    keep.reserve(w.rows() - sel.indices.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        if (next < sel.indices.size() && sel.indices[next] == i) {
            ++next;
            continue;
        }
        keep.push_back(i);
    }
    return select_rows(w, keep);
}

}  // namespace plate
