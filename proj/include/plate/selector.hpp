#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "plate/numerics/matrix.hpp"

namespace plate {

/// Settings for redundancy scoring of output neurons.
struct ScoringConfig {
    std::size_t projection_dim = 0;  // d'; 0 picks min(256, d_in)
    std::size_t anchor_count = 0;    // 0 picks min(64, d_out)
    std::uint64_t seed = 0;
    bool exact_mode = false;   // score with the full normalized rows, no projection
    bool exclude_self = true;  // drop the j == i anchor term
};

/// Output-row selector B, kept as an index set.
struct SelectorB {
    std::size_t d_out = 0;
    std::vector<std::size_t> indices;  // strictly increasing
    std::vector<double> scores;        // one per row
    std::vector<std::size_t> anchors;

    std::size_t r() const noexcept { return indices.size(); }
};

struct NeuronScores {
    std::vector<double> scores;
    std::vector<std::size_t> anchors;
};

/// Mean absolute cosine similarity of every row to an anchor set, measured
/// on unit-normalized (optionally Gaussian-projected) rows.
NeuronScores score_neurons(const Matrix& w, const ScoringConfig& cfg);

/// The r highest-scoring rows (ties go to the lower index).
SelectorB select_redundant(const Matrix& w, std::size_t r, const ScoringConfig& cfg);

/// Rows not in the selector, in original order.
Matrix frozen_rows(const Matrix& w, const SelectorB& sel);

}  // namespace plate
