#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plate/model.hpp"
#include "plate/numerics/matrix.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

enum class SubspaceKind { Full, Plate, LoraTangent, Custom };

std::string to_string(SubspaceKind k);

/// Explicit columns are refused above this count.
inline constexpr std::size_t kMaxExplicitColumns = 20000;

/// Linear update family S inside the flat parameter space of a model,
/// represented by its orthogonal projector.
class UpdateSubspace {
public:
    /// Every backbone weight and bias.
    static UpdateSubspace full(const ParamLayout& layout);
    /// span{vec(e_i q_j^T)} for every PLATE layer.
    static UpdateSubspace plate(const ParamLayout& layout, const LayerAdapters& adapters);
    /// {B0 dA + dB A0} at the adapters' current (A0, B0) for every LoRA layer.
    static UpdateSubspace lora_tangent(const ParamLayout& layout, const LayerAdapters& adapters);
    /// Span of the given columns (ambient x m), orthonormalized.
    static UpdateSubspace from_columns(const ParamLayout& layout, const Matrix& columns);
    /// Every row of layer l's weight restricted to span(q[l]); layers whose
    /// q has no columns are left out.
    static UpdateSubspace weight_rows_in_span(const ParamLayout& layout, const std::vector<Matrix>& q);
    /// Random `dim`-dimensional subspace of the backbone weights.
    static UpdateSubspace random_backbone(const ParamLayout& layout, std::size_t dim, SeededRng& rng);

    SubspaceKind kind() const noexcept { return kind_; }
    std::size_t ambient() const noexcept { return ambient_; }
    std::size_t dimension() const noexcept { return dimension_; }

    /// out = P in; in and out may alias.
    void project(std::span<const double> in, std::span<double> out) const;
    std::vector<double> project(std::span<const double> in) const;

    /// Uniformly random unit vector of S (P g / |P g| for Gaussian g).
    std::vector<double> random_unit(SeededRng& rng) const;

    /// Orthonormal columns (ambient x dimension). ResourceError above
    /// kMaxExplicitColumns.
    Matrix columns() const;

private:
    struct RowScatter {  // rows `rows` of a weight segment, restricted to span(q)
        Segment seg;
        std::vector<std::size_t> rows;
        Matrix q;
    };
    struct LowRank {  // P_U D + (I - P_U) D P_V on a weight segment
        Segment seg;
        Matrix u;
        Matrix v;
    };

    SubspaceKind kind_ = SubspaceKind::Custom;
    std::size_t ambient_ = 0;
    std::size_t dimension_ = 0;
    std::vector<Segment> full_segments_;
    std::vector<RowScatter> scatter_;
    std::vector<LowRank> low_rank_;
    Matrix columns_;  // Custom only
};

}  // namespace plate
