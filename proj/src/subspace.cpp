#include "plate/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plate/error.hpp"
#include "plate/numerics/linalg.hpp"

namespace plate {

namespace {

bool is_backbone(const Segment& s) { return s.name.rfind("layer", 0) == 0; }

Matrix segment_matrix(std::span<const double> flat, const Segment& s) {
    return Matrix(s.rows, s.cols,
                  std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                      flat.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size())));
}

void store_segment(std::span<double> flat, const Segment& s, const Matrix& m) {
    std::copy(m.values().begin(), m.values().end(), flat.begin() + static_cast<std::ptrdiff_t>(s.offset));
}

}  // namespace

std::string to_string(SubspaceKind k) {
    switch (k) {
    case SubspaceKind::Full: return "full";
    case SubspaceKind::Plate: return "plate";
    case SubspaceKind::LoraTangent: return "lora_tangent";
    case SubspaceKind::Custom: return "custom";
    }
    return "?";
}

UpdateSubspace UpdateSubspace::full(const ParamLayout& layout) {
    UpdateSubspace s;
    s.kind_ = SubspaceKind::Full;
    s.ambient_ = layout.total;
    for (const auto& seg : layout.segments)
        if (is_backbone(seg)) {
            s.full_segments_.push_back(seg);
            s.dimension_ += seg.size();
        }
    PLATE_REQUIRE(s.dimension_ > 0, "full subspace: layout has no backbone parameters");
    return s;
}

UpdateSubspace UpdateSubspace::plate(const ParamLayout& layout, const LayerAdapters& adapters) {
    UpdateSubspace s;
    s.kind_ = SubspaceKind::Plate;
    s.ambient_ = layout.total;
    for (std::size_t l = 0; l < adapters.size(); ++l) {
        const auto* p = std::get_if<PlateAdapter>(&adapters[l]);
        if (!p) continue;
        const Segment& seg = layout.find("layer" + std::to_string(l) + ".weight");
        PLATE_REQUIRE(seg.rows == p->d_out() && seg.cols == p->d_in(),
                      "plate subspace: adapter does not match layer " + std::to_string(l));
        s.scatter_.push_back({seg, p->selector.indices, p->basis.q});
        s.dimension_ += p->selector.r() * p->basis.k;
    }
    PLATE_REQUIRE(s.dimension_ > 0, "plate subspace: no PLATE layers");
    return s;
}

UpdateSubspace UpdateSubspace::lora_tangent(const ParamLayout& layout, const LayerAdapters& adapters) {
    UpdateSubspace s;
    s.kind_ = SubspaceKind::LoraTangent;
    s.ambient_ = layout.total;
    for (std::size_t l = 0; l < adapters.size(); ++l) {
        const auto* lo = std::get_if<LoraAdapter>(&adapters[l]);
        if (!lo) continue;
        const Segment& seg = layout.find("layer" + std::to_string(l) + ".weight");
        PLATE_REQUIRE(seg.rows == lo->b.rows() && seg.cols == lo->a.cols(),
                      "lora tangent: adapter does not match layer " + std::to_string(l));
        LowRank block{seg, orthonormal_range(lo->b), orthonormal_range(transpose(lo->a))};
        const std::size_t a = block.u.cols();
        const std::size_t b = block.v.cols();
        s.dimension_ += a * seg.cols + (seg.rows - a) * b;
        s.low_rank_.push_back(std::move(block));
    }
    PLATE_REQUIRE(s.dimension_ > 0, "lora tangent: no LoRA layers");
    return s;
}

UpdateSubspace UpdateSubspace::from_columns(const ParamLayout& layout, const Matrix& columns) {
    PLATE_REQUIRE(columns.rows() == layout.total, "subspace columns do not match the parameter layout");
    UpdateSubspace s;
    s.kind_ = SubspaceKind::Custom;
    s.ambient_ = layout.total;
    s.columns_ = orthonormal_range(columns);
    s.dimension_ = s.columns_.cols();
    PLATE_REQUIRE(s.dimension_ > 0, "subspace columns span nothing");
    return s;
}

UpdateSubspace UpdateSubspace::weight_rows_in_span(const ParamLayout& layout, const std::vector<Matrix>& q) {
    UpdateSubspace s;
    s.kind_ = SubspaceKind::Custom;
    s.ambient_ = layout.total;
    for (std::size_t l = 0; l < q.size(); ++l) {
        if (q[l].cols() == 0) continue;
        const Segment& seg = layout.find("layer" + std::to_string(l) + ".weight");
        PLATE_REQUIRE(q[l].rows() == seg.cols, "row-span subspace: basis does not match layer " + std::to_string(l));
        std::vector<std::size_t> rows(seg.rows);
        for (std::size_t i = 0; i < seg.rows; ++i) rows[i] = i;
        s.scatter_.push_back({seg, std::move(rows), q[l]});
        s.dimension_ += seg.rows * q[l].cols();
    }
    PLATE_REQUIRE(s.dimension_ > 0, "row-span subspace is empty");
    return s;
}

UpdateSubspace UpdateSubspace::random_backbone(const ParamLayout& layout, std::size_t dim, SeededRng& rng) {
    PLATE_REQUIRE(dim >= 1, "random subspace: dimension must be positive");
    Matrix cols(layout.total, dim);
    for (const auto& seg : layout.segments) {
        if (!is_backbone(seg) || seg.name.find(".weight") == std::string::npos) continue;
        for (std::size_t i = 0; i < seg.size(); ++i)
            for (std::size_t j = 0; j < dim; ++j) cols(seg.offset + i, j) = rng.normal();
    }
    return from_columns(layout, cols);
}

void UpdateSubspace::project(std::span<const double> in, std::span<double> out) const {
    PLATE_REQUIRE(in.size() == ambient_ && out.size() == ambient_, "subspace projection: length mismatch");
    std::vector<double> res(ambient_, 0.0);
    for (const auto& seg : full_segments_)
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(seg.offset), seg.size(),
                    res.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    for (const auto& b : scatter_) {
        const std::size_t k = b.q.cols();
        std::vector<double> c(k);
        for (std::size_t row : b.rows) {
            const double* src = in.data() + b.seg.offset + row * b.seg.cols;
            double* dst = res.data() + b.seg.offset + row * b.seg.cols;
            std::fill(c.begin(), c.end(), 0.0);
            for (std::size_t j = 0; j < b.seg.cols; ++j) {
                auto qr = b.q.row(j);
                for (std::size_t t = 0; t < k; ++t) c[t] += src[j] * qr[t];
            }
            for (std::size_t j = 0; j < b.seg.cols; ++j) {
                auto qr = b.q.row(j);
                double acc = 0.0;
                for (std::size_t t = 0; t < k; ++t) acc += qr[t] * c[t];
                dst[j] = acc;
            }
        }
    }
    for (const auto& b : low_rank_) {
        const Matrix d = segment_matrix(in, b.seg);
        Matrix t1(d.rows(), d.cols());
        if (b.u.cols() > 0) t1 = matmul(b.u, matmul_tn(b.u, d));
        const Matrix rest = d - t1;
        Matrix t2(d.rows(), d.cols());
        if (b.v.cols() > 0) t2 = matmul_nt(matmul(rest, b.v), b.v);
        store_segment(res, b.seg, t1 + t2);
    }
    if (columns_.cols() > 0) {
        const Matrix x(ambient_, 1, std::vector<double>(in.begin(), in.end()));
        const Matrix y = matmul(columns_, matmul_tn(columns_, x));
        std::copy(y.values().begin(), y.values().end(), res.begin());
    }
    std::copy(res.begin(), res.end(), out.begin());
}

std::vector<double> UpdateSubspace::project(std::span<const double> in) const {
    std::vector<double> out(ambient_);
    project(in, out);
    return out;
}

std::vector<double> UpdateSubspace::random_unit(SeededRng& rng) const {
    std::vector<double> g(ambient_);
    for (int attempt = 0; attempt < 16; ++attempt) {
        for (double& x : g) x = rng.normal();
        project(g, g);
        const double n = norm2(g);
        if (n > 0.0) {
            for (double& x : g) x /= n;
            return g;
        }
    }
    throw NumericalError("random_unit: projection of Gaussian draws vanished");
}

Matrix UpdateSubspace::columns() const {
    if (dimension_ > kMaxExplicitColumns)
        throw ResourceError("subspace has " + std::to_string(dimension_) + " dimensions (limit " +
                            std::to_string(kMaxExplicitColumns) + "); use the implicit projector instead");
    if (columns_.cols() > 0) return columns_;
    Matrix out(ambient_, dimension_);
    std::size_t c = 0;
    for (const auto& seg : full_segments_)
        for (std::size_t i = 0; i < seg.size(); ++i) out(seg.offset + i, c++) = 1.0;
    for (const auto& b : scatter_)
        for (std::size_t row : b.rows)
            for (std::size_t t = 0; t < b.q.cols(); ++t, ++c)
                for (std::size_t j = 0; j < b.seg.cols; ++j) out(b.seg.offset + row * b.seg.cols + j, c) = b.q(j, t);
    for (const auto& b : low_rank_) {
        for (std::size_t a = 0; a < b.u.cols(); ++a)
            for (std::size_t j = 0; j < b.seg.cols; ++j, ++c)
                for (std::size_t i = 0; i < b.seg.rows; ++i) out(b.seg.offset + i * b.seg.cols + j, c) = b.u(i, a);
        const Matrix comp = complement_basis(b.u);
        for (std::size_t a = 0; a < comp.cols(); ++a)
            for (std::size_t t = 0; t < b.v.cols(); ++t, ++c)
                for (std::size_t i = 0; i < b.seg.rows; ++i)
                    for (std::size_t j = 0; j < b.seg.cols; ++j)
                        out(b.seg.offset + i * b.seg.cols + j, c) = comp(i, a) * b.v(j, t);
    }
    return out;
}

}  // namespace plate
