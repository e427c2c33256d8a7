#include "plate/numerics/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "plate/error.hpp"

namespace plate {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
    return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}

MutMap view(Matrix& m) {
    return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    PLATE_REQUIRE(data_.size() == rows * cols, "matrix data length does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        PLATE_REQUIRE(r.size() == cols_, "ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    PLATE_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(),
                  "shape mismatch in add: " + shape(a) + " vs " + shape(b));
    Matrix out = a;
    axpy(1.0, b, out);
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    PLATE_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(),
                  "shape mismatch in subtract: " + shape(a) + " vs " + shape(b));
    Matrix out = a;
    axpy(-1.0, b, out);
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    PLATE_REQUIRE(a.cols() == b.rows(), "shape mismatch in matmul: " + shape(a) + " * " + shape(b));
    Matrix out(a.rows(), b.cols());
    if (out.empty() || a.cols() == 0) return out;
    view(out).noalias() = view(a) * view(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    PLATE_REQUIRE(a.cols() == b.cols(),
                  "shape mismatch in matmul_nt: " + shape(a) + " * " + shape(b) + "^T");
    Matrix out(a.rows(), b.rows());
    if (out.empty() || a.cols() == 0) return out;
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    PLATE_REQUIRE(a.rows() == b.rows(),
                  "shape mismatch in matmul_tn: " + shape(a) + "^T * " + shape(b));
    Matrix out(a.cols(), b.cols());
    if (out.empty() || a.rows() == 0) return out;
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

void axpy(double s, const Matrix& a, Matrix& out) {
    PLATE_REQUIRE(a.rows() == out.rows() && a.cols() == out.cols(),
                  "shape mismatch in axpy: " + shape(a) + " vs " + shape(out));
    const double* src = a.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] += s * src[i];
}

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

std::vector<double> column(const Matrix& a, std::size_t c) {
    PLATE_REQUIRE(c < a.cols(), "column index out of range");
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a(i, c);
    return out;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        PLATE_REQUIRE(rows[i] < a.rows(), "row index out of range");
        std::copy_n(a.row(rows[i]).data(), a.cols(), out.row(i).data());
    }
    return out;
}

Matrix select_cols(const Matrix& a, std::span<const std::size_t> cols) {
    Matrix out(a.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) PLATE_REQUIRE(cols[j] < a.cols(), "column index out of range");
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = a(i, cols[j]);
    return out;
}

Matrix first_cols(const Matrix& a, std::size_t count) {
    PLATE_REQUIRE(count <= a.cols(), "first_cols: count exceeds column count");
    Matrix out(a.rows(), count);
    for (std::size_t i = 0; i < a.rows(); ++i)
        std::copy_n(a.row(i).data(), count, out.row(i).data());
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    PLATE_REQUIRE(a.size() == b.size(), "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace plate
