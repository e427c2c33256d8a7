#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "plate/basis.hpp"
#include "plate/numerics/matrix.hpp"
#include "plate/selector.hpp"

namespace plate {

/// The layer weight and bias are trained directly.
struct FullFineTune {};

/// Nothing in the layer is trained.
struct Frozen {};

/// Delta W = scale * B_l A_l.
struct LoraAdapter {
    Matrix a;  // r x d_in
    Matrix b;  // d_out x r
    double scale = 0.5;

    std::size_t r() const noexcept { return a.rows(); }
};

/// Delta W = rho * B A Q^T with B the row selector and Q the low-energy basis.
struct PlateAdapter {
    SelectorB selector;
    InputBasis basis;
    Matrix a;  // r x k
    double rho = 0.5;
    std::uint64_t seed = 0;

    std::size_t d_in() const noexcept { return basis.q.rows(); }
    std::size_t d_out() const noexcept { return selector.d_out; }
};

using AdapterKind = std::variant<FullFineTune, Frozen, LoraAdapter, PlateAdapter>;

struct PlateOptions {
    std::size_t r = 1;
    double tau = 0.9;
    std::size_t k_max = 0;  // 0 picks default_k_max(d_in)
    double rho = 0.5;
    std::uint64_t seed = 0;
    BasisPath path = BasisPath::Auto;
    ScoringConfig scoring{};  // seed is overwritten from `seed`
    SrhtConfig srht{};        // seed is overwritten from `seed`
};

PlateAdapter plate_init(const Matrix& w, const PlateOptions& opts);
PlateAdapter plate_init(const Matrix& w, std::size_t r, double tau, std::size_t k_max, double rho,
                        std::uint64_t seed);

/// A_l ~ N(0, 1/r), B_l = 0.
LoraAdapter lora_init(std::size_t d_out, std::size_t d_in, std::size_t r, double scale,
                      std::uint64_t seed);

/// Dense Delta W of the adapter branch (zero for FullFineTune and Frozen).
Matrix adapter_delta(const AdapterKind& adapter, std::size_t d_out, std::size_t d_in);

/// W + Delta W.
Matrix effective_weight(const Matrix& w, const AdapterKind& adapter);

/// Branch output x Delta W^T (n x d_out).
Matrix adapter_forward(const AdapterKind& adapter, const Matrix& x, std::size_t d_out);

/// Gradients of the adapter's trainable tensors given the branch input x and
/// the upstream gradient on the layer output. FullFineTune yields dL/dW;
/// the order matches adapter_tensor_names.
std::vector<Matrix> adapter_grad(const AdapterKind& adapter, const Matrix& x, const Matrix& upstream);

/// Gradient reaching the layer input through the branch only (n x d_in).
Matrix adapter_input_grad(const AdapterKind& adapter, const Matrix& upstream, std::size_t d_in);

std::vector<std::string> adapter_tensor_names(const AdapterKind& adapter);

/// Mutable views of the adapter's trainable tensors; `w` is the layer weight
/// (trained in place under FullFineTune).
std::vector<Matrix*> adapter_trainables(AdapterKind& adapter, Matrix& w);

/// Trainable entries of the weight update: PLATE r*k, LoRA r*(d_in+d_out),
/// full d_in*d_out, frozen 0. Biases and heads are not counted here.
std::size_t trainable_param_count(const AdapterKind& adapter, std::size_t d_out, std::size_t d_in);

std::string adapter_kind_name(const AdapterKind& adapter);

}  // namespace plate
