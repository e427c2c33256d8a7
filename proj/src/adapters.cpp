#include "plate/adapters.hpp"

#include <cmath>
#include <string>

#include "plate/error.hpp"
#include "plate/numerics/linalg.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix gather_cols(const Matrix& m, const std::vector<std::size_t>& cols) { return select_cols(m, cols); }

void check_plate(const PlateAdapter& p) {
    PLATE_REQUIRE(p.a.rows() == p.selector.r() && p.a.cols() == p.basis.q.cols(),
                  "plate adapter: A must be r x k");
}

}  // namespace

PlateAdapter plate_init(const Matrix& w, const PlateOptions& opts) {
    PLATE_REQUIRE(w.rows() >= 1 && w.cols() >= 1, "plate_init: empty weight");
    PLATE_REQUIRE(opts.r >= 1, "plate_init: r must be at least 1");
    PLATE_REQUIRE(opts.r < w.rows(), "plate_init: selector leaves no frozen rows (r=" +
                                         std::to_string(opts.r) + ", d_out=" + std::to_string(w.rows()) + ")");
    PLATE_REQUIRE(opts.tau > 0.0 && opts.tau < 1.0, "plate_init: tau must lie in (0, 1)");
    PLATE_REQUIRE(std::isfinite(opts.rho), "plate_init: rho must be finite");
    const std::size_t k_max = opts.k_max == 0 ? default_k_max(w.cols()) : opts.k_max;
    PLATE_REQUIRE(k_max <= w.cols(), "plate_init: k_max exceeds d_in");

    ScoringConfig scoring = opts.scoring;
    scoring.seed = derive_seed(opts.seed, "selector");
    SrhtConfig srht = opts.srht;
    srht.seed = derive_seed(opts.seed, "basis");

    PlateAdapter p;
    p.selector = select_redundant(w, opts.r, scoring);
    p.basis = low_energy_basis(frozen_rows(w, p.selector), opts.tau, k_max, opts.path, srht);
    p.a = Matrix(opts.r, p.basis.k, 0.0);
    p.rho = opts.rho;
    p.seed = opts.seed;
    return p;
}

PlateAdapter plate_init(const Matrix& w, std::size_t r, double tau, std::size_t k_max, double rho,
                        std::uint64_t seed) {
    PlateOptions opts;
    opts.r = r;
    opts.tau = tau;
    opts.k_max = k_max;
    opts.rho = rho;
    opts.seed = seed;
    return plate_init(w, opts);
}

LoraAdapter lora_init(std::size_t d_out, std::size_t d_in, std::size_t r, double scale,
                      std::uint64_t seed) {
    PLATE_REQUIRE(r >= 1 && d_out >= 1 && d_in >= 1, "lora_init: dimensions must be positive");
    SeededRng rng(derive_seed(seed, "lora"));
    LoraAdapter l;
    l.a = gaussian_matrix(r, d_in, rng);
    const double s = 1.0 / std::sqrt(static_cast<double>(r));
    for (double& v : l.a.values()) v *= s;
    l.b = Matrix(d_out, r, 0.0);
    l.scale = scale;
    return l;
}

Matrix adapter_delta(const AdapterKind& adapter, std::size_t d_out, std::size_t d_in) {
    return std::visit(
        overloaded{
            [&](const FullFineTune&) { return Matrix(d_out, d_in); },
            [&](const Frozen&) { return Matrix(d_out, d_in); },
            [&](const LoraAdapter& l) {
                PLATE_REQUIRE(l.b.rows() == d_out && l.a.cols() == d_in && l.b.cols() == l.a.rows(),
                              "adapter_delta: LoRA shape mismatch");
                return l.scale * matmul(l.b, l.a);
            },
            [&](const PlateAdapter& p) {
                check_plate(p);
                PLATE_REQUIRE(p.d_out() == d_out && p.d_in() == d_in, "adapter_delta: PLATE shape mismatch");
                const Matrix aq = matmul_nt(p.a, p.basis.q);  // r x d_in
                Matrix out(d_out, d_in);
                for (std::size_t s = 0; s < p.selector.r(); ++s) {
                    auto dst = out.row(p.selector.indices[s]);
                    auto src = aq.row(s);
                    for (std::size_t j = 0; j < d_in; ++j) dst[j] = p.rho * src[j];
                }
                return out;
            },
        },
        adapter);
}

Matrix effective_weight(const Matrix& w, const AdapterKind& adapter) {
    if (std::holds_alternative<FullFineTune>(adapter) || std::holds_alternative<Frozen>(adapter)) return w;
    return w + adapter_delta(adapter, w.rows(), w.cols());
}

Matrix adapter_forward(const AdapterKind& adapter, const Matrix& x, std::size_t d_out) {
    return std::visit(
        overloaded{
            [&](const FullFineTune&) { return Matrix(x.rows(), d_out); },
            [&](const Frozen&) { return Matrix(x.rows(), d_out); },
            [&](const LoraAdapter& l) {
                PLATE_REQUIRE(x.cols() == l.a.cols() && l.b.rows() == d_out, "adapter_forward: LoRA shape mismatch");
                return l.scale * matmul_nt(matmul_nt(x, l.a), l.b);
            },
            [&](const PlateAdapter& p) {
                check_plate(p);
                PLATE_REQUIRE(x.cols() == p.d_in() && d_out == p.d_out(), "adapter_forward: PLATE shape mismatch");
                const Matrix u = matmul_nt(matmul(x, p.basis.q), p.a);  // n x r
                Matrix out(x.rows(), d_out);
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t s = 0; s < p.selector.r(); ++s)
                        out(i, p.selector.indices[s]) = p.rho * u(i, s);
                return out;
            },
        },
        adapter);
}

std::vector<Matrix> adapter_grad(const AdapterKind& adapter, const Matrix& x, const Matrix& upstream) {
    PLATE_REQUIRE(x.rows() == upstream.rows(), "adapter_grad: batch size mismatch");
    return std::visit(
        overloaded{
            [&](const FullFineTune&) { return std::vector<Matrix>{matmul_tn(upstream, x)}; },
            [&](const Frozen&) { return std::vector<Matrix>{}; },
            [&](const LoraAdapter& l) {
                const Matrix t = matmul_nt(x, l.a);       // n x r
                const Matrix ub = matmul(upstream, l.b);  // n x r
                return std::vector<Matrix>{l.scale * matmul_tn(ub, x), l.scale * matmul_tn(upstream, t)};
            },
            [&](const PlateAdapter& p) {
                check_plate(p);
                const Matrix z = matmul(x, p.basis.q);  // n x k
                const Matrix ui = gather_cols(upstream, p.selector.indices);
                return std::vector<Matrix>{p.rho * matmul_tn(ui, z)};
            },
        },
        adapter);
}

Matrix adapter_input_grad(const AdapterKind& adapter, const Matrix& upstream, std::size_t d_in) {
    return std::visit(
        overloaded{
            [&](const FullFineTune&) { return Matrix(upstream.rows(), d_in); },
            [&](const Frozen&) { return Matrix(upstream.rows(), d_in); },
            [&](const LoraAdapter& l) { return l.scale * matmul(matmul(upstream, l.b), l.a); },
            [&](const PlateAdapter& p) {
                const Matrix ui = gather_cols(upstream, p.selector.indices);
                return p.rho * matmul_nt(matmul(ui, p.a), p.basis.q);
            },
        },
        adapter);
}

std::vector<std::string> adapter_tensor_names(const AdapterKind& adapter) {
    return std::visit(overloaded{
                          [](const FullFineTune&) { return std::vector<std::string>{"weight"}; },
                          [](const Frozen&) { return std::vector<std::string>{}; },
                          [](const LoraAdapter&) { return std::vector<std::string>{"lora.A", "lora.B"}; },
                          [](const PlateAdapter&) { return std::vector<std::string>{"plate.A"}; },
                      },
                      adapter);
}

std::vector<Matrix*> adapter_trainables(AdapterKind& adapter, Matrix& w) {
    return std::visit(overloaded{
                          [&](FullFineTune&) { return std::vector<Matrix*>{&w}; },
                          [](Frozen&) { return std::vector<Matrix*>{}; },
                          [](LoraAdapter& l) { return std::vector<Matrix*>{&l.a, &l.b}; },
                          [](PlateAdapter& p) { return std::vector<Matrix*>{&p.a}; },
                      },
                      adapter);
}

std::size_t trainable_param_count(const AdapterKind& adapter, std::size_t d_out, std::size_t d_in) {
    return std::visit(overloaded{
                          [&](const FullFineTune&) { return d_out * d_in; },
                          [](const Frozen&) { return std::size_t{0}; },
                          [&](const LoraAdapter& l) { return l.r() * (d_in + d_out); },
                          [](const PlateAdapter& p) { return p.a.rows() * p.a.cols(); },
                      },
                      adapter);
}

std::string adapter_kind_name(const AdapterKind& adapter) {
    return std::visit(overloaded{
                          [](const FullFineTune&) { return std::string("full"); },
                          [](const Frozen&) { return std::string("frozen"); },
                          [](const LoraAdapter&) { return std::string("lora"); },
                          [](const PlateAdapter&) { return std::string("plate"); },
                      },
                      adapter);
}

}  // namespace plate
