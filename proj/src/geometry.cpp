#include "plate/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "plate/error.hpp"
#include "plate/numerics/lanczos.hpp"
#include "plate/numerics/linalg.hpp"

namespace plate {

namespace {

void check_task(const OldTask& task) {
    PLATE_REQUIRE(task.model != nullptr && task.data != nullptr, "old task: missing model or data");
    PLATE_REQUIRE(task.data->size() >= 1, "old task: empty dataset");
}

double mean_loss(const Mlp& model, const OldTask& task) {
    return evaluate(model, {}, task.head, *task.data, task.loss).loss;
}

std::vector<double> shifted(std::span<const double> theta, std::span<const double> step, double scale) {
    PLATE_REQUIRE(theta.size() == step.size(), "parameter step length mismatch");
    std::vector<double> out(theta.begin(), theta.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * step[i];
    return out;
}

Matrix jvp_fd(const Mlp& model, const std::string& head, const Matrix& x, std::span<const double> theta,
              std::span<const double> t) {
    const double h = hvp_step(theta);
    const Matrix plus = forward(with_params(model, shifted(theta, t, h)), {}, head, x);
    const Matrix minus = forward(with_params(model, shifted(theta, t, -h)), {}, head, x);
    return (1.0 / (2.0 * h)) * (plus - minus);
}

// epsilon^2 by Lanczos on P J^T J P / n for one data matrix.
TopEigenpair drift_eig(const OldTask& task, const Matrix& x, const UpdateSubspace& s, const DriftOptions& opts,
                       SeededRng& rng) {
    const Mlp& model = *task.model;
    const std::vector<double> theta = params_to_vector(model).values;
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    SymmetricOperator op = [&](std::span<const double> in, std::span<double> out) {
        const auto t = s.project(in);
        const Matrix jt = opts.mode == JacobianMode::Exact ? jvp(model, task.head, x, t)
                                                           : jvp_fd(model, task.head, x, theta, t);
        auto g = vjp(model, task.head, x, jt);
        for (double& v : g) v *= inv_n;
        s.project(g, out);
    };
    return lanczos_top(op, s.random_unit(rng), opts.max_iters, opts.tol);
}

}  // namespace

double forgetting(const OldTask& task, std::span<const double> theta0, std::span<const double> theta1) {
    check_task(task);
    if (std::equal(theta0.begin(), theta0.end(), theta1.begin(), theta1.end())) return 0.0;
    return mean_loss(with_params(*task.model, theta1), task) - mean_loss(with_params(*task.model, theta0), task);
}

double loss_at(const OldTask& task, std::span<const double> theta0, std::span<const double> step, double scale) {
    check_task(task);
    return mean_loss(with_params(*task.model, shifted(theta0, step, scale)), task);
}

DriftReport drift_radius(const OldTask& task, const UpdateSubspace& s, const DriftOptions& opts) {
    check_task(task);
    PLATE_REQUIRE(s.dimension() >= 1, "drift_radius: empty subspace");
    PLATE_REQUIRE(s.ambient() == param_layout(*task.model).total, "drift_radius: subspace does not match the model");
    SeededRng rng(derive_seed(opts.seed, "drift"));
    const TopEigenpair top = drift_eig(task, task.data->inputs, s, opts, rng);
    DriftReport rep;
    rep.epsilon = std::sqrt(std::max(top.value, 0.0));
    rep.iterations = top.iterations;
    rep.converged = top.converged;
    rep.samples_used = task.data->size();
    rep.top_direction = top.vector;
    if (opts.bootstrap > 1) {
        SeededRng boot = rng.split("bootstrap");
        const std::size_t n = task.data->size();
        std::vector<double> eps;
        for (std::size_t b = 0; b < opts.bootstrap; ++b) {
            std::vector<std::size_t> idx(n);
            for (auto& i : idx) i = boot.below(n);
            const Matrix xb = select_rows(task.data->inputs, idx);
            eps.push_back(std::sqrt(std::max(drift_eig(task, xb, s, opts, boot).value, 0.0)));
        }
        const double mean = std::accumulate(eps.begin(), eps.end(), 0.0) / static_cast<double>(eps.size());
        double var = 0.0;
        for (double e : eps) var += (e - mean) * (e - mean);
        rep.bootstrap_se = std::sqrt(var / static_cast<double>(eps.size() - 1));
    }
    return rep;
}

std::string to_string(HvpMode m) { return m == HvpMode::FiniteDifference ? "finite_difference" : "gauss_newton"; }

double hvp_step(std::span<const double> theta) {
    double m = 0.0;
    for (double v : theta) m = std::max(m, std::abs(v));
    return 1e-4 * (1.0 + m);
}

std::vector<double> hvp_finite_difference(const OldTask& task, std::span<const double> v) {
    check_task(task);
    const std::vector<double> theta = params_to_vector(*task.model).values;
    const double h = hvp_step(theta);
    std::vector<double> gp, gm;
    loss_gradient(with_params(*task.model, shifted(theta, v, h)), task.head, *task.data, task.loss, gp);
    loss_gradient(with_params(*task.model, shifted(theta, v, -h)), task.head, *task.data, task.loss, gm);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] = (gp[i] - gm[i]) / (2.0 * h);
    return gp;
}

std::vector<double> hvp_gauss_newton(const OldTask& task, std::span<const double> v) {
    check_task(task);
    const Matrix& x = task.data->inputs;
    const Matrix out = forward(*task.model, {}, task.head, x);
    const Matrix jv = jvp(*task.model, task.head, x, v);
    return vjp(*task.model, task.head, x, loss_output_hvp(out, task.loss, jv));
}

CurvatureReport restricted_curvature(const OldTask& task, const UpdateSubspace& s, const CurvatureOptions& opts) {
    check_task(task);
    PLATE_REQUIRE(s.dimension() >= 1, "restricted_curvature: empty subspace");
    PLATE_REQUIRE(s.ambient() == param_layout(*task.model).total,
                  "restricted_curvature: subspace does not match the model");
    SymmetricOperator op = [&](std::span<const double> in, std::span<double> out) {
        const auto t = s.project(in);
        const auto hv = opts.mode == HvpMode::FiniteDifference ? hvp_finite_difference(task, t)
                                                               : hvp_gauss_newton(task, t);
        s.project(hv, out);
    };
    SeededRng rng(derive_seed(opts.seed, "curvature"));
    const TopEigenpair top = lanczos_top(op, s.random_unit(rng), opts.max_iters, opts.tol);
    CurvatureReport rep;
    rep.lambda_s = top.value;
    rep.top_direction = s.project(top.vector);
    const double n = norm2(rep.top_direction);
    if (n > 0.0)
        for (double& x : rep.top_direction) x /= n;
    rep.hvp_mode = opts.mode;
    rep.iterations = top.iterations;
    rep.converged = top.converged;
    return rep;
}

double loss_beta(LossKind loss) { return loss == LossKind::Mse ? 2.0 : 1.0; }

BoundCheck bound_check_gn(const OldTask& task, const UpdateSubspace& s, const CurvatureOptions& curv,
                          const DriftOptions& drift) {
    const CurvatureReport c = restricted_curvature(task, s, curv);
    const DriftReport d = drift_radius(task, s, drift);
    BoundCheck b;
    b.lambda_s = c.lambda_s;
    b.epsilon_sq = d.epsilon * d.epsilon;
    b.beta = loss_beta(task.loss);
    b.beta_eps_sq = b.beta * b.epsilon_sq;
    const auto& v = c.top_direction;
    const double full = dot(v, hvp_finite_difference(task, v));
    const double gn = dot(v, hvp_gauss_newton(task, v));
    b.residual = std::abs(full - gn);
    b.slack = 0.05 * b.beta_eps_sq + b.residual;
    b.holds = b.lambda_s <= b.beta_eps_sq + b.slack;
    return b;
}

std::pair<double, double> fit_quadratic(const std::vector<SweepPoint>& pts) {
    double s2 = 0, s3 = 0, s4 = 0, f1 = 0, f2 = 0;
    std::size_t nonzero = 0;
    for (const auto& p : pts) {
        const double r = p.rho;
        if (r != 0.0) ++nonzero;
        s2 += r * r;
        s3 += r * r * r;
        s4 += r * r * r * r;
        f1 += p.forgetting * r;
        f2 += p.forgetting * r * r;
    }
    PLATE_REQUIRE(nonzero >= 1, "fit_quadratic: need at least one nonzero rho");
    const double det = s2 * s4 - s3 * s3;
    if (nonzero < 2 || std::abs(det) <= 1e-12 * s2 * s4) return {f2 / s4, 0.0};
    const double b = (f1 * s4 - s3 * f2) / det;
    const double a = (s2 * f2 - s3 * f1) / det;
    return {a, b};
}

SweepResult worst_direction_sweep(const OldTask& task, std::span<const double> v, const std::vector<double>& rhos) {
    check_task(task);
    PLATE_REQUIRE(!rhos.empty(), "worst_direction_sweep: empty rho list");
    const std::vector<double> theta = params_to_vector(*task.model).values;
    PLATE_REQUIRE(v.size() == theta.size(), "worst_direction_sweep: direction length mismatch");
    const double base = mean_loss(*task.model, task);
    SweepResult res;
    for (double rho : rhos)
        res.points.push_back({rho, rho == 0.0 ? 0.0 : loss_at(task, theta, v, rho) - base});
    bool any = false;
    for (double r : rhos) any = any || r != 0.0;
    if (any) std::tie(res.quadratic, res.linear) = fit_quadratic(res.points);
    return res;
}

RandomForgetting random_direction_forgetting(const OldTask& task, const UpdateSubspace& s, double rho,
                                             std::size_t count, std::uint64_t seed) {
    check_task(task);
    PLATE_REQUIRE(count >= 1, "random_direction_forgetting: need at least one direction");
    const std::vector<double> theta = params_to_vector(*task.model).values;
    const double base = mean_loss(*task.model, task);
    SeededRng rng(derive_seed(seed, "random-directions"));
    RandomForgetting out;
    out.max_forgetting = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto u = s.random_unit(rng);
        const double f = loss_at(task, theta, u, rho) - base;
        out.max_forgetting = std::max(out.max_forgetting, f);
        sum += f;
    }
    out.mean_forgetting = sum / static_cast<double>(count);
    out.directions = count;
    return out;
}

std::vector<double> jacobian_drift_field(const Mlp& model0, const Mlp& model1, const std::string& head,
                                         const Matrix& points) {
    PLATE_REQUIRE(points.cols() == model0.input_dim() && points.cols() == model1.input_dim(),
                  "jacobian_drift_field: point width does not match the models");
    PLATE_REQUIRE(model0.head(head).weight.rows() == model1.head(head).weight.rows(),
                  "jacobian_drift_field: head widths differ");
    constexpr double h = 1e-4;
    std::vector<double> acc(points.rows(), 0.0);
    for (std::size_t j = 0; j < points.cols(); ++j) {
        Matrix plus = points;
        Matrix minus = points;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            plus(i, j) += h;
            minus(i, j) -= h;
        }
        const Matrix d0 = forward(model0, {}, head, plus) - forward(model0, {}, head, minus);
        const Matrix d1 = forward(model1, {}, head, plus) - forward(model1, {}, head, minus);
        for (std::size_t i = 0; i < points.rows(); ++i)
            for (std::size_t o = 0; o < d0.cols(); ++o) {
                const double diff = (d1(i, o) - d0(i, o)) / (2.0 * h);
                acc[i] += diff * diff;
            }
    }
    for (double& v : acc) v = std::sqrt(v);
    return acc;
}

Matrix grid_points(double xmin, double xmax, double ymin, double ymax, std::size_t steps) {
    PLATE_REQUIRE(steps >= 1, "grid_points: steps must be positive");
    PLATE_REQUIRE(std::isfinite(xmin) && std::isfinite(xmax) && std::isfinite(ymin) && std::isfinite(ymax),
                  "grid_points: bounds must be finite");
    Matrix out(steps * steps, 2);
    auto at = [&](double lo, double hi, std::size_t i) {
        return steps == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    };
    for (std::size_t iy = 0; iy < steps; ++iy)
        for (std::size_t ix = 0; ix < steps; ++ix) {
            out(iy * steps + ix, 0) = at(xmin, xmax, ix);
            out(iy * steps + ix, 1) = at(ymin, ymax, iy);
        }
    return out;
}

namespace {

std::vector<Matrix> layer_nullspaces(const Mlp& model, const Matrix& x) {
    ForwardCache cache;
    forward(model, {}, model.heads.begin()->first, x, &cache);
    std::vector<Matrix> out;
    for (const auto& h : cache.inputs) out.push_back(complement_basis(orthonormal_range(transpose(h), 1e-12)));
    return out;
}

}  // namespace

std::vector<double> nullspace_update(const Mlp& model, const Matrix& x, double scale, SeededRng& rng) {
    PLATE_REQUIRE(!model.heads.empty(), "nullspace_update: model has no head");
    const auto nulls = layer_nullspaces(model, x);
    const ParamLayout layout = param_layout(model);
    std::vector<double> delta(layout.total, 0.0);
    for (std::size_t l = 0; l < nulls.size(); ++l) {
        if (nulls[l].cols() == 0) continue;
        const Segment& seg = layout.find("layer" + std::to_string(l) + ".weight");
        const Matrix dw = matmul_nt(gaussian_matrix(seg.rows, nulls[l].cols(), rng), nulls[l]);
        std::copy(dw.values().begin(), dw.values().end(), delta.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    }
    const double n = norm2(delta);
    PLATE_REQUIRE(n > 0.0, "nullspace_update: stacked layer inputs leave no nullspace");
    for (double& v : delta) v *= scale / n;
    return delta;
}

UpdateSubspace nullspace_subspace(const Mlp& model, const Matrix& x) {
    PLATE_REQUIRE(!model.heads.empty(), "nullspace_subspace: model has no head");
    return UpdateSubspace::weight_rows_in_span(param_layout(model), layer_nullspaces(model, x));
}

}  // namespace plate
