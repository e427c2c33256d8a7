#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plate/dataset.hpp"
#include "plate/model.hpp"
#include "plate/subspace.hpp"

namespace plate {

/// Old-task loss landscape: a model (holding theta0), the head it is read
/// through, the old-task data and the loss.
struct OldTask {
    const Mlp* model;
    std::string head;
    const Dataset* data;
    LossKind loss;
};

/// L0(theta1) - L0(theta0) for flat parameter vectors of `task.model`.
double forgetting(const OldTask& task, std::span<const double> theta0, std::span<const double> theta1);

/// Mean old-task loss at theta0 + step.
double loss_at(const OldTask& task, std::span<const double> theta0, std::span<const double> step, double scale);

enum class JacobianMode { Exact, FiniteDifference };

struct DriftOptions {
    int max_iters = 60;
    double tol = 1e-9;
    JacobianMode mode = JacobianMode::Exact;
    std::size_t bootstrap = 0;  // resamples for the standard error; 0 disables
    std::uint64_t seed = 0;
};

struct DriftReport {
    double epsilon = 0.0;
    int iterations = 0;
    bool converged = false;
    std::size_t samples_used = 0;
    double bootstrap_se = 0.0;
    std::vector<double> top_direction;
};

/// epsilon(S)^2 = top eigenvalue of P J^T J P / n over the old-task inputs.
DriftReport drift_radius(const OldTask& task, const UpdateSubspace& s, const DriftOptions& opts = {});

enum class HvpMode { FiniteDifference, GaussNewton };

std::string to_string(HvpMode m);

struct CurvatureOptions {
    int max_iters = 60;
    double tol = 1e-7;
    HvpMode mode = HvpMode::FiniteDifference;
    std::uint64_t seed = 0;
};

struct CurvatureReport {
    double lambda_s = 0.0;
    std::vector<double> top_direction;
    HvpMode hvp_mode = HvpMode::FiniteDifference;
    int iterations = 0;
    bool converged = false;
};

/// Finite-difference step used for Hessian-vector products at theta.
double hvp_step(std::span<const double> theta);

/// H v by central differences of the analytic loss gradient.
std::vector<double> hvp_finite_difference(const OldTask& task, std::span<const double> v);
/// J^T H_out J v.
std::vector<double> hvp_gauss_newton(const OldTask& task, std::span<const double> v);

/// lambda(S) = top eigenpair of P H P.
CurvatureReport restricted_curvature(const OldTask& task, const UpdateSubspace& s, const CurvatureOptions& opts = {});

/// Output-space curvature constant: 2 for mse, 1 for softmax cross-entropy.
double loss_beta(LossKind loss);

struct BoundCheck {
    double lambda_s = 0.0;
    double epsilon_sq = 0.0;
    double beta = 0.0;
    double beta_eps_sq = 0.0;
    double residual = 0.0;  // |v^T (H - H_GN) v| at the top direction
    double slack = 0.0;
    bool holds = false;
};

/// lambda(S) <= beta eps^2 + slack with slack = 5% of beta eps^2 plus the
/// residual curvature estimate.
BoundCheck bound_check_gn(const OldTask& task, const UpdateSubspace& s, const CurvatureOptions& curv = {},
                          const DriftOptions& drift = {});

struct SweepPoint {
    double rho = 0.0;
    double forgetting = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    double quadratic = 0.0;  // a in F = b rho + a rho^2
    double linear = 0.0;     // b
};

/// F0(theta0, theta0 + rho v) for each rho, with a least-squares fit.
SweepResult worst_direction_sweep(const OldTask& task, std::span<const double> v, const std::vector<double>& rhos);

/// Least-squares fit of F = b rho + a rho^2 (no intercept); returns {a, b}.
std::pair<double, double> fit_quadratic(const std::vector<SweepPoint>& pts);

struct RandomForgetting {
    double max_forgetting = 0.0;
    double mean_forgetting = 0.0;
    std::size_t directions = 0;
};

/// Forgetting at theta0 + rho u over `count` random unit directions u of S.
RandomForgetting random_direction_forgetting(const OldTask& task, const UpdateSubspace& s, double rho,
                                             std::size_t count, std::uint64_t seed);

/// Delta(x) = |J_x(theta1, x) - J_x(theta0, x)|_F per row of `points`,
/// input Jacobians by central differences (step 1e-4).
std::vector<double> jacobian_drift_field(const Mlp& model0, const Mlp& model1, const std::string& head,
                                         const Matrix& points);

/// steps x steps grid over [xmin, xmax] x [ymin, ymax], row-major in y then x.
Matrix grid_points(double xmin, double xmax, double ymin, double ymax, std::size_t steps);

/// Random update whose every weight change annihilates the layer inputs of
/// `x` (rows of Delta W_l lie in the nullspace of the stacked inputs);
/// biases and heads are left unchanged. Flat vector in param_layout order.
std::vector<double> nullspace_update(const Mlp& model, const Matrix& x, double scale, SeededRng& rng);

/// Orthonormal basis of that same per-layer nullspace family.
UpdateSubspace nullspace_subspace(const Mlp& model, const Matrix& x);

}  // namespace plate
