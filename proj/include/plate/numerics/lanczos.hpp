#pragma once

#include <functional>
#include <span>
#include <vector>

namespace plate {

/// y = A x for a symmetric operator A.
using SymmetricOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct TopEigenpair {
    double value = 0.0;
    std::vector<double> vector;  // unit norm
    int iterations = 0;
    bool converged = false;
};

/// Largest algebraic eigenpair of `op` restricted to the Krylov space of
/// `start` (Lanczos with full reorthogonalization). Stops once the top Ritz
/// value changes by at most `tol` (relative) on two consecutive steps, or the
/// Krylov space is exhausted.
TopEigenpair lanczos_top(const SymmetricOperator& op, std::vector<double> start, int max_iters,
                         double tol);

}  // namespace plate
