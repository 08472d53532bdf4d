#pragma once

// Limited-memory quasi-Newton minimization with backtracking line search.

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace rieszflow {

struct LineSearchParams {
  double armijo = 1e-4;   ///< sufficient-decrease constant c1
  double shrink = 0.5;    ///< step contraction per backtrack
  double wolfe = 0.9;     ///< curvature constant c2 of the weak Wolfe condition
  int max_backtracks = 60;
};

struct LbfgsOptions {
  int history = 8;
  int max_iterations = 500;
  double gradient_tol = 1e-8;  ///< stop once max |g_i| <= gradient_tol
  LineSearchParams line_search;
};

struct LbfgsReport {
  int iterations = 0;
  double value = 0.0;
  double gradient_norm = 0.0;  ///< max norm at the returned point
  bool converged = false;
};

/// Objective callback: writes the gradient and returns the value, or nullopt
/// when x is infeasible (treated as +infinity by the line search).
using LbfgsObjective = std::function<std::optional<double>(std::span<const double> x, std::span<double> gradient)>;

/// Optional projection applied after every accepted step; returns true when it moved x.
using LbfgsProjection = std::function<bool(std::span<double> x)>;

/// Minimizes from x (updated in place, must be feasible). The first step uses
/// the inverse-Hessian guess initial_scale * I; later steps use the usual
/// s'y / y'y scaling.
LbfgsReport minimize_lbfgs(std::vector<double>& x, const LbfgsObjective& objective, const LbfgsOptions& options,
                           double initial_scale = 1.0, const LbfgsProjection& projection = {});

/// Euclidean projection onto the nondecreasing cone x_0 <= x_1 <= ... (pool adjacent violators).
/// Returns true when any entry changed.
bool project_nondecreasing(std::span<double> x);

}  // namespace rieszflow
