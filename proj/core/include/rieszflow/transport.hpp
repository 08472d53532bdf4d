#pragma once

// Quadratic-cost optimal transport on the real line.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rieszflow/grid.hpp"

namespace rieszflow {

/// Cumulative distribution at the n + 1 cell edges and its generalized inverse
/// sampled at the M equal-mass levels u_m = (m - 1/2) / M.
struct QuantileRepresentation {
  std::vector<double> cdf;
  std::vector<double> quantiles;
};

/// Quantile representation of a piecewise-constant density (linear CDF inside cells).
QuantileRepresentation quantile_representation(const DensityField& f, std::size_t levels);

/// Default number of quantile levels: 4n.
inline std::size_t default_quantile_levels(const Grid& grid) { return 4 * grid.size(); }

struct W2Result {
  double distance = 0.0;
  double distance_sq = 0.0;
  /// Monotone optimal map sampled at the quantile levels: target[m] = T(source[m]).
  std::vector<double> source;
  std::vector<double> target;
};

/// Exact 1-D W2 via monotone rearrangement; levels = 0 selects 4n.
W2Result w2_1d(const DensityField& mu, const DensityField& nu, std::size_t levels = 0);

/// W2^2 between two equal-size, sorted, equal-mass particle sets.
double w2_sq_sorted(std::span<const double> a, std::span<const double> b);

struct SinkhornOptions {
  double epsilon = 0.05;       ///< regularization, length^2
  int max_iterations = 20000;  ///< budget summed over all annealing stages
  double tolerance = 1e-9;     ///< L1 marginal violation at the final epsilon
  double anneal_factor = 0.5;  ///< geometric epsilon schedule from the squared diameter
};

/// Entropic coupling restricted to the supports of the two marginals.
struct TransportPlanEntropic {
  std::vector<std::size_t> rows;     ///< grid indices of the source support
  std::vector<std::size_t> columns;  ///< grid indices of the target support
  std::vector<double> gamma;         ///< row-major, rows.size() x columns.size()
  double epsilon = 0.0;
  double row_violation = 0.0;        ///< L1 norm of row-marginal mismatch
  double column_violation = 0.0;

  double at(std::size_t i, std::size_t j) const { return gamma[i * columns.size() + j]; }
};

struct SinkhornResult {
  double distance = 0.0;    ///< sqrt of the debiased divergence (clamped at 0)
  double divergence = 0.0;  ///< OT_eps(mu,nu) - (OT_eps(mu,mu) + OT_eps(nu,nu)) / 2
  double plan_cost = 0.0;   ///< <C, gamma> of the (mu, nu) plan
  int iterations = 0;
  TransportPlanEntropic plan;
};

/// Log-domain Sinkhorn with epsilon annealing and Sinkhorn-divergence debiasing.
/// Throws ConvergenceError (carrying the final violation) when any of the three
/// problems misses the tolerance within the iteration budget.
SinkhornResult sinkhorn_w2(const DensityField& mu, const DensityField& nu, const SinkhornOptions& options = {});

/// Writes "i,j,gamma" rows for entries above 1e-14.
void write_plan_csv(std::ostream& out, const TransportPlanEntropic& plan);

struct ProductDistance {
  double distance = 0.0;
  double distance_sq = 0.0;
};

/// W2 on the product space: W2^2(rho_a, rho_b) + W2^2(eta_a, eta_b).
ProductDistance product_w2(const SpeciesPair& a, const SpeciesPair& b, std::size_t levels = 0);

}  // namespace rieszflow
