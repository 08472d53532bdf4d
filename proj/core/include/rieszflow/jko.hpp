#pragma once

// Minimizing-movement (JKO) scheme for the two-species Riesz system
//
//   d/dt rho = div(rho d/dx (K_s * rho + K_q * eta)),
//   d/dt eta = div(eta d/dx (K_r * eta + K_q * rho)).
//
// Each species is carried as M equal-mass particles in increasing order. In 1-D
// the squared W2 distance between two such clouds is the mean squared
// displacement, so one step minimizes
//
//   (1 / (2 tau M)) sum |X - X0|^2 + (1 / (2 tau M)) sum |Y - Y0|^2 + F(B(X), B(Y))
//
// where B is cubic B-spline deposition onto the grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rieszflow/grid.hpp"
#include "rieszflow/lbfgs.hpp"
#include "rieszflow/spectral.hpp"

namespace rieszflow {

enum class TransportBackend { quantile, entropic };

struct SolverConfig {
  double tau = 1e-3;
  double final_time = 0.05;
  std::size_t particles = 0;  ///< 0 selects 4n
  double inner_tol = 0.0;     ///< 0 selects 1e-8 sqrt(M)
  int max_inner_iter = 500;
  TransportBackend backend = TransportBackend::quantile;
  double entropic_epsilon = 0.05;  ///< only used by the entropic backend
  LineSearchParams line_search;
  int degiorgi_points = 4;

  /// N = ceil(T / tau).
  std::size_t steps() const;
  std::size_t particle_count(const Grid& grid) const;
  double tolerance(std::size_t particle_count) const;
  /// Throws InvalidArgument on tau <= 0, T <= 0, negative inner_tol, and similar.
  void validate() const;
};

/// Ordered equal-mass particle clouds of both species.
struct ParticleCloud {
  std::vector<double> rho;
  std::vector<double> eta;
};

/// A scheme iterate: the particle clouds plus the grid fields they represent.
struct JkoIterate {
  SpeciesPair pair;
  ParticleCloud particles;
};

/// Samples both species at the quantile levels (m - 1/2) / M.
JkoIterate make_iterate(const SpeciesPair& pair, std::size_t particle_count);
/// Grid fields are the exact densities of the piecewise-linear quantile functions.
JkoIterate iterate_from_particles(ParticleCloud particles, const Grid& grid, const ExponentTriple& exponents);

/// F of the B-spline deposited particles and its particle gradient.
class ParticleEnergy {
 public:
  ParticleEnergy(const Grid& grid, const ExponentTriple& exponents);

  /// Returns nullopt if a particle is inadmissible. When the gradient spans are
  /// non-empty they receive G(X_m) = d/dx V interpolated at each particle, so that
  /// dF/dX_m = G(X_m) / M.
  std::optional<double> evaluate(std::span<const double> x, std::span<const double> y, std::span<double> grad_x = {},
                                 std::span<double> grad_y = {});

  double operator()(const ParticleCloud& c) { return evaluate(c.rho, c.eta).value(); }

  const Grid& grid() const noexcept { return op_.grid(); }

 private:
  InteractionOperator op_;
  std::vector<double> rho_, eta_, pot_rho_, pot_eta_;
};

struct JkoStepResult {
  JkoIterate next;
  double step_distance_sq = 0.0;       ///< W2^2 between iterates on the product space
  double step_distance_sq_rho = 0.0;
  double step_distance_sq_eta = 0.0;
  int inner_iterations = 0;
  double gradient_norm = 0.0;          ///< max norm of the objective gradient at return
  bool converged = false;
  double optimality_residual_rho = 0.0;
  double optimality_residual_eta = 0.0;
  double velocity_sq_rho = 0.0;        ///< int |d/dx V_rho|^2 d rho at the new iterate
  double velocity_sq_eta = 0.0;
  double energy_before = 0.0;
  double energy_after = 0.0;
  double objective = 0.0;
};

/// One step from grid data: quantile-samples the current pair first.
JkoStepResult jko_step(const SpeciesPair& current, const SolverConfig& cfg);
/// One step of size step_size from a particle iterate (cfg.tau is ignored).
JkoStepResult jko_step(const JkoIterate& current, const SolverConfig& cfg, double step_size);

/// Relative mismatch |LHS - RHS| / max(LHS, RHS, floor) of int |d/dx V|^2 d rho against W2^2 / tau^2.
struct OptimalityResidual {
  double rho = 0.0;
  double eta = 0.0;
};
inline constexpr double kResidualFloor = 1e-16;
double relative_mismatch(double lhs, double rhs, double floor = kResidualFloor);
/// Particle form: velocities interpolated at the particles, W2 from displacements.
OptimalityResidual optimality_residual(const JkoIterate& stepped, const JkoIterate& previous, double tau);
/// Grid form: spectral velocities on the grid, W2 from grid quantiles.
OptimalityResidual optimality_residual(const SpeciesPair& stepped, const SpeciesPair& previous, double tau);

/// Per-step record; columns of the trajectory CSV plus solver bookkeeping.
struct StepDiagnostics {
  std::size_t step = 0;
  double time = 0.0;
  double energy = 0.0;
  double w2sq_step = 0.0;
  double res_rho = 0.0;
  double res_eta = 0.0;
  double l1_rho = 0.0;
  double l2_rho = 0.0;
  double linf_rho = 0.0;
  double l2_eta = 0.0;
  double linf_eta = 0.0;
  double m2_rho = 0.0;
  double m2_eta = 0.0;
  double com_joint = 0.0;
  double velocity_sq_rho = 0.0;
  double velocity_sq_eta = 0.0;
  int inner_iterations = 0;
  bool converged = true;
};

/// Field-level diagnostics (norms, moments, joint center of mass) of a pair.
StepDiagnostics describe(const SpeciesPair& pair);

/// Iterates at times n tau, n = 0..N, with the piecewise-constant interpolation
/// state(t) = iterate n for t in ((n-1) tau, n tau].
struct Trajectory {
  double tau = 0.0;
  double final_time = 0.0;
  std::vector<double> times;
  std::vector<JkoIterate> iterates;
  std::vector<StepDiagnostics> diagnostics;

  std::size_t steps() const { return iterates.empty() ? 0 : iterates.size() - 1; }
  const JkoIterate& at(double t) const;
  bool converged() const;
};

/// Called with the initial row (step 0) and after every step; may be empty.
using StepObserver = std::function<void(std::size_t step, const StepDiagnostics&)>;

/// Runs N = ceil(T / tau) steps. Step failures are rethrown with the step index.
Trajectory run_trajectory(const SpeciesPair& initial, const SolverConfig& cfg, const StepObserver& observer = {});

/// Minimizer of the JKO objective with step size t_frac in (0, tau] from previous.
JkoStepResult de_giorgi_interpolant(const JkoIterate& previous, double t_frac, const SolverConfig& cfg);

/// Gauss-Legendre nodes and weights on (0, 1).
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(int points);

/// Velocity terms of the De Giorgi interpolants of one step at Gauss times in (0, tau].
struct DeGiorgiStep {
  std::vector<double> offsets;       ///< t - (n-1) tau
  std::vector<double> weights;       ///< quadrature weights, summing to tau
  std::vector<double> velocity_sq;   ///< int |v_rho|^2 d rho + int |v_eta|^2 d eta at each node
  std::vector<double> distance_sq;   ///< W2^2 to the previous iterate at each node
};
std::vector<DeGiorgiStep> degiorgi_samples(const Trajectory& traj, const SolverConfig& cfg, int points);

/// Relative gap of
///   sum_n [tau/2 |v(n)|^2 + 1/2 int_0^tau |v~(t)|^2 dt] + F(final) = F(initial),
/// with F(initial) floored at kResidualFloor in the denominator.
double discrete_energy_identity(const Trajectory& traj, const std::vector<DeGiorgiStep>& samples);

/// Space-time test function with exact partial derivatives and a declared support box.
struct TestFunction {
  std::function<double(double t, double x)> value;
  std::function<double(double t, double x)> dt;
  std::function<double(double t, double x)> dx;
  double t_lo = 0.0;
  double t_hi = 0.0;
  double x_lo = 0.0;
  double x_hi = 0.0;
};

struct WeakFormResidual {
  double rho = 0.0;
  double eta = 0.0;
  double max() const { return std::max(std::abs(rho), std::abs(eta)); }
};

/// Signed int_0^T int (d/dt phi - v . d/dx phi) d rho dt for each species on the
/// piecewise-constant interpolant (4-point Gauss in time per step, particle measure in space).
WeakFormResidual weak_form_residuals(const Trajectory& traj, const TestFunction& phi);
/// max of the two absolute residuals.
double weak_form_residual(const Trajectory& traj, const TestFunction& phi);

/// Writes the trajectory CSV. A non-empty solver tag appends a "solver" column.
void write_trajectory_csv(std::ostream& out, const std::vector<StepDiagnostics>& rows, std::string_view solver = {});

}  // namespace rieszflow
