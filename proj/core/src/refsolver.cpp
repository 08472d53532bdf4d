#include "rieszflow/refsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "rieszflow/errors.hpp"
#include "rieszflow/spectral.hpp"
#include "rieszflow/transport.hpp"

namespace rieszflow {

VelocityFields velocity_fields(const SpeciesPair& pair) {
  const Grid& g = pair.grid();
  VelocityFields v{std::vector<double>(g.size()), std::vector<double>(g.size())};
  InteractionOperator op(g, pair.exponents);
  op.gradients(pair.rho.values(), pair.eta.values(), v.rho, v.eta);
  return v;
}

namespace {

// Face velocity u_{i+1/2}; face i sits between cells i and i+1 (periodic wrap for the last face).
std::vector<double> face_velocity(const std::vector<double>& v, bool periodic) {
  const std::size_t n = v.size();
  std::vector<double> u(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) u[i] = -0.5 * (v[i] + v[i + 1]);
  u[n - 1] = periodic ? -0.5 * (v[n - 1] + v[0]) : 0.0;
  return u;
}

double outflow_rate(const std::vector<double>& u, bool periodic) {
  const std::size_t n = u.size();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double right = std::max(u[i], 0.0);
    double left = 0.0;
    if (i > 0) {
      left = -std::min(u[i - 1], 0.0);
    } else if (periodic) {
      left = -std::min(u[n - 1], 0.0);
    }
    worst = std::max(worst, right + left);
  }
  return worst;
}

std::vector<double> upwind(const DensityField& f, const std::vector<double>& u, double dt, bool periodic) {
  const std::size_t n = f.size();
  const double lambda = dt / f.grid().spacing();
  std::vector<double> flux(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1 == n) ? 0 : i + 1;
    flux[i] = (i + 1 == n && !periodic) ? 0.0 : std::max(u[i], 0.0) * f[i] + std::min(u[i], 0.0) * f[j];
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double in_flux = i > 0 ? flux[i - 1] : (periodic ? flux[n - 1] : 0.0);
    out[i] = std::max(0.0, f[i] - lambda * (flux[i] - in_flux));
  }
  return out;
}

// Largest eigenvalue bound of the flux linearized about the peak densities; each
// coupling acts as a fractional diffusion with symbol |xi|^(2 - 2 sigma).
double diffusion_rate(const SpeciesPair& pair) {
  const double xi = std::numbers::pi / pair.grid().spacing();
  auto symbol = [xi](double sigma) { return std::pow(xi, 2.0 - 2.0 * sigma); };
  const auto& e = pair.exponents;
  const double rho_max = *std::max_element(pair.rho.values().begin(), pair.rho.values().end());
  const double eta_max = *std::max_element(pair.eta.values().begin(), pair.eta.values().end());
  return std::max(rho_max * (symbol(e.s) + symbol(e.q)), eta_max * (symbol(e.q) + symbol(e.r)));
}

}  // namespace

double stable_step(const SpeciesPair& pair) {
  const bool periodic = pair.grid().padding_factor() == 1;
  const VelocityFields v = velocity_fields(pair);
  const double rate = std::max(outflow_rate(face_velocity(v.rho, periodic), periodic),
                               outflow_rate(face_velocity(v.eta, periodic), periodic));
  double dt = rate > 0.0 ? pair.grid().spacing() / rate : std::numeric_limits<double>::infinity();
  const double lambda = diffusion_rate(pair);
  if (lambda > 0.0) dt = std::min(dt, 2.0 / lambda);
  return dt;
}

FvState fv_step(const FvState& state, double dt) {
  if (!(dt >= 0.0)) throw InvalidArgument("time step must be nonnegative");
  const SpeciesPair& p = state.pair;
  const bool periodic = p.grid().padding_factor() == 1;
  const VelocityFields v = velocity_fields(p);
  const auto ur = face_velocity(v.rho, periodic);
  const auto ue = face_velocity(v.eta, periodic);
  const double rate = std::max(outflow_rate(ur, periodic), outflow_rate(ue, periodic));
  const double h = p.grid().spacing();
  const double cfl = dt * rate / h;
  if (cfl > 1.0) throw CflError("upwind CFL number " + std::to_string(cfl) + " exceeds 1", cfl);

  FvState next{SpeciesPair(DensityField::normalized(p.grid(), upwind(p.rho, ur, dt, periodic)),
                           DensityField::normalized(p.grid(), upwind(p.eta, ue, dt, periodic)), p.exponents),
               state.time + dt, 0.0};
  next.dt_cfl = stable_step(next.pair);
  return next;
}

namespace {

StepDiagnostics fv_row(const SpeciesPair& pair, std::size_t step, double time) {
  StepDiagnostics d = describe(pair);
  d.step = step;
  d.time = time;
  d.energy = energy(pair);
  d.res_rho = std::numeric_limits<double>::quiet_NaN();
  d.res_eta = std::numeric_limits<double>::quiet_NaN();
  return d;
}

}  // namespace

FvRun fv_run(const SpeciesPair& initial, double final_time, const FvConfig& cfg) {
  if (!(final_time >= 0.0)) throw InvalidArgument("final time must be nonnegative");
  if (!(cfg.cfl > 0.0 && cfg.cfl <= 1.0)) throw InvalidArgument("CFL number must lie in (0, 1]");
  FvRun run{FvState{initial, 0.0, stable_step(initial)}, {}};
  run.rows.push_back(fv_row(initial, 0, 0.0));
  std::size_t step = 0;
  while (run.final_state.time < final_time) {
    const double remaining = final_time - run.final_state.time;
    double dt = std::min(cfg.cfl * run.final_state.dt_cfl, remaining);
    // Avoid a sliver step caused by round-off in the accumulated time.
    if (remaining - dt < 1e-12 * final_time) dt = remaining;
    FvState next = fv_step(run.final_state, dt);
    if (dt == remaining) next.time = final_time;
    StepDiagnostics d = fv_row(next.pair, ++step, next.time);
    d.w2sq_step = product_w2(run.final_state.pair, next.pair).distance_sq;
    run.rows.push_back(d);
    run.final_state = std::move(next);
  }
  return run;
}

CrossValidation cross_validate(const SpeciesPair& initial, double final_time, const SolverConfig& jko_cfg,
                               const FvConfig& fv_cfg) {
  if (!(final_time >= 0.0)) throw InvalidArgument("final time must be nonnegative");
  if (final_time == 0.0) return {};
  SolverConfig cfg = jko_cfg;
  cfg.final_time = final_time;
  const Trajectory traj = run_trajectory(initial, cfg);
  const FvRun fv = fv_run(initial, final_time, fv_cfg);
  const SpeciesPair& a = traj.iterates.back().pair;
  const SpeciesPair& b = fv.final_state.pair;
  const double h = a.grid().spacing();
  CrossValidation c;
  for (std::size_t i = 0; i < a.grid().size(); ++i) {
    c.l1_rho += std::abs(a.rho[i] - b.rho[i]);
    c.l1_eta += std::abs(a.eta[i] - b.eta[i]);
  }
  c.l1_rho *= h;
  c.l1_eta *= h;
  c.l1_gap = std::max(c.l1_rho, c.l1_eta);
  return c;
}

}  // namespace rieszflow
