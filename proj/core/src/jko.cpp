#include "rieszflow/jko.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "rieszflow/errors.hpp"
#include "rieszflow/transport.hpp"

namespace rieszflow {

std::size_t SolverConfig::steps() const {
  const double ratio = final_time / tau;
  // Guard against ratios like 0.05 / 1e-3 = 50.000000000000007.
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) <= 1e-9 * std::max(1.0, rounded)) return static_cast<std::size_t>(std::max(1.0, rounded));
  return static_cast<std::size_t>(std::max(1.0, std::ceil(ratio)));
}

std::size_t SolverConfig::particle_count(const Grid& grid) const {
  return particles > 0 ? particles : 4 * grid.size();
}

double SolverConfig::tolerance(std::size_t m) const {
  return inner_tol > 0.0 ? inner_tol : 1e-8 * std::sqrt(static_cast<double>(m));
}

void SolverConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("tau must be positive");
  if (!(final_time > 0.0) || !std::isfinite(final_time)) throw InvalidArgument("final time must be positive");
  if (!(inner_tol >= 0.0)) throw InvalidArgument("inner_tol must be positive (or 0 for the default)");
  if (max_inner_iter < 1) throw InvalidArgument("max_inner_iter must be at least 1");
  if (particles == 1) throw InvalidArgument("at least two particles per species are required");
  if (!(line_search.armijo > 0.0 && line_search.armijo < 1.0)) throw InvalidArgument("Armijo constant must lie in (0, 1)");
  if (!(line_search.shrink > 0.0 && line_search.shrink < 1.0)) throw InvalidArgument("line-search shrink must lie in (0, 1)");
  if (!(line_search.wolfe > line_search.armijo && line_search.wolfe < 1.0)) {
    throw InvalidArgument("Wolfe constant must lie in (armijo, 1)");
  }
  if (line_search.max_backtracks < 1) throw InvalidArgument("line search needs at least one backtrack");
  if (degiorgi_points < 1) throw InvalidArgument("De Giorgi quadrature needs at least one point");
  if (backend == TransportBackend::entropic && !(entropic_epsilon > 0.0)) {
    throw InvalidArgument("entropic backend needs a positive epsilon");
  }
}

JkoIterate make_iterate(const SpeciesPair& pair, std::size_t m) {
  if (m < 2) throw InvalidArgument("at least two particles per species are required");
  ParticleCloud c{quantile_representation(pair.rho, m).quantiles, quantile_representation(pair.eta, m).quantiles};
  return JkoIterate{pair, std::move(c)};
}

JkoIterate iterate_from_particles(ParticleCloud particles, const Grid& grid, const ExponentTriple& exponents) {
  SpeciesPair pair(reconstruct_from_particles(particles.rho, grid), reconstruct_from_particles(particles.eta, grid),
                   exponents);
  return JkoIterate{std::move(pair), std::move(particles)};
}

namespace {

struct Stencil {
  std::ptrdiff_t i0;
  double w[4];
  double dw[4];
};

// Cubic B-spline weights on nodes i0-1 .. i0+2 and their x-derivatives.
bool stencil(const Grid& g, double x, Stencil& st) {
  if (!g.admissible(x)) return false;
  const double h = g.spacing();
  const double t = (x - g.center(0)) / h;
  const double fl = std::floor(t);
  const double f = t - fl;
  const double e = 1.0 - f;
  st.i0 = static_cast<std::ptrdiff_t>(fl);
  st.w[0] = e * e * e / 6.0;
  st.w[1] = (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0;
  st.w[2] = (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0;
  st.w[3] = f * f * f / 6.0;
  st.dw[0] = -0.5 * e * e / h;
  st.dw[1] = (1.5 * f * f - 2.0 * f) / h;
  st.dw[2] = (-1.5 * f * f + f + 0.5) / h;
  st.dw[3] = 0.5 * f * f / h;
  return true;
}

bool node_index(const Grid& g, std::ptrdiff_t i, std::size_t& out) {
  const auto n = static_cast<std::ptrdiff_t>(g.size());
  if (g.padding_factor() == 1) {
    i = ((i % n) + n) % n;
  } else if (i < 0 || i >= n) {
    return false;
  }
  out = static_cast<std::size_t>(i);
  return true;
}

bool deposit(const Grid& g, std::span<const double> x, std::vector<double>& field) {
  std::fill(field.begin(), field.end(), 0.0);
  const double scale = 1.0 / (static_cast<double>(x.size()) * g.spacing());
  Stencil st;
  for (double xi : x) {
    if (!stencil(g, xi, st)) return false;
    for (int k = 0; k < 4; ++k) {
      std::size_t idx;
      if (!node_index(g, st.i0 - 1 + k, idx)) return false;
      field[idx] += st.w[k] * scale;
    }
  }
  return true;
}

void gather(const Grid& g, std::span<const double> x, const std::vector<double>& potential, std::span<double> out) {
  Stencil st;
  for (std::size_t m = 0; m < x.size(); ++m) {
    stencil(g, x[m], st);
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      std::size_t idx;
      node_index(g, st.i0 - 1 + k, idx);
      acc += potential[idx] * st.dw[k];
    }
    out[m] = acc;
  }
}

double mean_square(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

}  // namespace

ParticleEnergy::ParticleEnergy(const Grid& grid, const ExponentTriple& exponents)
    : op_(grid, exponents),
      rho_(grid.size()),
      eta_(grid.size()),
      pot_rho_(grid.size()),
      pot_eta_(grid.size()) {}

std::optional<double> ParticleEnergy::evaluate(std::span<const double> x, std::span<const double> y,
                                               std::span<double> grad_x, std::span<double> grad_y) {
  const Grid& g = op_.grid();
  if (!deposit(g, x, rho_) || !deposit(g, y, eta_)) return std::nullopt;
  const bool want_grad = !grad_x.empty() || !grad_y.empty();
  const double e = want_grad ? op_.evaluate(rho_, eta_, pot_rho_, pot_eta_) : op_.evaluate(rho_, eta_);
  if (!grad_x.empty()) gather(g, x, pot_rho_, grad_x);
  if (!grad_y.empty()) gather(g, y, pot_eta_, grad_y);
  return e;
}

double relative_mismatch(double lhs, double rhs, double floor) {
  const double scale = std::max({std::abs(lhs), std::abs(rhs)});
  if (scale <= floor) return 0.0;
  return std::abs(lhs - rhs) / scale;
}

JkoStepResult jko_step(const SpeciesPair& current, const SolverConfig& cfg) {
  cfg.validate();
  return jko_step(make_iterate(current, cfg.particle_count(current.grid())), cfg, cfg.tau);
}

JkoStepResult jko_step(const JkoIterate& current, const SolverConfig& cfg, double step_size) {
  cfg.validate();
  if (!(step_size > 0.0)) throw InvalidArgument("step size must be positive");
  if (auto bad = exponent_violation(current.pair.exponents)) throw InvalidArgument(*bad);
  const Grid& grid = current.pair.grid();
  const std::size_t m = current.particles.rho.size();
  if (m < 2 || current.particles.eta.size() != m) throw InvalidArgument("particle clouds must have equal size >= 2");

  ParticleEnergy pe(grid, current.pair.exponents);
  const auto& x0 = current.particles.rho;
  const auto& y0 = current.particles.eta;
  const double md = static_cast<double>(m);
  const double penalty = 1.0 / (2.0 * step_size * md);

  std::vector<double> z(2 * m);
  std::copy(x0.begin(), x0.end(), z.begin());
  std::copy(y0.begin(), y0.end(), z.begin() + static_cast<std::ptrdiff_t>(m));

  const auto e0 = pe.evaluate(x0, y0);
  if (!e0) throw InvalidArgument("current iterate has particles outside the admissible region");

  LbfgsObjective objective = [&](std::span<const double> v, std::span<double> grad) -> std::optional<double> {
    const auto e = pe.evaluate(v.first(m), v.subspan(m), grad.first(m), grad.subspan(m));
    if (!e) return std::nullopt;
    double quad = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double dx = v[i] - x0[i];
      const double dy = v[m + i] - y0[i];
      quad += dx * dx + dy * dy;
      grad[i] = grad[i] / md + 2.0 * penalty * dx;
      grad[m + i] = grad[m + i] / md + 2.0 * penalty * dy;
    }
    return penalty * quad + *e;
  };
  LbfgsProjection projection = [m](std::span<double> v) {
    const bool a = project_nondecreasing(v.first(m));
    const bool b = project_nondecreasing(v.subspan(m));
    return a || b;
  };

  LbfgsOptions opt;
  opt.max_iterations = cfg.max_inner_iter;
  opt.gradient_tol = cfg.tolerance(m);
  opt.line_search = cfg.line_search;
  const LbfgsReport rep = minimize_lbfgs(z, objective, opt, step_size * md, projection);

  ParticleCloud next{std::vector<double>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(m)),
                     std::vector<double>(z.begin() + static_cast<std::ptrdiff_t>(m), z.end())};
  std::vector<double> gx(m), gy(m);
  const double e1 = pe.evaluate(next.rho, next.eta, gx, gy).value();

  JkoStepResult r{iterate_from_particles(next, grid, current.pair.exponents)};
  r.step_distance_sq_rho = w2_sq_sorted(next.rho, x0);
  r.step_distance_sq_eta = w2_sq_sorted(next.eta, y0);
  r.step_distance_sq = r.step_distance_sq_rho + r.step_distance_sq_eta;
  r.inner_iterations = rep.iterations;
  r.gradient_norm = rep.gradient_norm;
  r.converged = rep.converged;
  r.velocity_sq_rho = mean_square(gx);
  r.velocity_sq_eta = mean_square(gy);
  const double t2 = step_size * step_size;
  r.optimality_residual_rho = relative_mismatch(r.velocity_sq_rho, r.step_distance_sq_rho / t2);
  r.optimality_residual_eta = relative_mismatch(r.velocity_sq_eta, r.step_distance_sq_eta / t2);
  r.energy_before = *e0;
  r.energy_after = e1;
  r.objective = rep.value;
  return r;
}

OptimalityResidual optimality_residual(const JkoIterate& stepped, const JkoIterate& previous, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const std::size_t m = stepped.particles.rho.size();
  ParticleEnergy pe(stepped.pair.grid(), stepped.pair.exponents);
  std::vector<double> gx(m), gy(m);
  if (!pe.evaluate(stepped.particles.rho, stepped.particles.eta, gx, gy)) {
    throw InvalidArgument("stepped iterate has particles outside the admissible region");
  }
  const double t2 = tau * tau;
  return {relative_mismatch(mean_square(gx), w2_sq_sorted(stepped.particles.rho, previous.particles.rho) / t2),
          relative_mismatch(mean_square(gy), w2_sq_sorted(stepped.particles.eta, previous.particles.eta) / t2)};
}

OptimalityResidual optimality_residual(const SpeciesPair& stepped, const SpeciesPair& previous, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
  const Grid& g = stepped.grid();
  InteractionOperator op(g, stepped.exponents);
  std::vector<double> vr(g.size()), ve(g.size());
  op.gradients(stepped.rho.values(), stepped.eta.values(), vr, ve);
  double lr = 0.0, le = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    lr += vr[i] * vr[i] * stepped.rho[i];
    le += ve[i] * ve[i] * stepped.eta[i];
  }
  lr *= g.spacing();
  le *= g.spacing();
  const double t2 = tau * tau;
  return {relative_mismatch(lr, w2_1d(stepped.rho, previous.rho).distance_sq / t2),
          relative_mismatch(le, w2_1d(stepped.eta, previous.eta).distance_sq / t2)};
}

StepDiagnostics describe(const SpeciesPair& pair) {
  StepDiagnostics d;
  d.l1_rho = lp_norm(pair.rho, 1.0);
  d.l2_rho = lp_norm(pair.rho, 2.0);
  d.linf_rho = lp_norm(pair.rho, INFINITY);
  d.l2_eta = lp_norm(pair.eta, 2.0);
  d.linf_eta = lp_norm(pair.eta, INFINITY);
  d.m2_rho = second_moment(pair.rho);
  d.m2_eta = second_moment(pair.eta);
  d.com_joint = first_moment(pair.rho) + first_moment(pair.eta);
  return d;
}

const JkoIterate& Trajectory::at(double t) const {
  if (iterates.empty()) throw InvalidArgument("empty trajectory");
  if (t <= 0.0) return iterates.front();
  const double k = std::ceil(t / tau - 1e-9);
  const auto n = static_cast<std::size_t>(std::min(k, static_cast<double>(iterates.size() - 1)));
  return iterates[n];
}

bool Trajectory::converged() const {
  return std::all_of(diagnostics.begin(), diagnostics.end(), [](const StepDiagnostics& d) { return d.converged; });
}

Trajectory run_trajectory(const SpeciesPair& initial, const SolverConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  if (auto bad = exponent_violation(initial.exponents)) throw InvalidArgument(*bad);
  const Grid& grid = initial.grid();
  const std::size_t m = cfg.particle_count(grid);
  const std::size_t steps = cfg.steps();

  Trajectory traj;
  traj.tau = cfg.tau;
  traj.final_time = cfg.final_time;
  traj.iterates.reserve(steps + 1);
  traj.iterates.push_back(make_iterate(initial, m));
  traj.times.push_back(0.0);

  ParticleEnergy pe(grid, initial.exponents);
  StepDiagnostics d0 = describe(initial);
  const auto e0 = pe.evaluate(traj.iterates[0].particles.rho, traj.iterates[0].particles.eta);
  if (!e0) throw InvalidArgument("initial data leave the admissible region");
  d0.energy = *e0;
  traj.diagnostics.push_back(d0);
  if (observer) observer(0, d0);

  for (std::size_t n = 1; n <= steps; ++n) {
    const std::string where = "step " + std::to_string(n) + ": ";
    try {
      const JkoIterate& prev = traj.iterates.back();
      JkoStepResult r = jko_step(prev, cfg, cfg.tau);
      StepDiagnostics d = describe(r.next.pair);
      d.step = n;
      d.time = static_cast<double>(n) * cfg.tau;
      d.energy = r.energy_after;
      if (cfg.backend == TransportBackend::quantile) {
        d.w2sq_step = r.step_distance_sq;
      } else {
        SinkhornOptions so;
        so.epsilon = cfg.entropic_epsilon;
        d.w2sq_step = sinkhorn_w2(prev.pair.rho, r.next.pair.rho, so).divergence +
                      sinkhorn_w2(prev.pair.eta, r.next.pair.eta, so).divergence;
      }
      d.res_rho = r.optimality_residual_rho;
      d.res_eta = r.optimality_residual_eta;
      d.velocity_sq_rho = r.velocity_sq_rho;
      d.velocity_sq_eta = r.velocity_sq_eta;
      d.inner_iterations = r.inner_iterations;
      d.converged = r.converged;
      traj.iterates.push_back(std::move(r.next));
      traj.times.push_back(d.time);
      traj.diagnostics.push_back(d);
      if (observer) observer(n, d);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(where + e.what(), e.residual());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + e.what());
    } catch (const CflError& e) {
      throw CflError(where + e.what(), e.cfl_number());
    } catch (const IoError& e) {
      throw IoError(where + e.what());
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  return traj;
}

JkoStepResult de_giorgi_interpolant(const JkoIterate& previous, double t_frac, const SolverConfig& cfg) {
  if (!(t_frac > 0.0) || t_frac > cfg.tau * (1.0 + 1e-12)) throw InvalidArgument("t_frac must lie in (0, tau]");
  return jko_step(previous, cfg, t_frac);
}

Quadrature gauss_legendre(int points) {
  if (points < 1) throw InvalidArgument("quadrature needs at least one point");
  Quadrature q;
  const int n = points;
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(std::numbers::pi * (i - 0.25) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    q.nodes.push_back(0.5 * (1.0 - x));
    q.weights.push_back(1.0 / ((1.0 - x * x) * dp * dp));
  }
  return q;
}

std::vector<DeGiorgiStep> degiorgi_samples(const Trajectory& traj, const SolverConfig& cfg, int points) {
  const Quadrature q = gauss_legendre(points);
  std::vector<DeGiorgiStep> out;
  for (std::size_t n = 1; n < traj.iterates.size(); ++n) {
    DeGiorgiStep s;
    for (std::size_t j = 0; j < q.nodes.size(); ++j) {
      const double t = q.nodes[j] * traj.tau;
      const JkoStepResult r = de_giorgi_interpolant(traj.iterates[n - 1], t, cfg);
      s.offsets.push_back(t);
      s.weights.push_back(q.weights[j] * traj.tau);
      s.velocity_sq.push_back(r.velocity_sq_rho + r.velocity_sq_eta);
      s.distance_sq.push_back(r.step_distance_sq);
    }
    out.push_back(std::move(s));
  }
  return out;
}

double discrete_energy_identity(const Trajectory& traj, const std::vector<DeGiorgiStep>& samples) {
  if (traj.diagnostics.empty()) throw InvalidArgument("empty trajectory");
  if (samples.size() != traj.steps()) throw InvalidArgument("one De Giorgi sample set per step is required");
  double lhs = traj.diagnostics.back().energy;
  for (std::size_t n = 1; n <= traj.steps(); ++n) {
    const StepDiagnostics& d = traj.diagnostics[n];
    lhs += 0.5 * traj.tau * (d.velocity_sq_rho + d.velocity_sq_eta);
    const DeGiorgiStep& s = samples[n - 1];
    for (std::size_t j = 0; j < s.weights.size(); ++j) lhs += 0.5 * s.weights[j] * s.velocity_sq[j];
  }
  const double rhs = traj.diagnostics.front().energy;
  return std::abs(lhs - rhs) / std::max(std::abs(rhs), kResidualFloor);
}

WeakFormResidual weak_form_residuals(const Trajectory& traj, const TestFunction& phi) {
  if (traj.iterates.empty()) throw InvalidArgument("empty trajectory");
  if (!phi.value || !phi.dt || !phi.dx) throw InvalidArgument("test function needs value and both derivatives");
  const Grid& g = traj.iterates.front().pair.grid();
  const double horizon = traj.final_time;
  if (!(phi.t_lo > 0.0 && phi.t_lo < phi.t_hi && phi.t_hi < horizon)) {
    throw InvalidArgument("test function time support must lie inside (0, T)");
  }
  if (!(phi.x_lo >= g.admissible_lo() && phi.x_lo < phi.x_hi && phi.x_hi <= g.admissible_hi())) {
    throw InvalidArgument("test function space support must lie inside the admissible region");
  }
  const Quadrature q = gauss_legendre(4);
  ParticleEnergy pe(g, traj.iterates.front().pair.exponents);
  WeakFormResidual res;
  const std::size_t m = traj.iterates.front().particles.rho.size();
  std::vector<double> gx(m), gy(m);
  for (std::size_t n = 1; n < traj.iterates.size(); ++n) {
    const double a = std::max(static_cast<double>(n - 1) * traj.tau, phi.t_lo);
    const double b = std::min(static_cast<double>(n) * traj.tau, phi.t_hi);
    if (b <= a) continue;
    const ParticleCloud& c = traj.iterates[n].particles;
    pe.evaluate(c.rho, c.eta, gx, gy);
    for (std::size_t j = 0; j < q.nodes.size(); ++j) {
      const double t = a + q.nodes[j] * (b - a);
      const double w = q.weights[j] * (b - a) / static_cast<double>(m);
      double sr = 0.0, se = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        sr += phi.dt(t, c.rho[k]) - gx[k] * phi.dx(t, c.rho[k]);
        se += phi.dt(t, c.eta[k]) - gy[k] * phi.dx(t, c.eta[k]);
      }
      res.rho += w * sr;
      res.eta += w * se;
    }
  }
  return res;
}

double weak_form_residual(const Trajectory& traj, const TestFunction& phi) {
  return weak_form_residuals(traj, phi).max();
}

void write_trajectory_csv(std::ostream& out, const std::vector<StepDiagnostics>& rows, std::string_view solver) {
  out << "step,time,energy,w2sq_step,res_rho,res_eta,l1_rho,l2_rho,linf_rho,l2_eta,linf_eta,m2_rho,m2_eta,com_joint";
  if (!solver.empty()) out << ",solver";
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    out << buf;
  };
  for (const StepDiagnostics& d : rows) {
    out << d.step;
    for (double v : {d.time, d.energy, d.w2sq_step, d.res_rho, d.res_eta, d.l1_rho, d.l2_rho, d.linf_rho, d.l2_eta,
                     d.linf_eta, d.m2_rho, d.m2_eta, d.com_joint}) {
      put(v);
    }
    if (!solver.empty()) out << ',' << solver;
    out << '\n';
  }
}

}  // namespace rieszflow
