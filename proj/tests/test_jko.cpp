#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "rieszflow/errors.hpp"
#include "rieszflow/jko.hpp"
#include "rieszflow/scenario.hpp"
#include "rieszflow/transport.hpp"

using namespace rieszflow;

namespace {

const ExponentTriple kStd{0.3, 0.3, 0.35};

SpeciesPair two_bumps(std::size_t n) {
  const Grid g(n, 8.0);
  return SpeciesPair(oracle::gaussian(g, -0.5, 0.3), oracle::gaussian(g, 0.5, 0.3), kStd);
}

SolverConfig config(double tau, double T) {
  SolverConfig c;
  c.tau = tau;
  c.final_time = T;
  return c;
}

double l1(const DensityField& a, const DensityField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s * a.grid().spacing();
}

// psi(t) = ((t - a)(b - t))^2 on (a, b): a polynomial bump, integrated exactly by 4-point Gauss.
double psi(double t, double a, double b) { return t > a && t < b ? std::pow((t - a) * (b - t), 2) : 0.0; }
double dpsi(double t, double a, double b) {
  return t > a && t < b ? 2.0 * (t - a) * (b - t) * ((b - t) - (t - a)) : 0.0;
}

}  // namespace

TEST_SUITE("jko") {
  TEST_CASE("config") {
    SolverConfig c = config(1e-3, 0.05);
    CHECK(c.steps() == 50);
    c.final_time = 0.0005;
    CHECK(c.steps() == 1);
    const Grid g(256, 8.0);
    CHECK(c.particle_count(g) == 1024);
    CHECK(c.tolerance(1024) == doctest::Approx(1e-8 * 32.0));
    c.tau = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }

  TEST_CASE("gauss legendre") {
    for (int k : {1, 2, 4, 8}) {
      const Quadrature q = gauss_legendre(k);
      double w = 0.0, moment = 0.0;
      for (std::size_t j = 0; j < q.nodes.size(); ++j) {
        CHECK(q.nodes[j] > 0.0);
        CHECK(q.nodes[j] < 1.0);
        w += q.weights[j];
        moment += q.weights[j] * std::pow(q.nodes[j], 2 * k - 1);
      }
      CHECK(w == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(moment == doctest::Approx(1.0 / (2.0 * k)).epsilon(1e-13));
    }
  }

  TEST_CASE("flat configuration does not move") {
    const Grid g(128, 4.0, -2.0, 1);
    const DensityField u(g, std::vector<double>(g.size(), 0.25));
    const JkoStepResult r = jko_step(SpeciesPair(u, u, kStd), config(1e-3, 1e-3));
    CHECK(r.converged);
    CHECK(r.step_distance_sq <= 1e-20);
    CHECK(r.optimality_residual_rho == 0.0);
    CHECK(r.optimality_residual_eta == 0.0);
  }

  TEST_CASE("exchange symmetry") {
    const Grid g(256, 8.0);
    const DensityField f = oracle::gaussian(g, 0.2, 0.3);
    const JkoStepResult r = jko_step(SpeciesPair(f, f, {0.3, 0.3, 0.3}), config(1e-3, 1e-3));
    CHECK(l1(r.next.pair.rho, r.next.pair.eta) <= 1e-8);
  }

  TEST_CASE("a step on two offset gaussians") {
    const SolverConfig c = config(1e-3, 1e-3);
    const JkoStepResult r = jko_step(two_bumps(512), c);
    CHECK(r.converged);
    CHECK(r.energy_after < r.energy_before);
    CHECK(r.objective <= r.energy_before);
    CHECK(r.gradient_norm <= c.tolerance(2048));
    CHECK(r.optimality_residual_rho <= 0.05);
    CHECK(r.optimality_residual_eta <= 0.05);
    CHECK(r.step_distance_sq == doctest::Approx(r.step_distance_sq_rho + r.step_distance_sq_eta));
  }

  TEST_CASE("unconverged steps have larger residuals") {
    SolverConfig c = config(1e-3, 1e-3);
    const JkoStepResult good = jko_step(two_bumps(512), c);
    c.max_inner_iter = 1;
    const JkoStepResult bad = jko_step(two_bumps(512), c);
    CHECK_FALSE(bad.converged);
    CHECK(bad.optimality_residual_rho > 10.0 * good.optimality_residual_rho);
  }

  TEST_CASE("short horizon gives one step") {
    const Trajectory t = run_trajectory(two_bumps(256), config(1e-3, 5e-4));
    CHECK(t.iterates.size() == 2);
    CHECK(t.diagnostics.size() == 2);
    CHECK(t.times.back() == doctest::Approx(1e-3));
    CHECK(&t.at(3e-4) == &t.iterates[1]);
    CHECK(&t.at(0.0) == &t.iterates[0]);
  }

  TEST_CASE("trajectory estimates") {
    const SolverConfig c = config(1e-3, 0.02);
    std::size_t observed = 0;
    const Trajectory t = run_trajectory(two_bumps(512), c, [&](std::size_t, const StepDiagnostics&) { ++observed; });
    CHECK(observed == t.steps() + 1);
    CHECK(t.converged());
    const double tol = c.tolerance(2048);
    double telescoped = 0.0;
    for (std::size_t n = 1; n < t.diagnostics.size(); ++n) {
      CHECK(t.diagnostics[n].energy <= t.diagnostics[n - 1].energy + tol);
      CHECK(std::abs(integrate(t.iterates[n].pair.rho) - 1.0) <= 1e-10);
      CHECK(std::abs(t.diagnostics[n].com_joint - t.diagnostics[0].com_joint) <= 10.0 * (8.0 / 512) * c.final_time);
      telescoped += t.diagnostics[n].w2sq_step;
    }
    CHECK(telescoped / (2.0 * c.tau) <= t.diagnostics[0].energy + t.steps() * tol);

    // Repulsion: the two centroids separate.
    const double gap0 = first_moment(t.iterates.front().pair.eta) - first_moment(t.iterates.front().pair.rho);
    const double gap1 = first_moment(t.iterates.back().pair.eta) - first_moment(t.iterates.back().pair.rho);
    CHECK(gap1 > gap0);
  }

  TEST_CASE("mirror symmetry") {
    const Grid g(256, 8.0);
    const DensityField f = oracle::gaussian(g, 0.0, 0.3);
    const DensityField e = oracle::gaussian(g, 0.0, 0.2);
    const Trajectory t = run_trajectory(SpeciesPair(f, e, kStd), config(1e-3, 0.01));
    for (const JkoIterate& it : t.iterates) {
      double defect = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) defect = std::max(defect, std::abs(it.pair.rho[i] - it.pair.rho[g.size() - 1 - i]));
      CHECK(defect <= 1e-8);
    }
  }

  TEST_CASE("de giorgi interpolants") {
    const SolverConfig c = config(1e-3, 1e-3);
    const JkoIterate start = make_iterate(two_bumps(512), c.particle_count(Grid(512, 8.0)));
    const JkoStepResult full = jko_step(start, c, c.tau);
    const JkoStepResult same = de_giorgi_interpolant(start, c.tau, c);
    CHECK(product_w2(full.next.pair, same.next.pair).distance <= 2.0 * c.tolerance(2048));

    double previous = 0.0;
    for (double f : {0.01, 0.1, 0.5}) {
      const JkoStepResult r = de_giorgi_interpolant(start, f * c.tau, c);
      CHECK(r.step_distance_sq > previous);
      CHECK(r.optimality_residual_rho <= 0.05);
      previous = r.step_distance_sq;
    }
    CHECK_THROWS_AS(de_giorgi_interpolant(start, 2.0 * c.tau, c), InvalidArgument);
  }

  TEST_CASE("discrete energy identity") {
    const SolverConfig c = config(1e-3, 0.01);
    const Trajectory t = run_trajectory(two_bumps(512), c);
    const double g2 = discrete_energy_identity(t, degiorgi_samples(t, c, 2));
    const double g8 = discrete_energy_identity(t, degiorgi_samples(t, c, 8));
    CHECK(g2 <= 0.10);
    // Gauss points resolve the velocity integral to round-off from two nodes on.
    CHECK(std::abs(g8 - g2) <= 1e-3 * g2);

    SolverConfig tight = c;
    tight.inner_tol = 0.1 * c.tolerance(2048);
    const Trajectory tt = run_trajectory(two_bumps(512), tight);
    CHECK(discrete_energy_identity(tt, degiorgi_samples(tt, tight, 2)) <= g2);

    const Grid flat(128, 4.0, -2.0, 1);
    const DensityField u(flat, std::vector<double>(flat.size(), 0.25));
    const SolverConfig fc = config(1e-3, 3e-3);
    const Trajectory ft = run_trajectory(SpeciesPair(u, u, kStd), fc);
    CHECK(discrete_energy_identity(ft, degiorgi_samples(ft, fc, 2)) <= 1e-12);
  }

  TEST_CASE("weak form") {
    const double T = 0.02;
    const SolverConfig c = config(1e-3, T);
    const Trajectory t = run_trajectory(two_bumps(256), c);
    const double a = 0.1 * T, b = 0.9 * T;
    const Grid g(256, 8.0);

    TestFunction mass;
    mass.value = [=](double s, double) { return psi(s, a, b); };
    mass.dt = [=](double s, double) { return dpsi(s, a, b); };
    mass.dx = [](double, double) { return 0.0; };
    mass.t_lo = a;
    mass.t_hi = b;
    mass.x_lo = g.admissible_lo();
    mass.x_hi = g.admissible_hi();
    CHECK(weak_form_residual(t, mass) <= 1e-12 * std::pow(b - a, 4));

    TestFunction momentum = mass;
    momentum.value = [=](double s, double x) { return psi(s, a, b) * x; };
    momentum.dt = [=](double s, double x) { return dpsi(s, a, b) * x; };
    momentum.dx = [=](double s, double) { return psi(s, a, b); };
    const WeakFormResidual m = weak_form_residuals(t, momentum);
    CHECK(std::abs(m.rho + m.eta) <= 1e-6 * std::abs(m.rho));

    TestFunction outside = mass;
    outside.t_hi = 2.0 * T;
    CHECK_THROWS_AS(weak_form_residual(t, outside), InvalidArgument);
  }

  TEST_CASE("weak residual shrinks with tau") {
    const double T = 0.05;
    const TestFunction phi = standard_test_function(Grid(256, 8.0), T);
    const double coarse = weak_form_residual(run_trajectory(two_bumps(256), config(1e-3, T)), phi);
    const double fine = weak_form_residual(run_trajectory(two_bumps(256), config(5e-4, T)), phi);
    CHECK(fine / coarse == doctest::Approx(0.5).epsilon(0.25));
  }

  TEST_CASE("trajectory csv") {
    std::vector<StepDiagnostics> rows(2);
    rows[1].step = 1;
    rows[1].time = 1e-3;
    std::ostringstream os, fv;
    write_trajectory_csv(os, rows);
    CHECK(os.str().rfind("step,time,energy,w2sq_step,res_rho,res_eta,l1_rho,l2_rho,linf_rho,l2_eta,linf_eta,m2_rho,"
                         "m2_eta,com_joint\n",
                         0) == 0);
    write_trajectory_csv(fv, rows, "fv");
    CHECK(fv.str().find(",solver\n") != std::string::npos);
    CHECK(fv.str().find(",fv\n") != std::string::npos);
  }
}
