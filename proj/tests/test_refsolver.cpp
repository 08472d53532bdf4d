#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "rieszflow/errors.hpp"
#include "rieszflow/refsolver.hpp"

using namespace rieszflow;

namespace {

const ExponentTriple kStd{0.3, 0.3, 0.35};

double centered_m2(const DensityField& f) {
  const double m = first_moment(f);
  return second_moment(f) - m * m;
}

}  // namespace

TEST_SUITE("refsolver") {
  TEST_CASE("uniform state is a fixed point") {
    const Grid g(128, 4.0, -2.0, 1);
    const DensityField u(g, std::vector<double>(g.size(), 0.25));
    const SpeciesPair p(u, u, kStd);
    const VelocityFields v = velocity_fields(p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(std::abs(v.rho[i]) < 1e-12);
      CHECK(std::abs(v.eta[i]) < 1e-12);
    }
    const FvState s = fv_step(FvState{p, 0.0, stable_step(p)}, 0.01);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(s.pair.rho[i] == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("velocities of a mirror-symmetric pair are odd") {
    const Grid g(512, 8.0);
    const DensityField f = oracle::gaussian(g, 0.0, 0.3);
    const VelocityFields v = velocity_fields(SpeciesPair(f, f, kStd));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(v.rho[i] + v.rho[g.size() - 1 - i]) < 1e-10);
  }

  TEST_CASE("separated bumps push apart") {
    const Grid g(512, 8.0);
    const SpeciesPair p(oracle::gaussian(g, -0.6, 0.2), oracle::gaussian(g, 0.6, 0.2), kStd);
    const VelocityFields v = velocity_fields(p);
    const auto c = static_cast<std::size_t>((-0.6 - g.origin()) / g.spacing());
    // The potential gradient at the rho centroid points toward the eta bump, so mass moves away.
    CHECK(v.rho[c] > 0.0);
    const auto pot = oracle::direct_convolve(g, {p.eta.values().begin(), p.eta.values().end()}, kStd.q);
    CHECK(pot[c + 1] > pot[c - 1]);
  }

  TEST_CASE("cfl guard") {
    const Grid g(256, 8.0);
    const SpeciesPair p(oracle::gaussian(g, -0.5, 0.3), oracle::gaussian(g, 0.5, 0.3), kStd);
    const FvState s{p, 0.0, stable_step(p)};
    CHECK(s.dt_cfl > 0.0);
    CHECK_THROWS_AS(fv_step(s, 1.0), CflError);
    CHECK_THROWS_AS(fv_run(p, 0.01, FvConfig{1.5}), InvalidArgument);
  }

  TEST_CASE("run conserves mass and centre and dissipates energy") {
    const Grid g(256, 8.0);
    const SpeciesPair p(oracle::gaussian(g, -0.5, 0.3), oracle::gaussian(g, 0.5, 0.3), kStd);
    const double T = 0.05;
    const FvRun run = fv_run(p, T);
    CHECK(run.final_state.time == T);
    CHECK(run.rows.front().step == 0);
    CHECK(std::isnan(run.rows.back().res_rho));
    const double e0 = run.rows.front().energy;
    for (std::size_t k = 1; k < run.rows.size(); ++k) {
      const auto& d = run.rows[k];
      CHECK(d.energy <= run.rows[k - 1].energy + 1e-3 * e0 * (d.time - run.rows[k - 1].time));
      CHECK(std::abs(d.com_joint - run.rows[0].com_joint) <= 10.0 * g.spacing() * T);
    }
    CHECK(integrate(run.final_state.pair.rho) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(run.final_state.pair.eta[i] >= 0.0);
  }

  TEST_CASE("repulsion spreads a symmetric pair") {
    const Grid g(256, 8.0);
    const DensityField f = oracle::gaussian(g, 0.0, 0.25);
    const FvRun run = fv_run(SpeciesPair(f, f, kStd), 0.05);
    CHECK(centered_m2(run.final_state.pair.rho) > centered_m2(f));
  }

  TEST_CASE("cross validation") {
    const Grid g(256, 8.0);
    const SpeciesPair p(oracle::gaussian(g, -0.5, 0.3), oracle::gaussian(g, 0.5, 0.3), kStd);
    SolverConfig cfg;
    cfg.tau = 2e-3;
    CHECK(cross_validate(p, 0.0, cfg).l1_gap == 0.0);
    const CrossValidation c = cross_validate(p, 0.02, cfg);
    CHECK(c.l1_gap <= 0.05);
    CHECK(c.l1_gap == std::max(c.l1_rho, c.l1_eta));
  }
}
