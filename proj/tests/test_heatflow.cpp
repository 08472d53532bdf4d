#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rieszflow/errors.hpp"
#include "rieszflow/heatflow.hpp"
#include "rieszflow/spectral.hpp"

using namespace rieszflow;

namespace {

const ExponentTriple kStd{0.3, 0.3, 0.35};

SpeciesPair smooth_pair(const Grid& g, std::mt19937_64& rng) {
  return SpeciesPair(oracle::random_smooth(g, rng), oracle::random_smooth(g, rng), kStd);
}

}  // namespace

TEST_SUITE("heatflow") {
  TEST_CASE("zero time is the identity") {
    const Grid g(256, 8.0);
    const DensityField f = oracle::gaussian(g, 0.2, 0.3);
    const DensityField e = heat_evolve(f, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(e[i] == doctest::Approx(f[i]).epsilon(1e-12).scale(1.0));
    CHECK_THROWS_AS(heat_evolve(f, -1.0), InvalidArgument);
  }

  TEST_CASE("gaussian variance grows by 2t") {
    const Grid g(1024, 16.0);
    const DensityField f = oracle::gaussian(g, 0.0, 0.3);
    for (double t : {0.01, 0.05}) {
      const DensityField e = heat_evolve(f, t);
      CHECK(second_moment(e) - second_moment(f) == doctest::Approx(2.0 * t).epsilon(1e-8));
    }
  }

  TEST_CASE("mass, positivity and semigroup") {
    const Grid g(256, 8.0);
    std::mt19937_64 rng(31);
    const SpeciesPair p = smooth_pair(g, rng);
    const HeatState once = heat_evolve(p, 0.02);
    const HeatState twice = heat_evolve(heat_evolve(p, 0.01), 0.01);
    CHECK(twice.elapsed == doctest::Approx(0.02));
    CHECK(integrate(once.pair.rho) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(once.pair.rho[i] >= -1e-12);
      CHECK(twice.pair.rho[i] == doctest::Approx(once.pair.rho[i]).epsilon(1e-10).scale(1.0));
    }
  }

  TEST_CASE("energy decays along the heat flow") {
    const Grid g(256, 8.0);
    std::mt19937_64 rng(32);
    for (int k = 0; k < 100; ++k) {
      const SpeciesPair p = smooth_pair(g, rng);
      CHECK(energy(heat_evolve(p, 0.01).pair) <= energy(p));
    }
  }

  TEST_CASE("entropy") {
    const Grid g(128, 4.0, -2.0, 1);
    const DensityField u(g, std::vector<double>(g.size(), 0.25));
    CHECK(entropy(SpeciesPair(u, u, kStd)) == doctest::Approx(2.0 * std::log(0.25)).epsilon(1e-12));
    CHECK(entropy(oracle::gaussian(g, 0.0, 0.2)) > entropy(u));

    const Grid w(256, 8.0);
    std::mt19937_64 rng(33);
    for (int k = 0; k < 10; ++k) {
      const SpeciesPair p = smooth_pair(w, rng);
      const double h0 = entropy(p), h1 = entropy(heat_evolve(p, 0.01).pair), h2 = entropy(heat_evolve(p, 0.02).pair);
      CHECK(h1 <= h0);
      CHECK(h2 <= h1);
    }
  }

  TEST_CASE("dissipation identity") {
    const Grid g(512, 8.0);
    const SpeciesPair p(oracle::gaussian(g, -0.5, 0.3), oracle::gaussian(g, 0.5, 0.3), kStd);
    const DissipationCheck c = dissipation_identity_check(p);
    CHECK(c.gap <= 1e-3);
    CHECK(c.dissipation > 0.0);
    CHECK(c.finite_difference < 0.0);

    std::mt19937_64 rng(34);
    const SpeciesPair s = smooth_pair(g, rng);
    const double dt = 64e-6;
    CHECK(dissipation_identity_check(s, dt).gap >= 3.8 * dissipation_identity_check(s, dt / 2.0).gap);

    const Grid flat(128, 4.0, -2.0, 1);
    const DensityField u(flat, std::vector<double>(flat.size(), 0.25));
    CHECK(dissipation_identity_check(SpeciesPair(u, u, kStd)).gap == 0.0);
  }

  TEST_CASE("evi") {
    const Grid g(512, 8.0);
    const SpeciesPair p(oracle::gaussian(g, -0.3, 0.2), oracle::gaussian(g, 0.3, 0.2), kStd);
    const SpeciesPair wide(oracle::gaussian(g, 0.0, 0.5), oracle::gaussian(g, 0.0, 0.5), kStd);
    const double ts[] = {0.0, 0.01, 0.02};
    const EviReport r = evi_check(p, wide, ts);
    CHECK(r.samples.size() == 3);
    CHECK(r.worst_slack >= -1e-3);

    const Grid b(256, 8.0, -4.0, 1);
    const DensityField u(b, std::vector<double>(b.size(), 1.0 / 8.0));
    const SpeciesPair uniform(u, u, kStd);
    const SpeciesPair peaked(oracle::gaussian(b, -0.3, 0.2), oracle::gaussian(b, 0.3, 0.2), kStd);
    CHECK(evi_check(peaked, uniform, ts).worst_slack > 0.0);

    CHECK_THROWS_AS(evi_check(p, uniform, ts), InvalidArgument);
  }
}
