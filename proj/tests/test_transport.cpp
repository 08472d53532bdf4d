#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "rieszflow/errors.hpp"
#include "rieszflow/transport.hpp"

using namespace rieszflow;

namespace {

DensityField spike_at(const Grid& g, double x) {
  std::vector<double> v(g.size(), 0.0);
  v[static_cast<std::size_t>((x - g.origin()) / g.spacing())] = 1.0 / g.spacing();
  return DensityField(g, std::move(v));
}

DensityField shifted(const DensityField& f, int cells) {
  std::vector<double> v(f.size(), 0.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const long j = static_cast<long>(i) + cells;
    if (j >= 0 && j < static_cast<long>(f.size())) v[static_cast<std::size_t>(j)] = f[i];
  }
  return DensityField(f.grid(), std::move(v));
}

}  // namespace

TEST_SUITE("transport") {
  TEST_CASE("quantile representation is monotone") {
    const Grid g(256, 8.0);
    std::mt19937_64 rng(21);
    const QuantileRepresentation q = quantile_representation(oracle::random_smooth(g, rng), 1024);
    CHECK(q.cdf.size() == g.size() + 1);
    CHECK(q.cdf.front() == 0.0);
    CHECK(q.cdf.back() == doctest::Approx(1.0));
    for (std::size_t i = 1; i < q.cdf.size(); ++i) CHECK(q.cdf[i] >= q.cdf[i - 1]);
    for (std::size_t i = 1; i < q.quantiles.size(); ++i) CHECK(q.quantiles[i] >= q.quantiles[i - 1]);
    CHECK(q.quantiles.front() >= g.origin());
    CHECK(q.quantiles.back() <= g.origin() + g.length());
  }

  TEST_CASE("w2 of identical, translated and atomic measures") {
    const Grid g(512, 8.0);
    const double h = g.spacing();
    const DensityField f = oracle::gaussian(g, -0.2, 0.3);
    CHECK(w2_1d(f, f).distance < 1e-12);
    const DensityField t = shifted(f, 40);
    CHECK(std::abs(w2_1d(f, t).distance - 40 * h) <= 2.0 * h);
    CHECK(std::abs(w2_1d(spike_at(g, 0.0), spike_at(g, 1.0)).distance - 1.0) <= h);
    CHECK(w2_1d(f, t).distance_sq == doctest::Approx(std::pow(w2_1d(f, t).distance, 2)));
  }

  TEST_CASE("w2 is a metric with a monotone map") {
    const Grid g(256, 8.0);
    std::mt19937_64 rng(22);
    for (int k = 0; k < 20; ++k) {
      const DensityField a = oracle::random_smooth(g, rng), b = oracle::random_smooth(g, rng),
                         c = oracle::random_smooth(g, rng);
      const W2Result ab = w2_1d(a, b);
      CHECK(std::abs(ab.distance - w2_1d(b, a).distance) <= 1e-10);
      CHECK(w2_1d(a, c).distance <= ab.distance + w2_1d(b, c).distance + 1e-10);
      for (std::size_t m = 1; m < ab.target.size(); ++m) CHECK(ab.target[m] >= ab.target[m - 1]);
    }
  }

  TEST_CASE("sorted particle distance") {
    const std::vector<double> a{0.0, 1.0, 2.0}, b{0.5, 1.5, 2.5};
    CHECK(w2_sq_sorted(a, b) == doctest::Approx(0.25));
    CHECK_THROWS_AS(w2_sq_sorted(a, std::vector<double>{1.0}), InvalidArgument);
  }

  TEST_CASE("sinkhorn divergence vanishes on the diagonal") {
    const Grid g(128, 8.0);
    const DensityField f = oracle::gaussian(g, 0.1, 0.3);
    SinkhornOptions o;
    o.epsilon = 0.05;
    const SinkhornResult r = sinkhorn_w2(f, f, o);
    CHECK(std::abs(r.divergence) <= 1e-6);
    CHECK(r.distance <= 1e-3);
  }

  TEST_CASE("sinkhorn matches exact transport for a translation") {
    const Grid g(128, 8.0);
    const double h = g.spacing();
    const DensityField f = oracle::gaussian(g, -0.4, 0.3);
    const DensityField t = shifted(f, 10);
    SinkhornOptions o;
    o.epsilon = 0.02;
    const SinkhornResult r = sinkhorn_w2(f, t, o);
    CHECK(std::abs(r.distance - w2_1d(f, t).distance) <= 2.0 * h);
    CHECK(r.plan.row_violation <= 1e-8);
    for (double v : r.plan.gamma) CHECK(v >= 0.0);
    double row0 = 0.0;
    for (std::size_t j = 0; j < r.plan.columns.size(); ++j) row0 += r.plan.at(0, j);
    CHECK(row0 == doctest::Approx(f[r.plan.rows[0]] * h).epsilon(1e-6));
  }

  TEST_CASE("sinkhorn approaches exact transport as epsilon shrinks") {
    const Grid g(128, 8.0);
    const DensityField mu = oracle::gaussian(g, -0.3, 0.2), nu = oracle::gaussian(g, 0.4, 0.35);
    const double exact = w2_1d(mu, nu).distance;
    double prev_gap = INFINITY, prev_cost_gap = INFINITY;
    for (double c : {0.1, 0.05, 0.025}) {
      SinkhornOptions o;
      o.epsilon = c * g.length();
      const SinkhornResult r = sinkhorn_w2(mu, nu, o);
      const double gap = std::abs(r.distance - exact);
      const double cost_gap = std::abs(r.plan_cost - exact * exact);
      CHECK(gap < prev_gap);
      CHECK(cost_gap < prev_cost_gap);
      prev_gap = gap;
      prev_cost_gap = cost_gap;
    }
  }

  TEST_CASE("sinkhorn reports an exhausted budget") {
    const Grid g(128, 8.0);
    SinkhornOptions o;
    o.epsilon = 1e-3;
    o.max_iterations = 3;
    CHECK_THROWS_AS(sinkhorn_w2(oracle::gaussian(g, -0.5, 0.2), oracle::gaussian(g, 0.5, 0.4), o), ConvergenceError);
  }

  TEST_CASE("plan csv") {
    const Grid g(64, 8.0);
    SinkhornOptions o;
    o.epsilon = 0.1;
    const SinkhornResult r = sinkhorn_w2(oracle::gaussian(g, -0.3, 0.3), oracle::gaussian(g, 0.3, 0.3), o);
    std::ostringstream os;
    write_plan_csv(os, r.plan);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "i,j,gamma");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      const double v = std::stod(line.substr(line.rfind(',') + 1));
      CHECK(v > 1e-14);
      ++rows;
    }
    CHECK(rows > 0);
  }

  TEST_CASE("product distance") {
    const Grid g(512, 8.0);
    const double h = g.spacing();
    const ExponentTriple e;
    const DensityField r = oracle::gaussian(g, -0.4, 0.3), s = oracle::gaussian(g, 0.3, 0.25);
    const SpeciesPair a(r, s, e);
    CHECK(product_w2(a, a).distance < 1e-12);
    const DensityField s2 = oracle::gaussian(g, 0.1, 0.4);
    CHECK(product_w2(a, SpeciesPair(r, s2, e)).distance == doctest::Approx(w2_1d(s, s2).distance).epsilon(1e-12));
    const SpeciesPair moved(shifted(r, 32), shifted(s, 32), e);
    CHECK(std::abs(product_w2(a, moved).distance - std::sqrt(2.0) * 32 * h) <= 2.0 * h);
  }
}
