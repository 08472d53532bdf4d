#include "rieszflow/heatflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fft.hpp"
#include "rieszflow/errors.hpp"
#include "rieszflow/spectral.hpp"
#include "rieszflow/transport.hpp"

namespace rieszflow {

DensityField heat_evolve(const DensityField& f, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("heat flow time must be nonnegative");
  if (t == 0.0) return f;
  const Grid& g = f.grid();
  const std::size_t n = g.size();
  detail::RealBuffer in(n);
  detail::ComplexBuffer spec(n / 2 + 1);
  std::copy(f.values().begin(), f.values().end(), in.data());
  detail::forward_real(n, in, spec);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double xi = 2.0 * std::numbers::pi * static_cast<double>(k) / g.length();
    spec[k] *= std::exp(-xi * xi * t) / static_cast<double>(n);
  }
  detail::RealBuffer out(n);
  detail::backward_real(n, spec, out);
  std::vector<double> v(out.data(), out.data() + n);
  for (double& x : v) x = std::max(x, 0.0);
  return DensityField::normalized(g, std::move(v));
}

HeatState heat_evolve(const SpeciesPair& pair, double t) {
  return HeatState{SpeciesPair(heat_evolve(pair.rho, t), heat_evolve(pair.eta, t), pair.exponents), t};
}

HeatState heat_evolve(const HeatState& state, double t) {
  HeatState next = heat_evolve(state.pair, t);
  next.elapsed = state.elapsed + t;
  return next;
}

double entropy(const DensityField& f) {
  double s = 0.0;
  for (double v : f.values()) {
    if (v >= 1e-300) s += v * std::log(v);
  }
  return f.grid().spacing() * s;
}

double entropy(const SpeciesPair& pair) { return entropy(pair.rho) + entropy(pair.eta); }

DissipationCheck dissipation_identity_check(const SpeciesPair& pair, double dt) {
  if (dt <= 0.0) dt = 1e-6 * pair.grid().length() * pair.grid().length();
  DissipationCheck c;
  const double e0 = energy(pair);
  const double e2 = energy(heat_evolve(pair, 2.0 * dt).pair);
  c.finite_difference = (e2 - e0) / (2.0 * dt);
  c.dissipation = heat_dissipation(heat_evolve(pair, dt).pair);
  const double scale = std::max(std::abs(c.finite_difference), std::abs(c.dissipation));
  c.gap = scale <= 1e-14 ? 0.0 : std::abs(c.finite_difference + c.dissipation) / scale;
  return c;
}

EviReport evi_check(const SpeciesPair& pair, const SpeciesPair& reference, std::span<const double> t_samples,
                    double width) {
  if (!(pair.grid() == reference.grid())) throw InvalidArgument("EVI check requires a shared grid");
  if (width <= 0.0) width = 1e-5 * pair.grid().length() * pair.grid().length();
  const double h_ref = entropy(reference);

  auto half_w2 = [&](const SpeciesPair& p) { return 0.5 * product_w2(p, reference).distance_sq; };

  EviReport rep;
  rep.worst_slack = std::numeric_limits<double>::infinity();
  for (double t : t_samples) {
    if (t < 0.0) throw InvalidArgument("EVI sample times must be nonnegative");
    const HeatState base = heat_evolve(pair, t);
    const double w0 = half_w2(base.pair);
    double d[3];
    for (int k = 0; k < 3; ++k) {
      const double dk = width / static_cast<double>(1 << k);
      d[k] = (half_w2(heat_evolve(base.pair, dk).pair) - w0) / dk;
    }
    // D(w) = D + a w + b w^2 + ...; eliminate the first two error terms.
    const double r1 = 2.0 * d[1] - d[0];
    const double r2 = 2.0 * d[2] - d[1];
    EviSample s;
    s.t = t;
    s.lhs = (4.0 * r2 - r1) / 3.0;
    s.rhs = h_ref - entropy(base.pair);
    s.slack = s.rhs - s.lhs;
    rep.worst_slack = std::min(rep.worst_slack, s.slack);
    rep.samples.push_back(s);
  }
  if (rep.samples.empty()) rep.worst_slack = 0.0;
  return rep;
}

}  // namespace rieszflow
