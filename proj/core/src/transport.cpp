#include "rieszflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "rieszflow/errors.hpp"

namespace rieszflow {

QuantileRepresentation quantile_representation(const DensityField& f, std::size_t levels) {
  if (levels == 0) throw InvalidArgument("quantile representation needs at least one level");
  const Grid& g = f.grid();
  const std::size_t n = g.size();
  QuantileRepresentation q;
  q.cdf.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) q.cdf[i + 1] = q.cdf[i] + g.spacing() * f[i];
  const double total = q.cdf[n];
  for (double& c : q.cdf) c /= total;
  q.cdf[n] = 1.0;

  q.quantiles.resize(levels);
  std::size_t i = 0;
  const double m = static_cast<double>(levels);
  for (std::size_t k = 0; k < levels; ++k) {
    const double u = (static_cast<double>(k) + 0.5) / m;
    // Smallest cell whose right-edge CDF reaches u.
    while (i + 1 < n && q.cdf[i + 1] < u) ++i;
    const double mass = q.cdf[i + 1] - q.cdf[i];
    const double frac = mass > 0.0 ? std::clamp((u - q.cdf[i]) / mass, 0.0, 1.0) : 0.0;
    q.quantiles[k] = g.edge(i) + frac * g.spacing();
  }
  return q;
}

W2Result w2_1d(const DensityField& mu, const DensityField& nu, std::size_t levels) {
  if (!(mu.grid() == nu.grid())) throw InvalidArgument("w2_1d requires a shared grid");
  if (levels == 0) levels = default_quantile_levels(mu.grid());
  W2Result r;
  r.source = quantile_representation(mu, levels).quantiles;
  r.target = quantile_representation(nu, levels).quantiles;
  r.distance_sq = w2_sq_sorted(r.source, r.target);
  r.distance = std::sqrt(r.distance_sq);
  return r;
}

double w2_sq_sorted(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("particle sets must be non-empty and equal in size");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

namespace {

struct Marginal {
  std::vector<std::size_t> index;
  std::vector<double> x;
  std::vector<double> mass;
  std::vector<double> log_mass;
};

Marginal support_of(const DensityField& f) {
  Marginal m;
  const Grid& g = f.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double w = g.spacing() * f[i];
    if (w > 1e-300) {
      m.index.push_back(i);
      m.x.push_back(g.center(i));
      m.mass.push_back(w);
      m.log_mass.push_back(std::log(w));
    }
  }
  double total = 0.0;
  for (double w : m.mass) total += w;
  for (std::size_t i = 0; i < m.mass.size(); ++i) {
    m.mass[i] /= total;
    m.log_mass[i] = std::log(m.mass[i]);
  }
  return m;
}

struct EntropicSolve {
  std::vector<double> f, g;
  double value = 0.0;     // dual objective <f, a> + <g, b>
  double violation = 0.0; // L1 row-marginal mismatch after the g-update
  int iterations = 0;
};

// Log-sum-exp over j of (pot[j] - cost(i, j)) / eps + log_w[j].
double soft_min(const std::vector<double>& xs_other, const std::vector<double>& pot,
                const std::vector<double>& log_w, double xi, double eps, std::vector<double>& scratch) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < xs_other.size(); ++j) {
    const double d = xi - xs_other[j];
    scratch[j] = (pot[j] - d * d) / eps + log_w[j];
    mx = std::max(mx, scratch[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < xs_other.size(); ++j) s += std::exp(scratch[j] - mx);
  return -eps * (mx + std::log(s));
}

double row_violation(const Marginal& a, const Marginal& b, const std::vector<double>& f, const std::vector<double>& g,
                     double eps) {
  double v = 0.0;
  for (std::size_t i = 0; i < a.x.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < b.x.size(); ++j) {
      const double d = a.x[i] - b.x[j];
      row += std::exp((f[i] + g[j] - d * d) / eps + a.log_mass[i] + b.log_mass[j]);
    }
    v += std::abs(row - a.mass[i]);
  }
  return v;
}

EntropicSolve solve_entropic(const Marginal& a, const Marginal& b, const SinkhornOptions& opt, int& budget) {
  double diameter = 0.0;
  const double lo = std::min(a.x.front(), b.x.front());
  const double hi = std::max(a.x.back(), b.x.back());
  diameter = (hi - lo) * (hi - lo);
  double eps = std::max(opt.epsilon, diameter);

  EntropicSolve s;
  s.f.assign(a.x.size(), 0.0);
  s.g.assign(b.x.size(), 0.0);
  std::vector<double> scratch(std::max(a.x.size(), b.x.size()));

  while (true) {
    const bool final_stage = eps <= opt.epsilon;
    const int stage_cap = final_stage ? budget : std::min(budget, 200);
    int it = 0;
    for (; it < stage_cap; ++it) {
      for (std::size_t i = 0; i < a.x.size(); ++i) s.f[i] = soft_min(b.x, s.g, b.log_mass, a.x[i], eps, scratch);
      for (std::size_t j = 0; j < b.x.size(); ++j) s.g[j] = soft_min(a.x, s.f, a.log_mass, b.x[j], eps, scratch);
      if ((it + 1) % 10 == 0 || it + 1 == stage_cap) {
        s.violation = row_violation(a, b, s.f, s.g, eps);
        if (s.violation <= (final_stage ? opt.tolerance : 1e-3)) {
          ++it;
          break;
        }
      }
    }
    budget -= it;
    s.iterations += it;
    if (final_stage) break;
    eps = std::max(opt.epsilon, eps * opt.anneal_factor);
    if (budget <= 0) break;
  }
  s.violation = row_violation(a, b, s.f, s.g, opt.epsilon);
  s.value = 0.0;
  for (std::size_t i = 0; i < a.x.size(); ++i) s.value += s.f[i] * a.mass[i];
  for (std::size_t j = 0; j < b.x.size(); ++j) s.value += s.g[j] * b.mass[j];
  return s;
}

}  // namespace

SinkhornResult sinkhorn_w2(const DensityField& mu, const DensityField& nu, const SinkhornOptions& opt) {
  if (!(opt.epsilon > 0.0)) throw InvalidArgument("Sinkhorn regularization must be positive");
  if (!(mu.grid() == nu.grid())) throw InvalidArgument("sinkhorn_w2 requires a shared grid");
  const Marginal a = support_of(mu);
  const Marginal b = support_of(nu);

  int budget = opt.max_iterations;
  const EntropicSolve ab = solve_entropic(a, b, opt, budget);
  auto check = [&](const EntropicSolve& s, const char* which) {
    if (!(s.violation <= opt.tolerance)) {
      throw ConvergenceError(std::string("Sinkhorn (") + which + ") did not converge, marginal violation " +
                                 std::to_string(s.violation),
                             s.violation);
    }
  };
  check(ab, "mu, nu");
  const EntropicSolve aa = solve_entropic(a, a, opt, budget);
  check(aa, "mu, mu");
  const EntropicSolve bb = solve_entropic(b, b, opt, budget);
  check(bb, "nu, nu");

  SinkhornResult r;
  r.iterations = ab.iterations + aa.iterations + bb.iterations;
  r.divergence = ab.value - 0.5 * (aa.value + bb.value);
  r.distance = std::sqrt(std::max(r.divergence, 0.0));

  TransportPlanEntropic& p = r.plan;
  p.rows = a.index;
  p.columns = b.index;
  p.epsilon = opt.epsilon;
  p.gamma.resize(a.x.size() * b.x.size());
  std::vector<double> col(b.x.size(), 0.0);
  double row_v = 0.0;
  for (std::size_t i = 0; i < a.x.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < b.x.size(); ++j) {
      const double d = a.x[i] - b.x[j];
      const double gij = std::exp((ab.f[i] + ab.g[j] - d * d) / opt.epsilon + a.log_mass[i] + b.log_mass[j]);
      p.gamma[i * b.x.size() + j] = gij;
      row += gij;
      col[j] += gij;
      r.plan_cost += gij * d * d;
    }
    row_v += std::abs(row - a.mass[i]);
  }
  double col_v = 0.0;
  for (std::size_t j = 0; j < b.x.size(); ++j) col_v += std::abs(col[j] - b.mass[j]);
  p.row_violation = row_v;
  p.column_violation = col_v;
  return r;
}

void write_plan_csv(std::ostream& out, const TransportPlanEntropic& plan) {
  out << "i,j,gamma\n";
  char buf[64];
  for (std::size_t i = 0; i < plan.rows.size(); ++i) {
    for (std::size_t j = 0; j < plan.columns.size(); ++j) {
      const double v = plan.at(i, j);
      if (v > 1e-14) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << plan.rows[i] << ',' << plan.columns[j] << ',' << buf << '\n';
      }
    }
  }
}

ProductDistance product_w2(const SpeciesPair& a, const SpeciesPair& b, std::size_t levels) {
  ProductDistance d;
  d.distance_sq = w2_1d(a.rho, b.rho, levels).distance_sq + w2_1d(a.eta, b.eta, levels).distance_sq;
  d.distance = std::sqrt(d.distance_sq);
  return d;
}

}  // namespace rieszflow
