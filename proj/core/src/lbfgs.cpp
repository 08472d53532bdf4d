#include "rieszflow/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "rieszflow/errors.hpp"

namespace rieszflow {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

struct Pair {
  std::vector<double> s, y;
  double rho;
};

// Two-loop recursion: d = -H g.
void direction(const std::deque<Pair>& mem, std::span<const double> g, double gamma, std::vector<double>& d) {
  d.assign(g.begin(), g.end());
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    alpha[k] = mem[k].rho * dot(mem[k].s, d);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= alpha[k] * mem[k].y[i];
  }
  for (double& v : d) v *= gamma;
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double beta = mem[k].rho * dot(mem[k].y, d);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += (alpha[k] - beta) * mem[k].s[i];
  }
  for (double& v : d) v = -v;
}

}  // namespace

bool project_nondecreasing(std::span<double> x) {
  const std::size_t n = x.size();
  if (n < 2) return false;
  bool sorted = true;
  for (std::size_t i = 1; i < n && sorted; ++i) sorted = x[i - 1] <= x[i];
  if (sorted) return false;

  std::vector<double> level;
  std::vector<std::size_t> count;
  level.reserve(n);
  count.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    level.push_back(x[i]);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t c = count.back() + count[count.size() - 2];
      const double v = (level.back() * static_cast<double>(count.back()) +
                        level[level.size() - 2] * static_cast<double>(count[count.size() - 2])) /
                       static_cast<double>(c);
      level.pop_back();
      count.pop_back();
      level.back() = v;
      count.back() = c;
    }
  }
  std::size_t i = 0;
  for (std::size_t b = 0; b < level.size(); ++b) {
    for (std::size_t k = 0; k < count[b]; ++k) x[i++] = level[b];
  }
  return true;
}

LbfgsReport minimize_lbfgs(std::vector<double>& x, const LbfgsObjective& objective, const LbfgsOptions& opt,
                           double initial_scale, const LbfgsProjection& projection) {
  if (opt.history < 1) throw InvalidArgument("L-BFGS history must be positive");
  if (!(initial_scale > 0.0)) throw InvalidArgument("initial inverse-Hessian scale must be positive");
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d;
  std::deque<Pair> mem;

  LbfgsReport rep;
  const auto f0 = objective(x, g);
  if (!f0) throw InvalidArgument("L-BFGS start point is infeasible");
  double f = *f0;
  double gamma = initial_scale;

  for (;;) {
    rep.gradient_norm = max_abs(g);
    rep.value = f;
    if (rep.gradient_norm <= opt.gradient_tol) {
      rep.converged = true;
      break;
    }
    if (rep.iterations >= opt.max_iterations) break;

    direction(mem, g, gamma, d);
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      mem.clear();
      gamma = initial_scale;
      direction(mem, g, gamma, d);
      slope = dot(g, d);
    }

    // Weak Wolfe search: contract on failed sufficient decrease (or an infeasible trial),
    // expand or bisect on failed curvature. A projected trial only needs sufficient decrease.
    double step = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    bool accepted = false;
    double f_new = 0.0;
    std::vector<double> x_lo, g_lo;
    double f_lo = 0.0;
    for (int bt = 0; bt <= opt.line_search.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      const bool projected = projection && projection(x_new);
      const auto val = objective(x_new, g_new);
      if (!val || *val > f + opt.line_search.armijo * step * slope) {
        hi = step;
        step = lo > 0.0 ? 0.5 * (lo + hi) : step * opt.line_search.shrink;
        continue;
      }
      if (projected || dot(g_new, d) >= opt.line_search.wolfe * slope) {
        f_new = *val;
        accepted = true;
        break;
      }
      lo = step;
      x_lo = x_new;
      g_lo = g_new;
      f_lo = *val;
      step = std::isinf(hi) ? 2.0 * step : 0.5 * (lo + hi);
    }
    if (!accepted && lo > 0.0) {
      x_new = x_lo;
      g_new = g_lo;
      f_new = f_lo;
      accepted = true;
    }
    if (!accepted) {
      if (mem.empty()) break;
      mem.clear();
      gamma = initial_scale;
      continue;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_new[i] - x[i];
      p.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    const double yy = dot(p.y, p.y);
    if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * yy) && sy > 0.0) {
      p.rho = 1.0 / sy;
      gamma = sy / yy;
      mem.push_back(std::move(p));
      if (static_cast<int>(mem.size()) > opt.history) mem.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    ++rep.iterations;
  }
  return rep;
}

}  // namespace rieszflow
