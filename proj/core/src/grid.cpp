#include "rieszflow/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "rieszflow/errors.hpp"

namespace rieszflow {

namespace {

constexpr double kNegativeFloor = -1e-12;
constexpr double kMassTolerance = 1e-12;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void clamp_floor(std::vector<double>& values) {
  for (double& v : values) {
    if (!(v >= kNegativeFloor)) {
      throw InvalidArgument("density value " + fmt_double(v) + " is negative");
    }
    if (v < 0.0) v = 0.0;
  }
}

}  // namespace

Grid::Grid(std::size_t cells, double box_length, int padding_factor)
    : Grid(cells, box_length, -0.5 * box_length, padding_factor) {}

Grid::Grid(std::size_t cells, double box_length, double origin, int padding_factor)
    : cells_(cells), length_(box_length), origin_(origin), padding_(padding_factor), spacing_(0.0) {
  if (cells < 2 || !std::has_single_bit(cells)) {
    throw InvalidArgument("grid size must be a power of two >= 2, got " + std::to_string(cells));
  }
  if (!(box_length > 0.0) || !std::isfinite(box_length)) {
    throw InvalidArgument("box length must be positive and finite");
  }
  if (!std::isfinite(origin)) throw InvalidArgument("grid origin must be finite");
  if (padding_factor < 1) throw InvalidArgument("padding factor must be >= 1");
  spacing_ = box_length / static_cast<double>(cells);
}

std::vector<double> Grid::centers() const {
  std::vector<double> x(cells_);
  for (std::size_t i = 0; i < cells_; ++i) x[i] = center(i);
  return x;
}

double Grid::admissible_lo() const noexcept {
  return padding_ >= 2 ? origin_ + 0.25 * length_ : origin_;
}

double Grid::admissible_hi() const noexcept {
  return padding_ >= 2 ? origin_ + 0.75 * length_ : origin_ + length_;
}

std::optional<std::string> exponent_violation(const ExponentTriple& e, int dimension) {
  const double upper = std::min(1.0, 0.5 * dimension);
  const std::pair<const char*, double> orders[] = {{"s", e.s}, {"r", e.r}, {"q", e.q}};
  for (const auto& [name, value] : orders) {
    if (!(value > 0.0) || !(value < upper)) {
      return std::string(name) + " = " + fmt_double(value) + " must lie in (0, min{1, d/2}) = (0, " +
             fmt_double(upper) + ")";
    }
  }
  const double q_lo = std::max(e.s / 2.0, e.r / 2.0);
  const double q_hi = std::min((e.s + 1.0) / 2.0, (e.r + 1.0) / 2.0);
  if (!(e.q > q_lo)) {
    return "q = " + fmt_double(e.q) + " must exceed max{s/2, r/2} = " + fmt_double(q_lo);
  }
  if (!(e.q < q_hi)) {
    return "q = " + fmt_double(e.q) + " must be below min{(s+1)/2, (r+1)/2} = " + fmt_double(q_hi);
  }
  return std::nullopt;
}

DensityField::DensityField(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw InvalidArgument("density has " + std::to_string(values_.size()) + " values for a grid of " +
                          std::to_string(grid_.size()) + " cells");
  }
  clamp_floor(values_);
  const double mass = integrate(grid_, values_);
  if (std::abs(mass - 1.0) > kMassTolerance) {
    throw InvalidArgument("density mass " + fmt_double(mass) + " differs from 1");
  }
}

DensityField DensityField::normalized(Grid grid, std::vector<double> values) {
  if (values.size() != grid.size()) throw InvalidArgument("density size does not match grid");
  clamp_floor(values);
  const double mass = integrate(grid, values);
  if (!(mass > 0.0) || !std::isfinite(mass)) throw InvalidArgument("cannot normalize a field of zero mass");
  for (double& v : values) v /= mass;
  return DensityField(std::move(grid), std::move(values));
}

SpeciesPair::SpeciesPair(DensityField rho_in, DensityField eta_in, ExponentTriple exps)
    : rho(std::move(rho_in)), eta(std::move(eta_in)), exponents(exps) {
  if (!(rho.grid() == eta.grid())) throw InvalidArgument("species must share one grid");
}

double integrate(const Grid& grid, std::span<const double> values) {
  return grid.spacing() * std::accumulate(values.begin(), values.end(), 0.0);
}

double lp_norm(const Grid& grid, std::span<const double> values, double p) {
  if (!(p >= 1.0)) throw InvalidArgument("L^p norm requires p >= 1");
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  double acc = 0.0;
  for (double v : values) acc += std::pow(std::abs(v), p);
  return std::pow(grid.spacing() * acc, 1.0 / p);
}

double first_moment(const DensityField& f) {
  const Grid& g = f.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) acc += g.center(i) * f[i];
  return g.spacing() * acc;
}

double second_moment(const DensityField& f) {
  const Grid& g = f.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.center(i);
    acc += x * x * f[i];
  }
  return g.spacing() * acc;
}

DensityField deposit_particles(std::span<const double> positions, const Grid& grid, Deposition kind) {
  if (positions.empty()) throw InvalidArgument("cannot deposit an empty particle set");
  const std::size_t n = grid.size();
  const auto ni = static_cast<std::ptrdiff_t>(n);
  const double h = grid.spacing();
  const double x0 = grid.center(0);
  const double weight = 1.0 / (static_cast<double>(positions.size()) * h);
  const bool periodic = grid.padding_factor() == 1;
  std::vector<double> rho(n, 0.0);

  auto add = [&](std::ptrdiff_t i, double w) {
    if (periodic) {
      i = ((i % ni) + ni) % ni;
    } else if (i < 0 || i >= ni) {
      throw InvalidArgument("particle deposition left the grid");
    }
    rho[static_cast<std::size_t>(i)] += w * weight;
  };

  for (double x : positions) {
    if (!grid.admissible(x)) {
      throw InvalidArgument("particle at x = " + fmt_double(x) + " lies outside the admissible region [" +
                            fmt_double(grid.admissible_lo()) + ", " + fmt_double(grid.admissible_hi()) + "]");
    }
    const double t = (x - x0) / h;
    const double fl = std::floor(t);
    const double f = t - fl;
    const auto i0 = static_cast<std::ptrdiff_t>(fl);
    if (kind == Deposition::cloud_in_cell) {
      add(i0, 1.0 - f);
      add(i0 + 1, f);
    } else {
      const double g = 1.0 - f;
      add(i0 - 1, g * g * g / 6.0);
      add(i0, (3.0 * f * f * f - 6.0 * f * f + 4.0) / 6.0);
      add(i0 + 1, (-3.0 * f * f * f + 3.0 * f * f + 3.0 * f + 1.0) / 6.0);
      add(i0 + 2, f * f * f / 6.0);
    }
  }
  return DensityField::normalized(grid, std::move(rho));
}

DensityField reconstruct_from_particles(std::span<const double> x, const Grid& grid) {
  const std::size_t m = x.size();
  if (m == 0) throw InvalidArgument("cannot reconstruct from an empty particle set");
  for (std::size_t i = 0; i < m; ++i) {
    if (!grid.admissible(x[i])) {
      throw InvalidArgument("particle at x = " + fmt_double(x[i]) + " lies outside the admissible region");
    }
    if (i > 0 && x[i] < x[i - 1]) throw InvalidArgument("particle positions must be sorted");
  }
  const std::size_t n = grid.size();
  std::vector<double> rho(n, 0.0);
  if (m == 1) {
    const auto i = static_cast<std::size_t>(std::clamp((x[0] - grid.origin()) / grid.spacing(), 0.0,
                                                       static_cast<double>(n - 1)));
    rho[i] = 1.0 / grid.spacing();
    return DensityField::normalized(grid, std::move(rho));
  }

  // Knots of the piecewise-linear CDF.
  const double mm = static_cast<double>(m);
  std::vector<double> xs(m + 2), us(m + 2);
  xs[0] = x[0] - 0.5 * (x[1] - x[0]);
  us[0] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    xs[i + 1] = x[i];
    us[i + 1] = (static_cast<double>(i) + 0.5) / mm;
  }
  xs[m + 1] = x[m - 1] + 0.5 * (x[m - 1] - x[m - 2]);
  us[m + 1] = 1.0;
  if (xs[0] < grid.origin() || xs[m + 1] > grid.origin() + grid.length()) {
    throw InvalidArgument("reconstructed support leaves the box");
  }

  std::vector<double> cdf(n + 1);
  std::size_t j = 0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double e = grid.edge(i);
    if (e <= xs[0]) {
      cdf[i] = 0.0;
      continue;
    }
    if (e >= xs[m + 1]) {
      cdf[i] = 1.0;
      continue;
    }
    while (j + 1 < m + 2 && xs[j + 1] <= e) ++j;
    const double dx = xs[j + 1] - xs[j];
    cdf[i] = us[j] + (e - xs[j]) / dx * (us[j + 1] - us[j]);
  }
  for (std::size_t i = 0; i < n; ++i) rho[i] = std::max(0.0, cdf[i + 1] - cdf[i]) / grid.spacing();
  return DensityField::normalized(grid, std::move(rho));
}

void write_density_csv(std::ostream& out, const Grid& grid, std::span<const double> values, const std::string& role) {
  if (values.size() != grid.size()) throw InvalidArgument("field size does not match grid");
  out << (role.empty() ? "x,value\n" : "x,value,role\n");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out << fmt_double(grid.center(i)) << ',' << fmt_double(values[i]);
    if (!role.empty()) out << ',' << role;
    out << '\n';
  }
}

void write_density_csv(const std::string& path, const Grid& grid, std::span<const double> values,
                       const std::string& role) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_density_csv(out, grid, values, role);
  if (!out) throw IoError("failed writing " + path);
}

DensityField read_density_csv(const std::string& path, const Grid& grid) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,value", 0) != 0) {
    throw IoError(path + ": missing 'x,value' header");
  }
  std::vector<double> values;
  values.reserve(grid.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string xs, vs;
    if (!std::getline(ss, xs, ',') || !std::getline(ss, vs, ',')) {
      throw IoError(path + ": malformed row " + std::to_string(row + 1));
    }
    double x = 0.0, v = 0.0;
    try {
      x = std::stod(xs);
      v = std::stod(vs);
    } catch (const std::exception&) {
      throw IoError(path + ": non-numeric row " + std::to_string(row + 1));
    }
    if (row >= grid.size() || std::abs(x - grid.center(row)) > 1e-9 * std::max(1.0, grid.length())) {
      throw IoError(path + ": row " + std::to_string(row + 1) + " does not match the grid");
    }
    values.push_back(v);
    ++row;
  }
  if (values.size() != grid.size()) throw IoError(path + ": expected " + std::to_string(grid.size()) + " rows");
  return DensityField::normalized(grid, std::move(values));
}

namespace {

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError("truncated binary density");
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace

void write_density_binary(const std::string& path, const DensityField& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  put_le<std::uint64_t>(out, f.size());
  put_le<double>(out, f.grid().length());
  for (double v : f.values()) put_le<double>(out, v);
  if (!out) throw IoError("failed writing " + path);
}

DensityField read_density_binary(const std::string& path, double origin, int padding_factor) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const auto n = get_le<std::uint64_t>(in);
  const auto length = get_le<double>(in);
  if (n > (std::uint64_t{1} << 32)) throw IoError(path + ": implausible grid size");
  std::vector<double> values(n);
  for (auto& v : values) v = get_le<double>(in);
  return DensityField(Grid(static_cast<std::size_t>(n), length, origin, padding_factor), std::move(values));
}

}  // namespace rieszflow
