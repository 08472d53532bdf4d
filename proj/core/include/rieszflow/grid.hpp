#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rieszflow {

/// Uniform, cell-centered, periodic discretization of [origin, origin + L).
///
/// Cell i covers [origin + i*h, origin + (i+1)*h) and its quadrature node is
/// the cell center. The number of cells must be a power of two. Densities are
/// required to live in the admissible region: the inner half of the box when
/// convolutions are zero-padded (padding_factor >= 2), the whole periodic box
/// otherwise.
class Grid {
 public:
  Grid(std::size_t cells, double box_length, int padding_factor = 2);
  Grid(std::size_t cells, double box_length, double origin, int padding_factor);

  std::size_t size() const noexcept { return cells_; }
  double length() const noexcept { return length_; }
  double spacing() const noexcept { return spacing_; }
  double origin() const noexcept { return origin_; }
  int padding_factor() const noexcept { return padding_; }
  std::size_t padded_size() const noexcept { return cells_ * static_cast<std::size_t>(padding_); }

  double center(std::size_t i) const noexcept { return origin_ + (static_cast<double>(i) + 0.5) * spacing_; }
  double edge(std::size_t i) const noexcept { return origin_ + static_cast<double>(i) * spacing_; }
  std::vector<double> centers() const;

  double admissible_lo() const noexcept;
  double admissible_hi() const noexcept;
  bool admissible(double x) const noexcept { return x >= admissible_lo() && x <= admissible_hi(); }

  /// Same grid with a different padding policy.
  Grid with_padding(int padding_factor) const { return Grid(cells_, length_, origin_, padding_factor); }
  /// Same box with 2x the cells.
  Grid refined() const { return Grid(cells_ * 2, length_, origin_, padding_); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t cells_;
  double length_;
  double origin_;
  int padding_;
  double spacing_;
};

/// Order triple (s, r, q) of the self- and cross-interaction Riesz kernels.
struct ExponentTriple {
  double s = 0.3;
  double r = 0.3;
  double q = 0.35;

  friend bool operator==(const ExponentTriple&, const ExponentTriple&) = default;
};

/// First violated well-posedness constraint for the given dimension, if any:
/// 0 < s, r, q < min(1, d/2) and max(s/2, r/2) < q < min((s+1)/2, (r+1)/2).
std::optional<std::string> exponent_violation(const ExponentTriple& e, int dimension = 1);

/// Nonnegative grid function of unit mass.
class DensityField {
 public:
  /// Validates nonnegativity (values in [-1e-12, 0) are clamped to zero) and
  /// unit mass within 1e-12.
  DensityField(Grid grid, std::vector<double> values);

  /// Clamps tiny negatives and rescales to unit mass. Throws on zero mass.
  static DensityField normalized(Grid grid, std::vector<double> values);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// The two species sharing one grid, together with their kernel orders.
struct SpeciesPair {
  SpeciesPair(DensityField rho, DensityField eta, ExponentTriple exponents);

  const Grid& grid() const noexcept { return rho.grid(); }

  DensityField rho;
  DensityField eta;
  ExponentTriple exponents;
};

double integrate(const Grid& grid, std::span<const double> values);
inline double integrate(const DensityField& f) { return integrate(f.grid(), f.values()); }

/// (h * sum |f_i|^p)^(1/p); max |f_i| for p = infinity. Throws for p < 1.
double lp_norm(const Grid& grid, std::span<const double> values, double p);
inline double lp_norm(const DensityField& f, double p) { return lp_norm(f.grid(), f.values(), p); }

double first_moment(const DensityField& f);
double second_moment(const DensityField& f);

/// Order of the particle-to-grid assignment function.
enum class Deposition {
  cloud_in_cell,  ///< linear hat, support 2h
  cubic_bspline,  ///< cubic B-spline, support 4h, C^2 in the particle position
};

/// Mass-conserving deposition of M equal-mass particles (mass 1/M each).
/// Throws InvalidArgument if a particle lies outside the admissible region.
DensityField deposit_particles(std::span<const double> positions, const Grid& grid,
                               Deposition kind = Deposition::cloud_in_cell);

/// Density of the piecewise-linear quantile function through the points
/// ((m - 1/2)/M, X_m), extended linearly to u = 0 and u = 1, averaged over cells.
/// This is the exact inverse of quantile sampling and carries no particle noise.
DensityField reconstruct_from_particles(std::span<const double> sorted_positions, const Grid& grid);

/// CSV with header "x,value". Extra named columns are appended when given.
void write_density_csv(std::ostream& out, const Grid& grid, std::span<const double> values,
                       const std::string& role = {});
void write_density_csv(const std::string& path, const Grid& grid, std::span<const double> values,
                       const std::string& role = {});
/// Reads "x,value" CSV written on the same grid; values are renormalized.
DensityField read_density_csv(const std::string& path, const Grid& grid);

/// Little-endian binary dump: uint64 n, float64 L, then n float64 values.
void write_density_binary(const std::string& path, const DensityField& f);
DensityField read_density_binary(const std::string& path, double origin, int padding_factor = 2);

}  // namespace rieszflow
