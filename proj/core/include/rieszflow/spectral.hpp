#pragma once

// Discrete Fourier calculus on a Grid.
//
// Transforms approximate f^(xi) = int f(x) e^{-i x xi} dx by h * sum_j f_j e^{-i xi x_j}
// on the zero-padded periodic box of length L' = padding_factor * L, with
// xi_k = 2 pi k / L'. Homogeneous Sobolev quantities use
//
//   <f, g>_sigma = (1 / L') sum_k |xi_k|^{2 sigma} Re(f^_k conj(g^_k)),
//
// which is the Riemann sum of (1/2pi) int |xi|^{2 sigma} f^ conj(g^) dxi.
// The zero mode is dropped whenever sigma < 0 (and in every Riesz convolution);
// for sigma = 0 it is kept, for sigma > 0 its weight is zero anyway.

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "rieszflow/grid.hpp"

namespace rieszflow {

/// C_{d,sigma} = pi^{-d/2} 2^{-2 sigma} Gamma(d/2 - sigma) / Gamma(sigma), the
/// constant making C |x|^{-d + 2 sigma} the kernel with multiplier |xi|^{-2 sigma}.
double riesz_constant(int dimension, double order);

/// Modes of a grid function on the unpadded box, k = -n/2 ... n/2 - 1, using
/// the convention F_k = h sum_j f_j e^{+i xi_k x_j}.
class FourierField {
 public:
  FourierField(Grid grid, std::vector<std::complex<double>> modes);

  const Grid& grid() const noexcept { return grid_; }
  long min_index() const noexcept { return -static_cast<long>(grid_.size() / 2); }
  long max_index() const noexcept { return static_cast<long>(grid_.size() / 2) - 1; }
  double frequency(long k) const noexcept;
  std::complex<double> mode(long k) const;
  std::span<const std::complex<double>> modes() const noexcept { return modes_; }

 private:
  Grid grid_;
  std::vector<std::complex<double>> modes_;  // natural order, index k - min_index()
};

FourierField dft(const Grid& grid, std::span<const double> f);
inline FourierField dft(const DensityField& f) { return dft(f.grid(), f.values()); }
/// Inverse of dft. Throws if the result has an imaginary part above 1e-10 (relative).
std::vector<double> idft(const FourierField& modes);

/// K_sigma * f via the multiplier |xi|^{-2 sigma} on the padded box, restricted
/// to the grid. Requires 0 < sigma < 1/2.
std::vector<double> riesz_convolve(const Grid& grid, std::span<const double> f, double sigma);
inline std::vector<double> riesz_convolve(const DensityField& f, double sigma) {
  return riesz_convolve(f.grid(), f.values(), sigma);
}

/// d/dx (K_sigma * f), multiplier i xi |xi|^{-2 sigma}; Nyquist mode dropped.
std::vector<double> riesz_gradient(const Grid& grid, std::span<const double> f, double sigma);
inline std::vector<double> riesz_gradient(const DensityField& f, double sigma) {
  return riesz_gradient(f.grid(), f.values(), sigma);
}

/// Squared homogeneous Sobolev norm ||f||^2_{H^sigma}, sigma in (-1, 1].
double hs_norm(const Grid& grid, std::span<const double> f, double sigma);
/// Homogeneous Sobolev inner product <f, g>_sigma.
double hs_inner(const Grid& grid, std::span<const double> f, std::span<const double> g, double sigma);

/// F(rho, eta) = 1/2 ||rho||^2_{-s} + 1/2 ||eta||^2_{-r} + <rho, eta>_{-q}.
double energy(const SpeciesPair& pair);

/// ||rho||^2_{1-s} + ||eta||^2_{1-r} + 2 <rho, eta>_{1-q}: the rate at which F
/// decays along the heat flow.
double heat_dissipation(const SpeciesPair& pair);

/// Reusable evaluator of the interaction potentials
///   V_rho = K_s * rho + K_q * eta,   V_eta = K_r * eta + K_q * rho
/// and of F on one grid. Owns its transform buffers, so one instance must not
/// be shared between threads; separate instances are independent.
class InteractionOperator {
 public:
  InteractionOperator(const Grid& grid, const ExponentTriple& exponents);
  ~InteractionOperator();
  InteractionOperator(InteractionOperator&&) noexcept;
  InteractionOperator& operator=(InteractionOperator&&) noexcept;

  const Grid& grid() const noexcept;
  const ExponentTriple& exponents() const noexcept;

  /// Returns F(rho, eta). Potentials are written when the spans are non-empty.
  double evaluate(std::span<const double> rho, std::span<const double> eta, std::span<double> potential_rho = {},
                  std::span<double> potential_eta = {});

  /// Writes the potential gradients d/dx V_rho and d/dx V_eta on the grid.
  void gradients(std::span<const double> rho, std::span<const double> eta, std::span<double> grad_rho,
                 std::span<double> grad_eta);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rieszflow
