#include "rieszflow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fft.hpp"
#include "rieszflow/errors.hpp"

namespace rieszflow {

using detail::ComplexBuffer;
using detail::RealBuffer;
using cplx = std::complex<double>;

namespace {

void check_convolution_order(double sigma) {
  if (!(sigma > 0.0) || !(sigma < 0.5)) {
    throw InvalidArgument("Riesz order " + std::to_string(sigma) + " outside (0, 1/2) for d = 1");
  }
}

void check_sobolev_order(double sigma) {
  if (!(sigma > -1.0) || !(sigma <= 1.0)) {
    throw InvalidArgument("Sobolev order " + std::to_string(sigma) + " outside (-1, 1]");
  }
}

void check_size(const Grid& grid, std::span<const double> f) {
  if (f.size() != grid.size()) throw InvalidArgument("field size does not match grid");
}

// Frequency of half-spectrum index k on a periodic box of length period.
double wavenumber(std::size_t k, double period) { return 2.0 * std::numbers::pi * static_cast<double>(k) / period; }

// Weight of |xi|^{2 sigma} with the zero-mode convention.
double sobolev_weight(double xi, double sigma) {
  if (xi == 0.0) return sigma == 0.0 ? 1.0 : 0.0;
  return std::pow(xi, 2.0 * sigma);
}

// Zero-padded forward transform of f; returns N/2 + 1 modes of h * FFT(f).
struct PaddedSpectrum {
  std::size_t size;    // padded length N
  double period;       // N h
  ComplexBuffer modes;
};

PaddedSpectrum padded_spectrum(const Grid& grid, std::span<const double> f) {
  const std::size_t n = grid.padded_size();
  RealBuffer in(n);
  std::copy(f.begin(), f.end(), in.data());
  PaddedSpectrum out{n, grid.spacing() * static_cast<double>(n), ComplexBuffer(n / 2 + 1)};
  detail::forward_real(n, in, out.modes);
  for (std::size_t k = 0; k < out.modes.size(); ++k) out.modes[k] *= grid.spacing();
  return out;
}

// Applies a real radial multiplier (optionally times i xi) and transforms back,
// keeping the first grid.size() samples.
template <class Multiplier>
std::vector<double> apply_multiplier(const Grid& grid, std::span<const double> f, Multiplier&& m, bool derivative) {
  PaddedSpectrum spec = padded_spectrum(grid, f);
  const std::size_t n = spec.size;
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k <= half; ++k) {
    const double xi = wavenumber(k, spec.period);
    cplx factor = k == 0 ? cplx(0.0) : cplx(m(xi));
    if (derivative) factor *= (k == half) ? cplx(0.0) : cplx(0.0, xi);
    spec.modes[k] *= factor;
  }
  RealBuffer out(n);
  detail::backward_real(n, spec.modes, out);
  std::vector<double> result(grid.size());
  const double scale = 1.0 / spec.period;
  for (std::size_t i = 0; i < grid.size(); ++i) result[i] = out[i] * scale;
  return result;
}

// (1 / L') sum over the full spectrum of w(xi_k) Re(f^_k conj(g^_k)) from half spectra.
template <class Weight>
double spectral_pairing(const PaddedSpectrum& f, const PaddedSpectrum& g, Weight&& w) {
  const std::size_t half = f.size / 2;
  double acc = 0.0;
  for (std::size_t k = 0; k <= half; ++k) {
    const double xi = wavenumber(k, f.period);
    const double weight = w(xi);
    if (weight == 0.0) continue;
    const double term = weight * (f.modes[k] * std::conj(g.modes[k])).real();
    acc += (k == 0 || k == half) ? term : 2.0 * term;
  }
  return acc / f.period;
}

}  // namespace

double riesz_constant(int dimension, double order) {
  const double d = static_cast<double>(dimension);
  return std::pow(std::numbers::pi, -0.5 * d) * std::pow(2.0, -2.0 * order) * std::tgamma(0.5 * d - order) /
         std::tgamma(order);
}

FourierField::FourierField(Grid grid, std::vector<cplx> modes) : grid_(std::move(grid)), modes_(std::move(modes)) {
  if (modes_.size() != grid_.size()) throw InvalidArgument("mode count does not match grid");
}

double FourierField::frequency(long k) const noexcept {
  return 2.0 * std::numbers::pi * static_cast<double>(k) / grid_.length();
}

cplx FourierField::mode(long k) const {
  if (k < min_index() || k > max_index()) throw InvalidArgument("frequency index out of range");
  return modes_[static_cast<std::size_t>(k - min_index())];
}

FourierField dft(const Grid& grid, std::span<const double> f) {
  check_size(grid, f);
  const std::size_t n = grid.size();
  ComplexBuffer in(n), out(n);
  for (std::size_t j = 0; j < n; ++j) in[j] = f[j];
  detail::complex_plus(n, in, out);
  const auto half = static_cast<long>(n / 2);
  const double x0 = grid.center(0);
  std::vector<cplx> modes(n);
  for (long k = -half; k < half; ++k) {
    const std::size_t slot = static_cast<std::size_t>((k + static_cast<long>(n)) % static_cast<long>(n));
    const double xi = 2.0 * std::numbers::pi * static_cast<double>(k) / grid.length();
    modes[static_cast<std::size_t>(k + half)] = grid.spacing() * std::polar(1.0, xi * x0) * out[slot];
  }
  return FourierField(grid, std::move(modes));
}

std::vector<double> idft(const FourierField& field) {
  const Grid& grid = field.grid();
  const std::size_t n = grid.size();
  const auto half = static_cast<long>(n / 2);
  const double x0 = grid.center(0);
  ComplexBuffer in(n), out(n);
  double scale_ref = 0.0;
  for (long k = -half; k < half; ++k) {
    const std::size_t slot = static_cast<std::size_t>((k + static_cast<long>(n)) % static_cast<long>(n));
    const double xi = field.frequency(k);
    in[slot] = field.mode(k) * std::polar(1.0, -xi * x0);
    scale_ref = std::max(scale_ref, std::abs(in[slot]));
  }
  detail::complex_minus(n, in, out);
  std::vector<double> f(n);
  double worst_imag = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    f[j] = out[j].real() / grid.length();
    worst_imag = std::max(worst_imag, std::abs(out[j].imag()) / grid.length());
  }
  if (worst_imag > 1e-10 * std::max(1.0, scale_ref / grid.length())) {
    throw InvalidArgument("inverse transform is not real: modes are not Hermitian");
  }
  return f;
}

std::vector<double> riesz_convolve(const Grid& grid, std::span<const double> f, double sigma) {
  check_size(grid, f);
  check_convolution_order(sigma);
  return apply_multiplier(grid, f, [sigma](double xi) { return std::pow(xi, -2.0 * sigma); }, false);
}

std::vector<double> riesz_gradient(const Grid& grid, std::span<const double> f, double sigma) {
  check_size(grid, f);
  check_convolution_order(sigma);
  return apply_multiplier(grid, f, [sigma](double xi) { return std::pow(xi, -2.0 * sigma); }, true);
}

double hs_norm(const Grid& grid, std::span<const double> f, double sigma) {
  check_size(grid, f);
  check_sobolev_order(sigma);
  const PaddedSpectrum spec = padded_spectrum(grid, f);
  return spectral_pairing(spec, spec, [sigma](double xi) { return sobolev_weight(xi, sigma); });
}

double hs_inner(const Grid& grid, std::span<const double> f, std::span<const double> g, double sigma) {
  check_size(grid, f);
  check_size(grid, g);
  check_sobolev_order(sigma);
  const PaddedSpectrum fs = padded_spectrum(grid, f);
  const PaddedSpectrum gs = padded_spectrum(grid, g);
  return spectral_pairing(fs, gs, [sigma](double xi) { return sobolev_weight(xi, sigma); });
}

double energy(const SpeciesPair& pair) {
  InteractionOperator op(pair.grid(), pair.exponents);
  return op.evaluate(pair.rho.values(), pair.eta.values());
}

double heat_dissipation(const SpeciesPair& pair) {
  const Grid& grid = pair.grid();
  const ExponentTriple& e = pair.exponents;
  const PaddedSpectrum rs = padded_spectrum(grid, pair.rho.values());
  const PaddedSpectrum es = padded_spectrum(grid, pair.eta.values());
  auto w = [](double sigma) { return [sigma](double xi) { return sobolev_weight(xi, sigma); }; };
  return spectral_pairing(rs, rs, w(1.0 - e.s)) + spectral_pairing(es, es, w(1.0 - e.r)) +
         2.0 * spectral_pairing(rs, es, w(1.0 - e.q));
}

struct InteractionOperator::Impl {
  Impl(const Grid& g, const ExponentTriple& e)
      : grid(g),
        exponents(e),
        n(g.padded_size()),
        period(g.spacing() * static_cast<double>(g.padded_size())),
        m_s(n / 2 + 1),
        m_r(n / 2 + 1),
        m_q(n / 2 + 1),
        xi(n / 2 + 1),
        real_in(n),
        real_out(n),
        rho_hat(n / 2 + 1),
        eta_hat(n / 2 + 1),
        work(n / 2 + 1) {
    check_convolution_order(e.s);
    check_convolution_order(e.r);
    check_convolution_order(e.q);
    for (std::size_t k = 0; k <= n / 2; ++k) {
      xi[k] = wavenumber(k, period);
      const bool zero = (k == 0);
      m_s[k] = zero ? 0.0 : std::pow(xi[k], -2.0 * e.s);
      m_r[k] = zero ? 0.0 : std::pow(xi[k], -2.0 * e.r);
      m_q[k] = zero ? 0.0 : std::pow(xi[k], -2.0 * e.q);
    }
  }

  void transform(std::span<const double> f, ComplexBuffer& out) {
    if (f.size() != grid.size()) throw InvalidArgument("field size does not match grid");
    std::fill(real_in.data(), real_in.data() + n, 0.0);
    std::copy(f.begin(), f.end(), real_in.data());
    detail::forward_real(n, real_in, out);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= grid.spacing();
  }

  // work <- a * rho_hat + b * eta_hat (times i xi when derivative), then back to grid.
  void synthesize(const std::vector<double>& a, const std::vector<double>& b, bool derivative, std::span<double> out) {
    const std::size_t half = n / 2;
    for (std::size_t k = 0; k <= half; ++k) {
      cplx v = a[k] * rho_hat[k] + b[k] * eta_hat[k];
      if (derivative) v *= (k == half) ? cplx(0.0) : cplx(0.0, xi[k]);
      work[k] = v;
    }
    detail::backward_real(n, work, real_out);
    const double scale = 1.0 / period;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = real_out[i] * scale;
  }

  double spectral_energy() const {
    const std::size_t half = n / 2;
    double acc = 0.0;
    for (std::size_t k = 1; k <= half; ++k) {
      const double term = 0.5 * m_s[k] * std::norm(rho_hat[k]) + 0.5 * m_r[k] * std::norm(eta_hat[k]) +
                          m_q[k] * (rho_hat[k] * std::conj(eta_hat[k])).real();
      acc += (k == half) ? term : 2.0 * term;
    }
    return acc / period;
  }

  Grid grid;
  ExponentTriple exponents;
  std::size_t n;
  double period;
  std::vector<double> m_s, m_r, m_q, xi;
  RealBuffer real_in, real_out;
  ComplexBuffer rho_hat, eta_hat, work;
};

InteractionOperator::InteractionOperator(const Grid& grid, const ExponentTriple& exponents)
    : impl_(std::make_unique<Impl>(grid, exponents)) {}
InteractionOperator::~InteractionOperator() = default;
InteractionOperator::InteractionOperator(InteractionOperator&&) noexcept = default;
InteractionOperator& InteractionOperator::operator=(InteractionOperator&&) noexcept = default;

const Grid& InteractionOperator::grid() const noexcept { return impl_->grid; }
const ExponentTriple& InteractionOperator::exponents() const noexcept { return impl_->exponents; }

double InteractionOperator::evaluate(std::span<const double> rho, std::span<const double> eta,
                                     std::span<double> potential_rho, std::span<double> potential_eta) {
  Impl& m = *impl_;
  m.transform(rho, m.rho_hat);
  m.transform(eta, m.eta_hat);
  const double f = m.spectral_energy();
  if (!potential_rho.empty()) m.synthesize(m.m_s, m.m_q, false, potential_rho.first(m.grid.size()));
  if (!potential_eta.empty()) m.synthesize(m.m_q, m.m_r, false, potential_eta.first(m.grid.size()));
  return f;
}

void InteractionOperator::gradients(std::span<const double> rho, std::span<const double> eta,
                                    std::span<double> grad_rho, std::span<double> grad_eta) {
  Impl& m = *impl_;
  m.transform(rho, m.rho_hat);
  m.transform(eta, m.eta_hat);
  m.synthesize(m.m_s, m.m_q, true, grad_rho.first(m.grid.size()));
  m.synthesize(m.m_q, m.m_r, true, grad_eta.first(m.grid.size()));
}

}  // namespace rieszflow
