#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <new>
#include <tuple>

namespace rieszflow::detail {

template <class T>
FftwBuffer<T>::FftwBuffer(std::size_t count) : data_(nullptr), size_(count) {
  data_ = static_cast<T*>(fftw_malloc(sizeof(T) * (count == 0 ? 1 : count)));
  if (data_ == nullptr) throw std::bad_alloc();
  for (std::size_t i = 0; i < count; ++i) data_[i] = T{};
}

template <class T>
FftwBuffer<T>::~FftwBuffer() {
  if (data_ != nullptr) fftw_free(data_);
}

template class FftwBuffer<double>;
template class FftwBuffer<std::complex<double>>;

namespace {

enum class Kind { r2c, c2r, plus, minus };

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// Plans live for the lifetime of the process.
fftw_plan plan_for(Kind kind, std::size_t n) {
  static std::map<std::tuple<Kind, std::size_t>, fftw_plan> plans;
  std::lock_guard lock(plan_mutex());
  auto key = std::make_tuple(kind, n);
  if (auto it = plans.find(key); it != plans.end()) return it->second;

  const int ni = static_cast<int>(n);
  RealBuffer r(n);
  ComplexBuffer c(n);
  ComplexBuffer c2(n);
  auto* cr = reinterpret_cast<fftw_complex*>(c.data());
  auto* cr2 = reinterpret_cast<fftw_complex*>(c2.data());
  fftw_plan p = nullptr;
  switch (kind) {
    case Kind::r2c: p = fftw_plan_dft_r2c_1d(ni, r.data(), cr, FFTW_ESTIMATE); break;
    case Kind::c2r: p = fftw_plan_dft_c2r_1d(ni, cr, r.data(), FFTW_ESTIMATE); break;
    case Kind::plus: p = fftw_plan_dft_1d(ni, cr, cr2, FFTW_BACKWARD, FFTW_ESTIMATE); break;
    case Kind::minus: p = fftw_plan_dft_1d(ni, cr, cr2, FFTW_FORWARD, FFTW_ESTIMATE); break;
  }
  if (p == nullptr) throw std::bad_alloc();
  plans.emplace(key, p);
  return p;
}

fftw_complex* as_fftw(ComplexBuffer& b) { return reinterpret_cast<fftw_complex*>(b.data()); }

}  // namespace

void forward_real(std::size_t n, RealBuffer& in, ComplexBuffer& out) {
  fftw_execute_dft_r2c(plan_for(Kind::r2c, n), in.data(), as_fftw(out));
}

void backward_real(std::size_t n, ComplexBuffer& in, RealBuffer& out) {
  fftw_execute_dft_c2r(plan_for(Kind::c2r, n), as_fftw(in), out.data());
}

void complex_plus(std::size_t n, ComplexBuffer& in, ComplexBuffer& out) {
  fftw_execute_dft(plan_for(Kind::plus, n), as_fftw(in), as_fftw(out));
}

void complex_minus(std::size_t n, ComplexBuffer& in, ComplexBuffer& out) {
  fftw_execute_dft(plan_for(Kind::minus, n), as_fftw(in), as_fftw(out));
}

}  // namespace rieszflow::detail
