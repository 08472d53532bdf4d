#pragma once

// Thin RAII layer over FFTW. Plans are created once per size under a lock and
// shared; execution uses the new-array API on caller-owned buffers, so any
// number of threads may transform concurrently.

#include <complex>
#include <cstddef>
#include <span>

namespace rieszflow::detail {

template <class T>
class FftwBuffer {
 public:
  explicit FftwBuffer(std::size_t count);
  ~FftwBuffer();
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  FftwBuffer(FftwBuffer&& other) noexcept : data_(other.data_), size_(other.size_) {
    other.data_ = nullptr;
    other.size_ = 0;
  }

  T* data() noexcept { return data_; }
  const T* data() const noexcept { return data_; }
  std::size_t size() const noexcept { return size_; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  std::span<T> span() noexcept { return {data_, size_}; }
  std::span<const T> span() const noexcept { return {data_, size_}; }

 private:
  T* data_;
  std::size_t size_;
};

using RealBuffer = FftwBuffer<double>;
using ComplexBuffer = FftwBuffer<std::complex<double>>;

/// Unnormalized real transforms of length n: forward uses e^{-i k x}, the
/// spectrum holds n/2 + 1 modes.
void forward_real(std::size_t n, RealBuffer& in, ComplexBuffer& out);
/// Inverse of forward_real without the 1/n factor; destroys `in`.
void backward_real(std::size_t n, ComplexBuffer& in, RealBuffer& out);
/// Unnormalized complex transform with kernel e^{+i k j 2 pi / n}.
void complex_plus(std::size_t n, ComplexBuffer& in, ComplexBuffer& out);
/// Unnormalized complex transform with kernel e^{-i k j 2 pi / n}.
void complex_minus(std::size_t n, ComplexBuffer& in, ComplexBuffer& out);

}  // namespace rieszflow::detail
