#pragma once

#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace bwe::fft {

using Complex = std::complex<double>;

namespace detail {
// Eigen::FFT caches twiddle plans per size; one instance per thread.
inline Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}
} // namespace detail

/// Real forward DFT, unnormalized. Returns n/2 + 1 bins.
inline std::vector<Complex> rfft(const std::vector<double>& x) {
  std::vector<Complex> out;
  detail::engine().fwd(out, x);
  return out;
}

/// Inverse of rfft for a real signal of length n (1/n scaling applied).
inline std::vector<double> irfft(const std::vector<Complex>& spec, std::size_t n) {
  std::vector<double> out;
  std::vector<Complex> in = spec;
  in.resize(n / 2 + 1);
  detail::engine().inv(out, in, static_cast<Eigen::Index>(n));
  out.resize(n);
  return out;
}

} // namespace bwe::fft
