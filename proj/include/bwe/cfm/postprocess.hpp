#pragma once

#include <array>
#include <cmath>
#include <complex>

#include "../dsp.hpp"
#include "../error.hpp"

namespace bwe::cfm {

/// Input weights of the bins just above the cutoff bin.
inline constexpr std::array<double, 3> kCrossfade = {0.75, 0.5, 0.25};

/// Highest bin whose center frequency is <= f_c.
inline Eigen::Index cutoff_bin(double f_c, double bin_hz) {
  return static_cast<Eigen::Index>(std::floor(f_c / bin_hz + 1e-9));
}

/// Splices the input spectrum (magnitude and phase) up to f_c into the
/// restored spectrum, with a 3-bin linear crossfade above the cutoff bin.
inline Spectrogram postprocess_band_copy(const Spectrogram& restored, const Spectrogram& input, double f_c) {
  require(same_shape(restored.mags, input.mags), ErrorKind::ShapeMismatch, "band copy: spectrogram shapes differ");
  require(restored.phases.has_value() && input.phases.has_value(), "band copy: both spectrograms need phases");
  require(f_c >= 0.0 && f_c <= input.nyquist() + 1e-9, "band copy: cutoff must lie in [0, Nyquist]");

  const Eigen::Index kc = cutoff_bin(f_c, input.bin_hz());
  Spectrogram out = restored;
  Grid& mags = out.mags;
  Grid& ph = *out.phases;
  for (Eigen::Index f = 0; f < input.frames(); ++f) {
    for (Eigen::Index k = 0; k < input.bins() && k <= kc + 3; ++k) {
      if (k <= kc) {
        mags(f, k) = input.mags(f, k);
        ph(f, k) = (*input.phases)(f, k);
        continue;
      }
      const double a = kCrossfade[static_cast<std::size_t>(k - kc - 1)];
      const std::complex<double> z = a * std::polar(input.mags(f, k), (*input.phases)(f, k)) +
                                     (1.0 - a) * std::polar(restored.mags(f, k), (*restored.phases)(f, k));
      mags(f, k) = std::abs(z);
      ph(f, k) = std::arg(z);
    }
  }
  return out;
}

/// Griffin-Lim on the band-copied magnitudes with the phases at or below
/// f_c pinned to the input. Returns `high_mags` with the refined phases.
inline Spectrogram refine_phase(const Grid& high_mags, const Spectrogram& input, double f_c, int iters,
                                double momentum = 0.99) {
  require(same_shape(high_mags, input.mags), ErrorKind::ShapeMismatch, "refine_phase: shape mismatch");
  require(input.phases.has_value(), "refine_phase: input needs phases");
  require(iters >= 0, "refine_phase: iteration count must be >= 0");

  const Eigen::Index kc = cutoff_bin(f_c, input.bin_hz());
  Spectrogram work = input;
  for (Eigen::Index f = 0; f < input.frames(); ++f)
    for (Eigen::Index k = kc + 1; k < input.bins(); ++k) work.mags(f, k) = high_mags(f, k);

  Eigen::MatrixXcd prev = Eigen::MatrixXcd::Zero(input.frames(), input.bins());
  for (int it = 0; it < iters; ++it) {
    const Spectrogram rebuilt = stft(istft(work), work.config, true);
    for (Eigen::Index f = 0; f < input.frames(); ++f) {
      for (Eigen::Index k = kc + 1; k < input.bins(); ++k) {
        const std::complex<double> cur = std::polar(rebuilt.mags(f, k), (*rebuilt.phases)(f, k));
        const std::complex<double> accel = cur - (momentum / (1.0 + momentum)) * prev(f, k);
        prev(f, k) = cur;
        if (std::abs(accel) > 0.0) (*work.phases)(f, k) = std::arg(accel);
      }
    }
  }
  work.mags = high_mags;
  return work;
}

} // namespace bwe::cfm
