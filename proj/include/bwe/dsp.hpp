#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "audio.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "grid.hpp"

namespace bwe {

struct StftConfig {
  int n_fft = 2048;
  int hop = 512;

  int bins() const { return n_fft / 2 + 1; }
  /// Frame count for a signal of `len` samples with centered framing.
  std::size_t frames_for(std::size_t len) const { return 1 + len / static_cast<std::size_t>(hop); }
  double bin_hz(double sample_rate) const { return sample_rate / n_fft; }
};

inline void validate(const StftConfig& cfg) {
  require(cfg.n_fft >= 2 && std::has_single_bit(static_cast<unsigned>(cfg.n_fft)),
          "n_fft must be a power of two");
  require(cfg.hop >= 1 && cfg.hop <= cfg.n_fft, "hop must be in [1, n_fft]");
}

/// Magnitude (and optionally phase) STFT. Rows are frames, columns are bins.
struct Spectrogram {
  Grid mags;
  std::optional<Grid> phases;
  StftConfig config;
  double sample_rate = 44100.0;
  std::size_t signal_length = 0;

  Eigen::Index frames() const { return mags.rows(); }
  Eigen::Index bins() const { return mags.cols(); }
  double bin_hz() const { return config.bin_hz(sample_rate); }
  double nyquist() const { return 0.5 * sample_rate; }
};

/// Periodic Hann window.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

/// Whole-sample symmetric index (d c b | a b c d | c b a), any offset.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

/// Half-sample symmetric index (d c b a | a b c d | d c b a), any offset.
inline std::size_t symmetric_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

/// Centered STFT: reflect padding of n_fft/2 on both sides, F = 1 + len/hop.
inline Spectrogram stft(const AudioClip& clip, const StftConfig& cfg = {}, bool keep_phase = false) {
  validate(cfg);
  require(!clip.empty(), "stft: empty clip");
  const std::size_t n = clip.size();
  const std::size_t frames = cfg.frames_for(n);
  const int K = cfg.bins();
  const auto win = hann_window(cfg.n_fft);
  const std::ptrdiff_t pad = cfg.n_fft / 2;

  Spectrogram s;
  s.config = cfg;
  s.sample_rate = clip.sample_rate;
  s.signal_length = n;
  s.mags.resize(static_cast<Eigen::Index>(frames), K);
  if (keep_phase) s.phases = Grid(static_cast<Eigen::Index>(frames), K);

  std::vector<double> buf(static_cast<std::size_t>(cfg.n_fft));
  for (std::size_t f = 0; f < frames; ++f) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f) * cfg.hop - pad;
    for (int i = 0; i < cfg.n_fft; ++i)
      buf[static_cast<std::size_t>(i)] =
          clip.samples[reflect_index(start + i, n)] * win[static_cast<std::size_t>(i)];
    const auto spec = fft::rfft(buf);
    for (int k = 0; k < K; ++k) {
      s.mags(static_cast<Eigen::Index>(f), k) = std::abs(spec[static_cast<std::size_t>(k)]);
      if (keep_phase) (*s.phases)(static_cast<Eigen::Index>(f), k) = std::arg(spec[static_cast<std::size_t>(k)]);
    }
  }
  return s;
}

/// Weighted overlap-add inverse with window-square normalization.
inline AudioClip istft(const Spectrogram& spec, std::optional<std::size_t> length = std::nullopt) {
  require(spec.phases.has_value(), "istft: spectrogram has no phases");
  require(same_shape(spec.mags, *spec.phases), "istft: phase/magnitude shape mismatch");
  const StftConfig& cfg = spec.config;
  validate(cfg);
  require(spec.bins() == cfg.bins(), "istft: bin count inconsistent with n_fft");

  const std::size_t frames = static_cast<std::size_t>(spec.frames());
  const std::size_t n_out =
      length.value_or(spec.signal_length > 0 ? spec.signal_length : (frames - 1) * cfg.hop);
  const std::size_t pad = static_cast<std::size_t>(cfg.n_fft / 2);
  const std::size_t total = (frames - 1) * cfg.hop + cfg.n_fft;
  const auto win = hann_window(cfg.n_fft);

  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  std::vector<fft::Complex> bins(static_cast<std::size_t>(cfg.bins()));
  for (std::size_t f = 0; f < frames; ++f) {
    for (int k = 0; k < cfg.bins(); ++k)
      bins[static_cast<std::size_t>(k)] =
          std::polar(spec.mags(static_cast<Eigen::Index>(f), k), (*spec.phases)(static_cast<Eigen::Index>(f), k));
    const auto frame = fft::irfft(bins, static_cast<std::size_t>(cfg.n_fft));
    const std::size_t off = f * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const auto u = static_cast<std::size_t>(i);
      acc[off + u] += frame[u] * win[u];
      norm[off + u] += win[u] * win[u];
    }
  }

  AudioClip out;
  out.sample_rate = spec.sample_rate;
  out.samples.assign(n_out, 0.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    const std::size_t j = i + pad;
    if (j >= total) break;
    out.samples[i] = norm[j] > 1e-10 ? acc[j] / norm[j] : 0.0;
  }
  return out;
}

/// Gaussian smoothing with a normalized kernel truncated at ceil(4 sigma),
/// half-sample symmetric boundary. sigma == 0 is the identity.
inline std::vector<double> gaussian_filter_1d(std::span<const double> x, double sigma) {
  require(sigma >= 0.0 && std::isfinite(sigma), "gaussian_filter_1d: sigma must be >= 0");
  std::vector<double> out(x.begin(), x.end());
  if (sigma == 0.0 || x.empty()) return out;

  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const double v = std::exp(-0.5 * (j * j) / (sigma * sigma));
    kernel[static_cast<std::size_t>(j + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = -radius; j <= radius; ++j)
      acc += kernel[static_cast<std::size_t>(j + radius)] *
             x[symmetric_index(static_cast<std::ptrdiff_t>(i) + j, n)];
    out[i] = acc;
  }
  return out;
}

/// Running median over an odd window, half-sample symmetric boundary.
inline std::vector<double> median_filter_1d(std::span<const double> x, int window) {
  require(window >= 1 && window % 2 == 1, "median_filter_1d: window must be odd and >= 1");
  std::vector<double> out(x.begin(), x.end());
  if (window == 1 || x.empty()) return out;

  const int half = window / 2;
  const std::size_t n = x.size();
  std::vector<double> buf(static_cast<std::size_t>(window));
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = -half; j <= half; ++j)
      buf[static_cast<std::size_t>(j + half)] = x[symmetric_index(static_cast<std::ptrdiff_t>(i) + j, n)];
    auto mid = buf.begin() + half;
    std::nth_element(buf.begin(), mid, buf.end());
    out[i] = *mid;
  }
  return out;
}

} // namespace bwe
