#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "audio.hpp"
#include "dsp.hpp"
#include "error.hpp"
#include "fft.hpp"

namespace bwe {

enum class FilterFamily { Fir, Biquad, ChebyshevI, BrickWall };

inline const char* to_string(FilterFamily f) {
  switch (f) {
    case FilterFamily::Fir: return "FIR";
    case FilterFamily::Biquad: return "Biquad";
    case FilterFamily::ChebyshevI: return "ChebyshevI";
    case FilterFamily::BrickWall: return "BrickWall";
  }
  return "?";
}

inline FilterFamily family_from_string(const std::string& s) {
  if (s == "FIR" || s == "fir") return FilterFamily::Fir;
  if (s == "Biquad" || s == "biquad") return FilterFamily::Biquad;
  if (s == "ChebyshevI" || s == "chebyshev" || s == "cheby1") return FilterFamily::ChebyshevI;
  if (s == "BrickWall" || s == "brickwall") return FilterFamily::BrickWall;
  throw Error(ErrorKind::InvalidArgument, "unknown filter family '" + s + "'");
}

/// One lowpass degradation. `order` is FIR taps or IIR order; unused for
/// BrickWall. `ripple_db` is only used by ChebyshevI.
struct DegradationSpec {
  FilterFamily family = FilterFamily::BrickWall;
  double cutoff_hz = 4000.0;
  int order = 0;
  double ripple_db = 0.0;

  bool operator==(const DegradationSpec&) const = default;
};

inline std::string describe(const DegradationSpec& s) {
  std::string out = std::string(to_string(s.family)) + "(cutoff=" + std::to_string(s.cutoff_hz) + " Hz";
  if (s.family != FilterFamily::BrickWall) out += ", order=" + std::to_string(s.order);
  if (s.family == FilterFamily::ChebyshevI) out += ", ripple=" + std::to_string(s.ripple_db) + " dB";
  return out + ")";
}

inline void validate(const DegradationSpec& s, double sample_rate) {
  require(s.cutoff_hz > 0.0 && s.cutoff_hz < 0.5 * sample_rate,
          "degradation " + describe(s) + ": cutoff must lie in (0, Nyquist)");
  if (s.family != FilterFamily::BrickWall) require(s.order >= 1, "degradation " + describe(s) + ": order must be >= 1");
  if (s.family == FilterFamily::Fir) require(s.order % 2 == 1, "degradation " + describe(s) + ": FIR taps must be odd");
  if (s.family == FilterFamily::ChebyshevI) require(s.ripple_db > 0.0, "degradation " + describe(s) + ": ripple must be > 0");
}

// ---------------------------------------------------------------------------
// Filter design

/// Normalized biquad: y = b0 x + b1 x1 + b2 x2 - a1 y1 - a2 y2.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  std::complex<double> response(double omega) const {
    const std::complex<double> z1 = std::polar(1.0, -omega);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }

  /// Largest pole magnitude.
  double pole_radius() const {
    if (a2 == 0.0) return std::abs(a1);
    const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
    return std::max(std::abs((-a1 + disc) / 2.0), std::abs((-a1 - disc) / 2.0));
  }
};

using SosCascade = std::vector<Biquad>;

namespace design_detail {

// Bilinear transform (s = (1 - z^-1) / (1 + z^-1)) of an all-pole lowpass
// section with unity DC gain built from analog pole `p` (and its conjugate
// when complex).
inline Biquad bilinear_section(std::complex<double> p, bool pair) {
  Biquad q;
  if (pair) {
    // H(s) = |p|^2 / (s^2 - 2 Re(p) s + |p|^2)
    const double c0 = std::norm(p), c1 = -2.0 * p.real();
    const double d0 = c0 + c1 + 1.0;
    q.b0 = c0 / d0;
    q.b1 = 2.0 * c0 / d0;
    q.b2 = c0 / d0;
    q.a1 = (2.0 * c0 - 2.0) / d0;
    q.a2 = (c0 - c1 + 1.0) / d0;
  } else {
    // H(s) = -p / (s - p), p real and negative.
    const double c0 = -p.real();
    const double d0 = c0 + 1.0;
    q.b0 = c0 / d0;
    q.b1 = c0 / d0;
    q.a1 = (c0 - 1.0) / d0;
  }
  return q;
}

inline SosCascade from_prototype_poles(const std::vector<std::complex<double>>& upper_and_real, double warped) {
  SosCascade sos;
  for (const auto& p : upper_and_real) {
    const bool pair = std::abs(p.imag()) > 1e-12;
    sos.push_back(bilinear_section(p * warped, pair));
  }
  return sos;
}

} // namespace design_detail

inline double prewarp(double cutoff_hz, double sample_rate) {
  return std::tan(std::numbers::pi * cutoff_hz / sample_rate);
}

/// Butterworth lowpass of the given order as cascaded second-order sections.
inline SosCascade design_butterworth(int order, double cutoff_hz, double sample_rate) {
  std::vector<std::complex<double>> poles;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0 + order) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  if (order % 2 == 1) poles.emplace_back(-1.0, 0.0);
  return design_detail::from_prototype_poles(poles, prewarp(cutoff_hz, sample_rate));
}

/// Chebyshev type I lowpass; passband edge at `cutoff_hz`, unity DC gain.
inline SosCascade design_chebyshev1(int order, double ripple_db, double cutoff_hz, double sample_rate) {
  const double eps = std::sqrt(std::pow(10.0, ripple_db / 10.0) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;
  std::vector<std::complex<double>> poles;
  for (int k = 1; k <= order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k - 1.0) / (2.0 * order);
    poles.emplace_back(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
  }
  if (order % 2 == 1) poles.emplace_back(-std::sinh(mu), 0.0);
  return design_detail::from_prototype_poles(poles, prewarp(cutoff_hz, sample_rate));
}

/// Hamming-windowed sinc, normalized to unity DC gain.
inline std::vector<double> design_fir(int taps, double cutoff_hz, double sample_rate) {
  const double fc = cutoff_hz / sample_rate;
  const double mid = 0.5 * (taps - 1);
  std::vector<double> h(static_cast<std::size_t>(taps));
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double x = n - mid;
    const double sinc = x == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * x) / (std::numbers::pi * x);
    const double w = taps > 1 ? 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (taps - 1)) : 1.0;
    h[static_cast<std::size_t>(n)] = sinc * w;
    sum += h[static_cast<std::size_t>(n)];
  }
  for (double& v : h) v /= sum;
  return h;
}

inline std::complex<double> cascade_response(const SosCascade& sos, double hz, double sample_rate) {
  std::complex<double> h = 1.0;
  for (const auto& q : sos) h *= q.response(2.0 * std::numbers::pi * hz / sample_rate);
  return h;
}

inline std::complex<double> fir_response(const std::vector<double>& h, double hz, double sample_rate) {
  std::complex<double> acc = 0.0;
  const double w = 2.0 * std::numbers::pi * hz / sample_rate;
  for (std::size_t n = 0; n < h.size(); ++n) acc += h[n] * std::polar(1.0, -w * static_cast<double>(n));
  return acc;
}

/// Second-order sections for an IIR spec (Biquad or ChebyshevI).
inline SosCascade design_iir(const DegradationSpec& spec, double sample_rate) {
  validate(spec, sample_rate);
  SosCascade sos = spec.family == FilterFamily::ChebyshevI
                       ? design_chebyshev1(spec.order, spec.ripple_db, spec.cutoff_hz, sample_rate)
                       : design_butterworth(spec.order, spec.cutoff_hz, sample_rate);
  for (const auto& q : sos)
    if (!(q.pole_radius() < 1.0))
      throw Error(ErrorKind::UnstableFilter, "unstable filter for " + describe(spec));
  return sos;
}

/// Magnitude response of the filter a spec describes, at `hz`.
inline double spec_gain(const DegradationSpec& spec, double hz, double sample_rate) {
  switch (spec.family) {
    case FilterFamily::Fir: return std::abs(fir_response(design_fir(spec.order, spec.cutoff_hz, sample_rate), hz, sample_rate));
    case FilterFamily::BrickWall: return hz > spec.cutoff_hz ? 0.0 : 1.0;
    default: return std::abs(cascade_response(design_iir(spec, sample_rate), hz, sample_rate));
  }
}

// ---------------------------------------------------------------------------
// Filtering

inline std::vector<double> sosfilt(const SosCascade& sos, std::vector<double> x) {
  for (const auto& q : sos) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return x;
}

/// Linear convolution with an odd-length kernel, aligned to remove the
/// (taps - 1) / 2 sample group delay. Output length equals input length.
inline std::vector<double> fir_filter_centered(const std::vector<double>& h, const std::vector<double>& x) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto taps = static_cast<std::ptrdiff_t>(h.size());
  const std::ptrdiff_t delay = (taps - 1) / 2;
  std::vector<double> y(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t j_lo = std::max<std::ptrdiff_t>(0, i + delay - (n - 1));
    const std::ptrdiff_t j_hi = std::min<std::ptrdiff_t>(taps - 1, i + delay);
    double acc = 0.0;
    for (std::ptrdiff_t j = j_lo; j <= j_hi; ++j) acc += h[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(i + delay - j)];
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

/// Zeroes every DFT bin of the whole clip strictly above the cutoff.
inline std::vector<double> brickwall_filter(const std::vector<double>& x, double cutoff_hz, double sample_rate) {
  auto spec = fft::rfft(x);
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < spec.size(); ++k)
    if (static_cast<double>(k) * sample_rate / n > cutoff_hz) spec[k] = 0.0;
  return fft::irfft(spec, x.size());
}

inline AudioClip apply_degradation(const AudioClip& clip, const DegradationSpec& spec) {
  validate(spec, clip.sample_rate);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  if (clip.empty()) return out;
  switch (spec.family) {
    case FilterFamily::Fir:
      out.samples = fir_filter_centered(design_fir(spec.order, spec.cutoff_hz, clip.sample_rate), clip.samples);
      break;
    case FilterFamily::Biquad:
    case FilterFamily::ChebyshevI:
      out.samples = sosfilt(design_iir(spec, clip.sample_rate), clip.samples);
      break;
    case FilterFamily::BrickWall:
      out.samples = brickwall_filter(clip.samples, spec.cutoff_hz, clip.sample_rate);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Randomized specs

/// 3, 4, ..., 18 kHz.
inline constexpr std::array<double, 16> kCutoffGridHz = {
    3000, 4000, 5000, 6000, 7000, 8000, 9000, 10000, 11000, 12000, 13000, 14000, 15000, 16000, 17000, 18000};

struct DegradationSamplerConfig {
  std::uint64_t seed = 0;
  std::array<double, 4> family_weights = {1.0, 1.0, 1.0, 1.0}; // FIR, Biquad, ChebyshevI, BrickWall
  std::array<int, 2> fir_taps = {31, 255};
  std::array<int, 2> iir_order = {2, 10};
  std::array<double, 2> ripple_db = {0.1, 3.0};
};

inline void validate(const DegradationSamplerConfig& c) {
  double total = 0.0;
  for (double w : c.family_weights) {
    require(w >= 0.0 && std::isfinite(w), "sampler: family weights must be nonnegative");
    total += w;
  }
  require(total > 0.0, "sampler: family weights are all zero");
  require(c.fir_taps[0] >= 1 && c.fir_taps[0] <= c.fir_taps[1], "sampler: empty FIR tap range");
  require((c.fir_taps[0] | 1) <= c.fir_taps[1], "sampler: FIR tap range holds no odd value");
  require(c.iir_order[0] >= 1 && c.iir_order[0] <= c.iir_order[1], "sampler: empty IIR order range");
  require(c.ripple_db[0] > 0.0 && c.ripple_db[0] <= c.ripple_db[1], "sampler: empty ripple range");
}

/// Stateful spec generator; one per consumer.
class DegradationSampler {
public:
  explicit DegradationSampler(DegradationSamplerConfig cfg) : cfg_(cfg), rng_(cfg.seed) { validate(cfg_); }

  const DegradationSamplerConfig& config() const { return cfg_; }

  DegradationSpec sample() {
    std::discrete_distribution<int> family(cfg_.family_weights.begin(), cfg_.family_weights.end());
    std::uniform_int_distribution<std::size_t> cutoff(0, kCutoffGridHz.size() - 1);

    DegradationSpec s;
    s.family = static_cast<FilterFamily>(family(rng_));
    s.cutoff_hz = kCutoffGridHz[cutoff(rng_)];
    switch (s.family) {
      case FilterFamily::Fir: {
        const int lo = cfg_.fir_taps[0] | 1;
        const int count = (cfg_.fir_taps[1] - lo) / 2 + 1;
        std::uniform_int_distribution<int> pick(0, count - 1);
        s.order = lo + 2 * pick(rng_);
        break;
      }
      case FilterFamily::Biquad:
      case FilterFamily::ChebyshevI: {
        std::uniform_int_distribution<int> pick(cfg_.iir_order[0], cfg_.iir_order[1]);
        s.order = pick(rng_);
        if (s.family == FilterFamily::ChebyshevI) {
          std::uniform_real_distribution<double> ripple(cfg_.ripple_db[0], cfg_.ripple_db[1]);
          s.ripple_db = ripple(rng_);
        }
        break;
      }
      case FilterFamily::BrickWall: break;
    }
    return s;
  }

private:
  DegradationSamplerConfig cfg_;
  std::mt19937_64 rng_;
};

inline DegradationSpec sample_spec(DegradationSampler& sampler) { return sampler.sample(); }

// ---------------------------------------------------------------------------
// Cutoff measurement

namespace cutoff_detail {

inline std::vector<double> mean_power(const Spectrogram& s) {
  std::vector<double> p(static_cast<std::size_t>(s.bins()), 0.0);
  for (Eigen::Index f = 0; f < s.frames(); ++f)
    for (Eigen::Index k = 0; k < s.bins(); ++k) p[static_cast<std::size_t>(k)] += s.mags(f, k) * s.mags(f, k);
  for (double& v : p) v /= static_cast<double>(s.frames());
  return p;
}

/// Per-bin median power over frames.
inline std::vector<double> median_power(const Spectrogram& s) {
  std::vector<double> p(static_cast<std::size_t>(s.bins()), 0.0), col(static_cast<std::size_t>(s.frames()));
  if (s.frames() == 0) return p;
  for (Eigen::Index k = 0; k < s.bins(); ++k) {
    for (Eigen::Index f = 0; f < s.frames(); ++f) col[static_cast<std::size_t>(f)] = s.mags(f, k) * s.mags(f, k);
    const auto mid = col.begin() + static_cast<std::ptrdiff_t>(col.size() / 2);
    std::nth_element(col.begin(), mid, col.end());
    p[static_cast<std::size_t>(k)] = *mid;
  }
  return p;
}

constexpr double kSmoothingBins = 2.0;
constexpr double kDropDb = -6.0;
constexpr double kReferenceFloor = 1e-6; // bins more than 60 dB below the reference peak are ignored

} // namespace cutoff_detail

/// Lowest frequency at which the smoothed power ratio degraded/reference
/// falls below -6 dB; Nyquist if it never does.
inline double measure_cutoff(const Spectrogram& degraded, const Spectrogram& reference) {
  using namespace cutoff_detail;
  require(same_shape(degraded.mags, reference.mags), "measure_cutoff: spectrogram shapes differ");
  const auto pd = gaussian_filter_1d(mean_power(degraded), kSmoothingBins);
  const auto pr = gaussian_filter_1d(mean_power(reference), kSmoothingBins);
  const double ref_peak = *std::max_element(pr.begin(), pr.end());
  if (ref_peak <= 0.0) return reference.nyquist();

  const double tiny = ref_peak * 1e-30;
  double prev_db = 0.0;
  for (std::size_t k = 0; k < pr.size(); ++k) {
    if (pr[k] < kReferenceFloor * ref_peak) continue;
    const double db = 10.0 * std::log10((pd[k] + tiny) / (pr[k] + tiny));
    if (db < kDropDb) {
      if (k == 0) return 0.0;
      // Linear interpolation of the crossing between bins k-1 and k.
      const double frac = prev_db > kDropDb ? (prev_db - kDropDb) / (prev_db - db) : 0.0;
      return (static_cast<double>(k) - 1.0 + frac) * reference.bin_hz();
    }
    prev_db = db;
  }
  return reference.nyquist();
}

inline double measure_cutoff(const AudioClip& degraded, const AudioClip& reference, const StftConfig& cfg = {}) {
  require(degraded.size() == reference.size(), "measure_cutoff: clip lengths differ");
  return measure_cutoff(stft(degraded, cfg), stft(reference, cfg));
}

/// Reference-free bandwidth estimate: highest frequency whose smoothed
/// median power over frames is within `range_db` of the spectrum's maximum.
inline double estimate_bandwidth(const Spectrogram& spec, double range_db = 50.0) {
  const auto p = gaussian_filter_1d(cutoff_detail::median_power(spec), 1.0);
  const double peak = *std::max_element(p.begin(), p.end());
  if (peak <= 0.0) return 0.0;
  const double floor = peak * std::pow(10.0, -range_db / 10.0);
  for (std::size_t k = p.size(); k-- > 0;)
    if (p[k] >= floor) return static_cast<double>(k) * spec.bin_hz();
  return 0.0;
}

} // namespace bwe
