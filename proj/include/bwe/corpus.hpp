#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "audio.hpp"
#include "degradation.hpp"
#include "fft.hpp"

namespace bwe {

enum class Split { Train, Valid, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw Error(ErrorKind::InvalidArgument, "unknown split '" + s + "'");
}

/// 8:1:1 by clip index.
inline Split split_for_index(std::size_t index) {
  const std::size_t r = index % 10;
  return r < 8 ? Split::Train : (r == 8 ? Split::Valid : Split::Test);
}

enum class Generator { Harmonic, FilteredNoise, AmFm, Chirp, Percussive };
inline constexpr std::size_t kGeneratorCount = 5;

struct CorpusConfig {
  std::size_t n_clips = 200;
  double clip_seconds = 1.5;
  double sample_rate = 44100.0;
  std::uint64_t seed = 1;
  std::array<double, kGeneratorCount> mix = {1.0, 1.0, 1.0, 1.0, 1.0};
  double band_limited_fraction = 0.25;
  std::array<double, 2> edge_hz = {11000.0, 22050.0}; // an edge at Nyquist leaves the clip full-band
  std::array<double, 2> band_limited_edge_hz = {5000.0, 10000.0};
  double peak = 0.9;
};

inline void validate(const CorpusConfig& c) {
  require(c.n_clips >= 1, "corpus: n_clips must be >= 1");
  require(c.clip_seconds > 0.0, "corpus: clip_seconds must be positive");
  require(c.sample_rate > 0.0, "corpus: sample_rate must be positive");
  double total = 0.0;
  for (double w : c.mix) {
    require(w >= 0.0, "corpus: mix weights must be nonnegative");
    total += w;
  }
  require(total > 0.0, "corpus: mix weights are all zero");
  require(c.band_limited_fraction >= 0.0 && c.band_limited_fraction <= 1.0, "corpus: bad band_limited_fraction");
  require(c.edge_hz[0] > 10000.0 && c.edge_hz[0] <= c.edge_hz[1] && c.edge_hz[1] <= 0.5 * c.sample_rate,
          "corpus: edge range must lie in (10 kHz, Nyquist]");
  require(c.band_limited_edge_hz[0] > 0.0 && c.band_limited_edge_hz[0] <= c.band_limited_edge_hz[1],
          "corpus: bad band-limited edge range");
}

struct CorpusClip {
  std::string id;
  std::size_t index = 0;
  Split split = Split::Train;
  std::string recipe;
  bool band_limited = false;
  double edge_hz = 0.0;
  AudioClip audio;
};

// ---------------------------------------------------------------------------
// Component generators. Each returns `n` samples at `sr`.

inline std::vector<double> harmonic_stack(double f0, int partials, double tilt, std::size_t n, double sr,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<double> y(n, 0.0);
  for (int k = 1; k <= partials; ++k) {
    const double f = f0 * k;
    if (f >= 0.5 * sr) break;
    const double amp = std::pow(static_cast<double>(k), -tilt);
    const double ph = phase(rng);
    const double w = 2.0 * std::numbers::pi * f / sr;
    for (std::size_t i = 0; i < n; ++i) y[i] += amp * std::sin(w * static_cast<double>(i) + ph);
  }
  return y;
}

/// White Gaussian noise with an amplitude slope of (f / 1 kHz)^(-tilt/2).
inline std::vector<double> tilted_noise(double tilt, std::size_t n, double sr, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = gauss(rng);
  if (tilt == 0.0) return x;
  auto spec = fft::rfft(x);
  for (std::size_t k = 1; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * sr / static_cast<double>(n);
    spec[k] *= std::pow(std::max(f, 50.0) / 1000.0, -0.5 * tilt);
  }
  return fft::irfft(spec, n);
}

inline std::vector<double> am_fm_tone(double carrier, double fm_rate, double fm_depth, double am_rate, double am_depth,
                                      std::size_t n, double sr) {
  std::vector<double> y(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = carrier * (1.0 + fm_depth * std::sin(2.0 * std::numbers::pi * fm_rate * t));
    phase += 2.0 * std::numbers::pi * f / sr;
    const double env = 1.0 - am_depth * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * am_rate * t));
    // Three harmonics give the tone some spectral extent.
    y[i] = env * (std::sin(phase) + 0.5 * std::sin(2.0 * phase) + 0.25 * std::sin(3.0 * phase));
  }
  return y;
}

/// Exponential sweep from f_lo to f_hi.
inline std::vector<double> exp_chirp(double f_lo, double f_hi, std::size_t n, double sr) {
  std::vector<double> y(n);
  const double T = static_cast<double>(n) / sr;
  const double k = std::log(f_hi / f_lo) / T;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    y[i] = std::sin(2.0 * std::numbers::pi * f_lo * (std::exp(k * t) - 1.0) / k);
  }
  return y;
}

/// Decaying noise bursts at random onsets.
inline std::vector<double> percussive_bursts(int bursts, double decay_s, std::size_t n, double sr, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> onset(0, n > 1 ? n - 1 : 0);
  std::vector<double> y(n, 0.0);
  for (int b = 0; b < bursts; ++b) {
    const std::size_t start = onset(rng);
    for (std::size_t i = start; i < n; ++i) {
      const double env = std::exp(-static_cast<double>(i - start) / (decay_s * sr));
      if (env < 1e-4) break;
      y[i] += env * gauss(rng);
    }
  }
  return y;
}

namespace corpus_detail {

inline double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

inline void scale_to_rms(std::vector<double>& x, double target) {
  const double r = rms(x);
  if (r > 0.0)
    for (double& v : x) v *= target / r;
}

} // namespace corpus_detail

/// Generates clip `index`. Pure in (config, index).
inline CorpusClip generate_clip(const CorpusConfig& cfg, std::size_t index) {
  validate(cfg);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

  const double sr = cfg.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(cfg.clip_seconds * sr));

  CorpusClip clip;
  clip.index = index;
  clip.split = split_for_index(index);
  clip.band_limited = uni(0.0, 1.0) < cfg.band_limited_fraction;
  clip.edge_hz = clip.band_limited ? uni(cfg.band_limited_edge_hz[0], cfg.band_limited_edge_hz[1])
                                   : uni(cfg.edge_hz[0], cfg.edge_hz[1]);
  {
    std::ostringstream id;
    id << "clip_" << std::setw(5) << std::setfill('0') << index;
    clip.id = id.str();
  }

  std::discrete_distribution<int> which(cfg.mix.begin(), cfg.mix.end());
  const auto gen = static_cast<Generator>(which(rng));
  std::ostringstream recipe;
  std::vector<double> primary;
  switch (gen) {
    case Generator::Harmonic: {
      const double f0 = uni(80.0, 600.0), tilt = uni(0.3, 1.0);
      const int partials = pick(8, 60);
      primary = harmonic_stack(f0, partials, tilt, n, sr, rng);
      recipe << "harmonic(f0=" << f0 << ",partials=" << partials << ",tilt=" << tilt << ")";
      break;
    }
    case Generator::FilteredNoise: {
      const double tilt = uni(0.0, 1.0);
      primary = tilted_noise(tilt, n, sr, rng);
      recipe << "noise(tilt=" << tilt << ")";
      break;
    }
    case Generator::AmFm: {
      const double carrier = uni(200.0, 3000.0), fm_rate = uni(0.5, 8.0), fm_depth = uni(0.0, 0.05),
                   am_rate = uni(0.5, 10.0), am_depth = uni(0.0, 0.8);
      primary = am_fm_tone(carrier, fm_rate, fm_depth, am_rate, am_depth, n, sr);
      recipe << "amfm(carrier=" << carrier << ",fm_rate=" << fm_rate << ",fm_depth=" << fm_depth
             << ",am_rate=" << am_rate << ",am_depth=" << am_depth << ")";
      break;
    }
    case Generator::Chirp: {
      const double lo = uni(100.0, 500.0), hi = uni(2000.0, std::min(clip.edge_hz, 0.45 * sr));
      primary = exp_chirp(lo, hi, n, sr);
      recipe << "chirp(f_lo=" << lo << ",f_hi=" << hi << ")";
      break;
    }
    case Generator::Percussive: {
      const int bursts = pick(2, 8);
      const double decay = uni(0.02, 0.2);
      primary = percussive_bursts(bursts, decay, n, sr, rng);
      recipe << "bursts(count=" << bursts << ",decay_s=" << decay << ")";
      break;
    }
  }

  // A continuous noise bed keeps every frame active up to the band edge.
  const double bed_ratio = uni(0.5, 1.0), bed_tilt = uni(0.0, 0.5);
  std::vector<double> bed = tilted_noise(bed_tilt, n, sr, rng);
  corpus_detail::scale_to_rms(primary, 1.0);
  corpus_detail::scale_to_rms(bed, bed_ratio);
  for (std::size_t i = 0; i < n; ++i) primary[i] += bed[i];
  recipe << "+bed(ratio=" << bed_ratio << ",tilt=" << bed_tilt << ")+edge(" << clip.edge_hz << ")";

  clip.audio.sample_rate = sr;
  clip.audio.samples = brickwall_filter(primary, clip.edge_hz, sr);
  normalize_peak(clip.audio, cfg.peak);
  clip.recipe = recipe.str();
  return clip;
}

inline std::vector<CorpusClip> generate(const CorpusConfig& cfg) {
  validate(cfg);
  std::vector<CorpusClip> out;
  out.reserve(cfg.n_clips);
  for (std::size_t i = 0; i < cfg.n_clips; ++i) out.push_back(generate_clip(cfg, i));
  return out;
}

/// CSV manifest: id,index,split,band_limited,edge_hz,seed,recipe.
inline std::string manifest_csv(const std::vector<CorpusClip>& clips, const CorpusConfig& cfg) {
  std::ostringstream out;
  out << "id,index,split,band_limited,edge_hz,seed,recipe\n";
  out.precision(17);
  for (const auto& c : clips)
    out << c.id << ',' << c.index << ',' << to_string(c.split) << ',' << (c.band_limited ? 1 : 0) << ','
        << c.edge_hz << ',' << cfg.seed << ",\"" << c.recipe << "\"\n";
  return out.str();
}

} // namespace bwe
