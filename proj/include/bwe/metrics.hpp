#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "audio.hpp"
#include "dsp.hpp"
#include "features.hpp"
#include "mel.hpp"

namespace bwe {

/// Pads with zeros or truncates `clip` to `n` samples.
inline AudioClip match_length(AudioClip clip, std::size_t n) {
  clip.samples.resize(n, 0.0);
  return clip;
}

// ---------------------------------------------------------------------------
// Log-spectral distance

inline constexpr double kLsdEpsilon = 1e-10;

/// Mean over frames of the per-frame RMS difference of power in dB.
inline double lsd(const Spectrogram& ref, const Spectrogram& est) {
  require(same_shape(ref.mags, est.mags), "lsd: spectrogram shapes differ");
  double total = 0.0;
  for (Eigen::Index f = 0; f < ref.frames(); ++f) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < ref.bins(); ++k) {
      const double a = 10.0 * std::log10(ref.mags(f, k) * ref.mags(f, k) + kLsdEpsilon);
      const double b = 10.0 * std::log10(est.mags(f, k) * est.mags(f, k) + kLsdEpsilon);
      acc += (a - b) * (a - b);
    }
    total += std::sqrt(acc / static_cast<double>(ref.bins()));
  }
  return total / static_cast<double>(ref.frames());
}

inline double lsd(const AudioClip& ref, const AudioClip& est, const StftConfig& cfg = {}) {
  return lsd(stft(ref, cfg), stft(match_length(est, ref.size()), cfg));
}

// ---------------------------------------------------------------------------
// Log kurtosis ratio

inline constexpr double kKurtosisFloor = 1e-6;
inline constexpr double kVoicedDbfs = -60.0;

/// Excess kurtosis of one frame's power-spectrum bin values, floored.
inline double spectral_kurtosis(const double* mags, Eigen::Index bins) {
  double mean = 0.0;
  for (Eigen::Index k = 0; k < bins; ++k) mean += mags[k] * mags[k];
  mean /= static_cast<double>(bins);
  double m2 = 0.0, m4 = 0.0;
  for (Eigen::Index k = 0; k < bins; ++k) {
    const double d = mags[k] * mags[k] - mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(bins);
  m4 /= static_cast<double>(bins);
  if (m2 <= 0.0) return kKurtosisFloor;
  return std::max(m4 / (m2 * m2) - 3.0, kKurtosisFloor);
}

/// RMS in dBFS of the n_fft samples each centered frame covers.
inline std::vector<double> frame_rms_db(const AudioClip& clip, const StftConfig& cfg) {
  const std::size_t frames = cfg.frames_for(clip.size());
  std::vector<double> out(frames);
  const std::ptrdiff_t pad = cfg.n_fft / 2;
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f) * cfg.hop - pad;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double s = clip.samples[reflect_index(start + i, clip.size())];
      acc += s * s;
    }
    const double r = std::sqrt(acc / cfg.n_fft);
    out[f] = r > 0.0 ? 20.0 * std::log10(r) : -400.0;
  }
  return out;
}

/// Mean over voiced reference frames of ln(kurtosis_proc / kurtosis_ref).
inline double lkr_pi(const AudioClip& ref, const AudioClip& proc, const StftConfig& cfg = {}) {
  const AudioClip p = match_length(proc, ref.size());
  const Spectrogram sr = stft(ref, cfg), sp = stft(p, cfg);
  const auto level = frame_rms_db(ref, cfg);
  double acc = 0.0;
  std::size_t voiced = 0;
  for (Eigen::Index f = 0; f < sr.frames(); ++f) {
    if (level[static_cast<std::size_t>(f)] <= kVoicedDbfs) continue;
    const double kr = spectral_kurtosis(sr.mags.row(f).data(), sr.bins());
    const double kp = spectral_kurtosis(sp.mags.row(f).data(), sp.bins());
    acc += std::log(kp / kr);
    ++voiced;
  }
  return voiced > 0 ? acc / static_cast<double>(voiced) : 0.0;
}

// ---------------------------------------------------------------------------
// MFCC

/// First `n_mfcc` orthonormal DCT-II coefficients of each log-mel frame.
inline Grid mfcc(const MelSpectrogram& mel, int n_mfcc = 13) {
  const Eigen::Index M = mel.bands();
  require(n_mfcc >= 1 && n_mfcc <= M, "mfcc: n_mfcc must lie in [1, bands]");
  Grid basis(n_mfcc, M);
  for (int k = 0; k < n_mfcc; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / static_cast<double>(M)) : std::sqrt(2.0 / static_cast<double>(M));
    for (Eigen::Index n = 0; n < M; ++n)
      basis(k, n) = s * std::cos(std::numbers::pi * k * (2.0 * static_cast<double>(n) + 1.0) / (2.0 * static_cast<double>(M)));
  }
  return mel.values * basis.transpose();
}

inline Grid mfcc(const AudioClip& clip, int n_mfcc = 13, const StftConfig& cfg = {}, const MelConfig& mel = {}) {
  return mfcc(mel_project(stft(clip, cfg), mel), n_mfcc);
}

inline double mfcc_mse(const AudioClip& ref, const AudioClip& est, int n_mfcc = 13, const StftConfig& cfg = {},
                       const MelConfig& mel = {}) {
  const Grid a = mfcc(ref, n_mfcc, cfg, mel);
  const Grid b = mfcc(match_length(est, ref.size()), n_mfcc, cfg, mel);
  return (a - b).array().square().mean();
}

// ---------------------------------------------------------------------------
// Control adherence

inline constexpr double kAdherenceEpsilonHz = 1.0;

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of empty sequence");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median over frames of |ln(realized + 1 Hz) - ln(target + 1 Hz)|.
inline double median_log_distance(const std::vector<double>& target, const std::vector<double>& realized) {
  require(target.size() == realized.size(), "adherence: frame counts differ");
  std::vector<double> d(target.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = std::abs(std::log(realized[i] + kAdherenceEpsilonHz) - std::log(target[i] + kAdherenceEpsilonHz));
  return median(std::move(d));
}

/// Extracts the target's feature from `audio` and returns the median
/// absolute natural-log distance to the target track.
inline double adherence(const ControlSignal& target, const AudioClip& audio, Feature extractor,
                        const DscParams& dsc = {}) {
  require(target.features() >= 1, "adherence: empty control");
  const StftConfig cfg{target.n_fft, target.hop};
  const ControlSignal realized = extract_feature(stft(audio, cfg), extractor, dsc);
  require(realized.frames() == target.frames(), "adherence: frame counts differ");
  return median_log_distance(target.track(0), realized.track(0));
}

// ---------------------------------------------------------------------------
// Reports

struct ClipMetrics {
  std::string id;
  double lsd_db = 0.0;
  double lkr_pi = 0.0;
  double mfcc_mse = 0.0;
  double adherence = std::numeric_limits<double>::quiet_NaN(); // NaN when no control target
  bool length_adjusted = false;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(v.size()));
  return s;
}

struct MetricReport {
  std::vector<ClipMetrics> clips;
  Summary lsd_db, lkr_pi, mfcc_mse;
  double adherence_median_logdist = std::numeric_limits<double>::quiet_NaN();
};

inline ClipMetrics evaluate_clip(const std::string& id, const AudioClip& ref, const AudioClip& est,
                                 const ControlSignal* target = nullptr, Feature extractor = Feature::Dsc,
                                 const DscParams& dsc = {}) {
  ClipMetrics m;
  m.id = id;
  m.length_adjusted = est.size() != ref.size();
  const AudioClip e = match_length(est, ref.size());
  m.lsd_db = lsd(ref, e);
  m.lkr_pi = lkr_pi(ref, e);
  m.mfcc_mse = mfcc_mse(ref, e);
  if (target != nullptr) m.adherence = adherence(*target, e, extractor, dsc);
  return m;
}

/// Aggregates per-clip rows. The aggregate adherence is the median of the
/// per-clip medians.
inline MetricReport aggregate(std::vector<ClipMetrics> clips) {
  MetricReport r;
  std::vector<double> l, k, m, a;
  for (const auto& c : clips) {
    l.push_back(c.lsd_db);
    k.push_back(c.lkr_pi);
    m.push_back(c.mfcc_mse);
    if (!std::isnan(c.adherence)) a.push_back(c.adherence);
  }
  r.lsd_db = summarize(l);
  r.lkr_pi = summarize(k);
  r.mfcc_mse = summarize(m);
  if (!a.empty()) r.adherence_median_logdist = median(a);
  r.clips = std::move(clips);
  return r;
}

} // namespace bwe
