#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dsp.hpp"

namespace bwe {

struct MelConfig {
  int bands = 128;
  double f_min = 0.0;
  double f_max = 22050.0;
  double log_floor = 1e-5;
};

/// Log-magnitude mel spectrogram (natural log). Rows are frames.
struct MelSpectrogram {
  Grid values;
  MelConfig mel_config;
  double sample_rate = 44100.0;
  std::size_t signal_length = 0;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bands() const { return values.cols(); }
};

// Slaney mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

/// Triangular, area-normalized filterbank mapping K linear bins to M bands.
class MelFilterbank {
public:
  MelFilterbank(const MelConfig& mel, const StftConfig& stft, double sample_rate)
      : config_(mel), bins_(stft.bins()) {
    require(mel.bands > 0, "mel: band count must be positive");
    require(mel.f_min >= 0.0 && mel.f_min < mel.f_max, "mel: need 0 <= f_min < f_max");
    require(mel.f_max <= 0.5 * sample_rate + 1e-9, "mel: f_max exceeds Nyquist");
    require(mel.log_floor > 0.0, "mel: log floor must be positive");

    const int M = mel.bands;
    const double lo = hz_to_mel(mel.f_min), hi = hz_to_mel(mel.f_max);
    std::vector<double> edges(static_cast<std::size_t>(M + 2));
    for (int i = 0; i < M + 2; ++i)
      edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (M + 1));

    weights_ = Grid::Zero(M, bins_);
    centers_.resize(static_cast<std::size_t>(M));
    support_.resize(static_cast<std::size_t>(M));
    const double bin_hz = sample_rate / stft.n_fft;
    for (int m = 0; m < M; ++m) {
      const double l = edges[static_cast<std::size_t>(m)], c = edges[static_cast<std::size_t>(m + 1)],
                   r = edges[static_cast<std::size_t>(m + 2)];
      centers_[static_cast<std::size_t>(m)] = c;
      const double enorm = 2.0 / (r - l);
      int first = bins_, last = -1;
      for (int k = 0; k < bins_; ++k) {
        const double f = k * bin_hz;
        const double w = std::max(0.0, std::min((f - l) / (c - l), (r - f) / (r - c)));
        if (w > 0.0) {
          weights_(m, k) = w * enorm;
          first = std::min(first, k);
          last = std::max(last, k);
        }
      }
      support_[static_cast<std::size_t>(m)] = {first, last + 1};
    }
  }

  int bands() const { return config_.bands; }
  int bins() const { return bins_; }
  const Grid& weights() const { return weights_; }
  const MelConfig& config() const { return config_; }
  /// Center frequency of each band in Hz (strictly increasing).
  const std::vector<double>& centers() const { return centers_; }
  /// Half-open bin range [first, last) with nonzero weight, per band.
  const std::vector<std::pair<int, int>>& support() const { return support_; }

  /// Index of the band whose center is nearest `hz`.
  int nearest_band(double hz) const {
    int best = 0;
    for (int m = 1; m < bands(); ++m)
      if (std::abs(centers_[static_cast<std::size_t>(m)] - hz) < std::abs(centers_[static_cast<std::size_t>(best)] - hz))
        best = m;
    return best;
  }

  void apply(const double* mags, double* out) const {
    for (int m = 0; m < bands(); ++m) {
      const auto [a, b] = support_[static_cast<std::size_t>(m)];
      double acc = 0.0;
      for (int k = a; k < b; ++k) acc += weights_(m, k) * mags[k];
      out[m] = acc;
    }
  }

  void apply_transpose(const double* bands_in, double* out) const {
    std::fill(out, out + bins_, 0.0);
    for (int m = 0; m < bands(); ++m) {
      const auto [a, b] = support_[static_cast<std::size_t>(m)];
      for (int k = a; k < b; ++k) out[k] += weights_(m, k) * bands_in[m];
    }
  }

private:
  MelConfig config_;
  int bins_;
  Grid weights_;
  std::vector<double> centers_;
  std::vector<std::pair<int, int>> support_;
};

inline MelSpectrogram mel_project(const Spectrogram& spec, const MelFilterbank& fb) {
  require(spec.bins() == fb.bins(), "mel_project: bin count does not match filterbank");
  MelSpectrogram mel;
  mel.mel_config = fb.config();
  mel.sample_rate = spec.sample_rate;
  mel.signal_length = spec.signal_length;
  mel.values.resize(spec.frames(), fb.bands());
  std::vector<double> row(static_cast<std::size_t>(fb.bands()));
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    fb.apply(spec.mags.row(f).data(), row.data());
    for (int m = 0; m < fb.bands(); ++m)
      mel.values(f, m) = std::log(std::max(row[static_cast<std::size_t>(m)], fb.config().log_floor));
  }
  return mel;
}

inline MelSpectrogram mel_project(const Spectrogram& spec, const MelConfig& cfg = {}) {
  return mel_project(spec, MelFilterbank(cfg, spec.config, spec.sample_rate));
}

/// Nonnegative least-squares estimate of linear magnitudes from mel band
/// energies, by multiplicative updates (Lee-Seung). Rows are frames.
inline Grid mel_to_linear(const MelSpectrogram& mel, const MelFilterbank& fb, int nnls_iters = 100) {
  require(mel.bands() == fb.bands(), "mel_to_linear: band count does not match filterbank");
  const int K = fb.bins(), M = fb.bands();
  Grid out(mel.frames(), K);
  const double log_floor = std::log(fb.config().log_floor) + 1e-9;

  // Initial guess: per bin, the weighted mean of (band target / band row sum).
  std::vector<double> ones(static_cast<std::size_t>(K), 1.0), rowsum(static_cast<std::size_t>(M)),
      init_denom(static_cast<std::size_t>(K));
  fb.apply(ones.data(), rowsum.data());
  fb.apply_transpose(rowsum.data(), init_denom.data());

  std::vector<double> target(static_cast<std::size_t>(M)), numer(static_cast<std::size_t>(K)),
      s(static_cast<std::size_t>(K)), proj(static_cast<std::size_t>(M)), denom(static_cast<std::size_t>(K));
  for (Eigen::Index f = 0; f < mel.frames(); ++f) {
    // Bands at the log floor carry no information beyond "at most floor";
    // they are inverted as silence.
    for (int m = 0; m < M; ++m) {
      const double v = mel.values(f, m);
      target[static_cast<std::size_t>(m)] = v > log_floor ? std::exp(v) : 0.0;
    }
    fb.apply_transpose(target.data(), numer.data());
    for (int k = 0; k < K; ++k) {
      const auto u = static_cast<std::size_t>(k);
      s[u] = init_denom[u] > 0.0 ? numer[u] / init_denom[u] : 0.0;
    }
    for (int it = 0; it < nnls_iters; ++it) {
      fb.apply(s.data(), proj.data());
      fb.apply_transpose(proj.data(), denom.data());
      for (int k = 0; k < K; ++k) {
        const auto u = static_cast<std::size_t>(k);
        if (denom[u] > 0.0) s[u] *= numer[u] / denom[u];
      }
    }
    for (int k = 0; k < K; ++k) out(f, k) = s[static_cast<std::size_t>(k)];
  }
  return out;
}

/// Griffin-Lim phase retrieval with momentum, starting from zero phase.
/// Returns a spectrogram carrying the given magnitudes and the final phases.
inline Spectrogram griffin_lim(const Grid& mags, const StftConfig& cfg, double sample_rate,
                               std::size_t length, int iters, double momentum = 0.99) {
  require(iters >= 0, "griffin_lim: iteration count must be >= 0");
  Spectrogram spec;
  spec.mags = mags;
  spec.config = cfg;
  spec.sample_rate = sample_rate;
  spec.signal_length = length;
  spec.phases = Grid::Zero(mags.rows(), mags.cols());

  Eigen::MatrixXcd prev = Eigen::MatrixXcd::Zero(mags.rows(), mags.cols());
  for (int it = 0; it < iters; ++it) {
    const AudioClip y = istft(spec);
    const Spectrogram rebuilt = stft(y, cfg, true);
    for (Eigen::Index f = 0; f < mags.rows(); ++f) {
      for (Eigen::Index k = 0; k < mags.cols(); ++k) {
        const std::complex<double> cur = std::polar(rebuilt.mags(f, k), (*rebuilt.phases)(f, k));
        const std::complex<double> accel = cur - (momentum / (1.0 + momentum)) * prev(f, k);
        prev(f, k) = cur;
        (*spec.phases)(f, k) = std::abs(accel) > 0.0 ? std::arg(accel) : (*spec.phases)(f, k);
      }
    }
  }
  return spec;
}

/// Inverts a log-mel spectrogram: NNLS magnitudes, then Griffin-Lim phases.
inline AudioClip mel_invert(const MelSpectrogram& mel, const StftConfig& cfg, int iters,
                            int nnls_iters = 100) {
  require(iters >= 0, "mel_invert: iteration count must be >= 0");
  const MelFilterbank fb(mel.mel_config, cfg, mel.sample_rate);
  const Grid mags = mel_to_linear(mel, fb, nnls_iters);
  const std::size_t length =
      mel.signal_length > 0 ? mel.signal_length : static_cast<std::size_t>(mel.frames() - 1) * cfg.hop;
  return istft(griffin_lim(mags, cfg, mel.sample_rate, length, iters));
}

} // namespace bwe
