#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "support.hpp"

namespace testing {

using namespace bwe;

inline const StftConfig kSmall{256, 64};

inline double brute_lsd(const std::vector<double>& a, const std::vector<double>& b) {
  const auto A = testing::naive_stft(a, kSmall.n_fft, kSmall.hop), B = testing::naive_stft(b, kSmall.n_fft, kSmall.hop);
  double total = 0.0;
  for (std::size_t f = 0; f < A.size(); ++f) {
    double acc = 0.0;
    for (std::size_t k = 0; k < A[f].size(); ++k) {
      const double d = 10.0 * std::log10(A[f][k] * A[f][k] + 1e-10) - 10.0 * std::log10(B[f][k] * B[f][k] + 1e-10);
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(A[f].size()));
  }
  return total / static_cast<double>(A.size());
}

/// Slaney mel, triangles from the band edges, natural log, orthonormal DCT-II.
inline std::vector<std::vector<double>> brute_mfcc(const std::vector<double>& x, const MelConfig& mc, int n_mfcc) {
  const auto S = testing::naive_stft(x, kSmall.n_fft, kSmall.hop);
  auto to_mel = [](double hz) { return hz < 1000.0 ? 3.0 * hz / 200.0 : 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4); };
  auto to_hz = [](double m) { return m < 15.0 ? 200.0 * m / 3.0 : 1000.0 * std::pow(6.4, (m - 15.0) / 27.0); };
  const int M = mc.bands;
  std::vector<double> edge(static_cast<std::size_t>(M + 2));
  for (int i = 0; i < M + 2; ++i)
    edge[static_cast<std::size_t>(i)] = to_hz(to_mel(mc.f_min) + (to_mel(mc.f_max) - to_mel(mc.f_min)) * i / (M + 1));
  std::vector<std::vector<double>> out;
  for (const auto& frame : S) {
    std::vector<double> logmel(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      const double l = edge[static_cast<std::size_t>(m)], c = edge[static_cast<std::size_t>(m + 1)], r = edge[static_cast<std::size_t>(m + 2)];
      double acc = 0.0;
      for (std::size_t k = 0; k < frame.size(); ++k) {
        const double f = static_cast<double>(k) * 44100.0 / kSmall.n_fft;
        double w = 0.0;
        if (f > l && f <= c) w = (f - l) / (c - l);
        else if (f > c && f < r) w = (r - f) / (r - c);
        acc += w * 2.0 / (r - l) * frame[k];
      }
      logmel[static_cast<std::size_t>(m)] = std::log(std::max(acc, mc.log_floor));
    }
    std::vector<double> c(static_cast<std::size_t>(n_mfcc));
    for (int q = 0; q < n_mfcc; ++q) {
      double acc = 0.0;
      for (int n = 0; n < M; ++n) acc += logmel[static_cast<std::size_t>(n)] * std::cos(std::numbers::pi * q * (2 * n + 1) / (2.0 * M));
      c[static_cast<std::size_t>(q)] = acc * std::sqrt((q == 0 ? 1.0 : 2.0) / M);
    }
    out.push_back(c);
  }
  return out;
}

inline double brute_mfcc_mse(const std::vector<double>& a, const std::vector<double>& b, const MelConfig& mc, int n) {
  const auto A = brute_mfcc(a, mc, n), B = brute_mfcc(b, mc, n);
  double acc = 0.0;
  for (std::size_t f = 0; f < A.size(); ++f)
    for (int q = 0; q < n; ++q) acc += std::pow(A[f][static_cast<std::size_t>(q)] - B[f][static_cast<std::size_t>(q)], 2);
  return acc / static_cast<double>(A.size() * static_cast<std::size_t>(n));
}

inline double brute_adherence(const std::vector<double>& target_hz, const std::vector<double>& audio) {
  const auto S = testing::naive_stft(audio, kSmall.n_fft, kSmall.hop);
  Grid mags(static_cast<Eigen::Index>(S.size()), static_cast<Eigen::Index>(S[0].size()));
  for (std::size_t f = 0; f < S.size(); ++f)
    for (std::size_t k = 0; k < S[f].size(); ++k) mags(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) = S[f][k];
  const auto bins = testing::brute_force_dsc_bins(mags, DscParams{});
  std::vector<double> d;
  for (std::size_t f = 0; f < bins.size(); ++f)
    d.push_back(std::abs(std::log(bins[f] * 44100.0 / kSmall.n_fft + 1.0) - std::log(target_hz[f] + 1.0)));
  std::sort(d.begin(), d.end());
  return d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
}

inline std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fc = 1000.0 + 20000.0 * u(rng);
  AudioClip c = testing::gaussian_clip(rng(), n, 0.05 + 0.5 * u(rng));
  DegradationSpec s;
  s.cutoff_hz = fc;
  return apply_degradation(c, s).samples;
}

} // namespace testing
