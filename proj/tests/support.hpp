#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "bwe/bwe.hpp"

namespace testing {

/// splitmix64 uniform noise in [-amp, amp); the Python oracles use the same
/// generator.
inline std::vector<double> splitmix_noise(std::uint64_t seed, std::size_t n, double amp) {
  std::vector<double> out(n);
  std::uint64_t state = seed;
  for (auto& v : out) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    v = amp * (2.0 * static_cast<double>(z >> 11) * 0x1.0p-53 - 1.0);
  }
  return out;
}

inline bwe::AudioClip clip_of(std::vector<double> samples, double sr = 44100.0) {
  bwe::AudioClip c;
  c.samples = std::move(samples);
  c.sample_rate = sr;
  return c;
}

inline bwe::AudioClip gaussian_clip(std::uint64_t seed, std::size_t n, double amp = 0.3, double sr = 44100.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, amp);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return clip_of(std::move(x), sr);
}

inline bwe::AudioClip sine(double hz, double seconds, double amp = 0.5, double sr = 44100.0) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr);
  return clip_of(std::move(x), sr);
}

/// Straight O(N^2) DFT magnitudes of one windowed frame.
inline std::vector<double> naive_frame_mags(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += frame[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n));
    out[k] = std::abs(acc);
  }
  return out;
}

/// Brute-force centered STFT magnitudes (reflect padding, periodic Hann).
inline std::vector<std::vector<double>> naive_stft(const std::vector<double>& x, int n_fft, int hop) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::size_t frames = 1 + x.size() / static_cast<std::size_t>(hop);
  std::vector<std::vector<double>> out;
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> frame(static_cast<std::size_t>(n_fft));
    for (int i = 0; i < n_fft; ++i) {
      std::ptrdiff_t j = static_cast<std::ptrdiff_t>(f) * hop - n_fft / 2 + i;
      while (j < 0 || j >= n) j = j < 0 ? -j : 2 * (n - 1) - j;
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);
      frame[static_cast<std::size_t>(i)] = w * x[static_cast<std::size_t>(j)];
    }
    out.push_back(naive_frame_mags(frame));
  }
  return out;
}

/// Energy above `hz` of the full-length DFT.
inline double band_energy_above(const std::vector<double>& x, double hz, double sr) {
  const auto spec = bwe::fft::rfft(x);
  double e = 0.0;
  for (std::size_t k = 0; k < spec.size(); ++k)
    if (static_cast<double>(k) * sr / static_cast<double>(x.size()) > hz) e += std::norm(spec[k]);
  return e;
}

/// Straight-line DSC: loops only, no shared helpers.
inline std::vector<double> brute_force_dsc_bins(const bwe::Grid& mags, const bwe::DscParams& p) {
  const Eigen::Index F = mags.rows(), K = mags.cols();
  double peak = 0.0;
  for (Eigen::Index f = 0; f < F; ++f)
    for (Eigen::Index k = 0; k < K; ++k)
      if (mags(f, k) > peak) peak = mags(f, k);
  const int radius = static_cast<int>(std::ceil(4.0 * p.sigma_f));
  std::vector<double> kern;
  double ksum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    kern.push_back(std::exp(-0.5 * j * j / (p.sigma_f * p.sigma_f)));
    ksum += kern.back();
  }
  auto mirror = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
    return i;
  };
  std::vector<double> raw(static_cast<std::size_t>(F));
  for (Eigen::Index f = 0; f < F; ++f) {
    double found = static_cast<double>(K - 1);
    for (Eigen::Index k = 0; k < K; ++k) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        const long kk = mirror(static_cast<long>(k) + j, static_cast<long>(K));
        const double m = peak > 0.0 && mags(f, kk) / peak > p.q ? 1.0 : 0.0;
        acc += kern[static_cast<std::size_t>(j + radius)] / ksum * m;
      }
      if (acc < p.gamma) {
        found = static_cast<double>(k);
        break;
      }
    }
    raw[static_cast<std::size_t>(f)] = found;
  }
  std::vector<double> out(raw.size());
  const int half = p.m_f / 2;
  for (long i = 0; i < static_cast<long>(raw.size()); ++i) {
    std::vector<double> win;
    for (int j = -half; j <= half; ++j) win.push_back(raw[static_cast<std::size_t>(mirror(i + j, static_cast<long>(raw.size())))]);
    std::sort(win.begin(), win.end());
    out[static_cast<std::size_t>(i)] = win[static_cast<std::size_t>(half)];
  }
  return out;
}

/// Random log-mel-like flow batch for the default-shaped estimator: `items`
/// items of `frames` frames each, random boundaries, half the conditions
/// dropped.
inline bwe::cfm::FlowBatch random_flow_batch(const bwe::cfm::EstimatorParams& p, int items, int frames,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int M = p.shape.mel_bands;
  std::vector<bwe::cfm::FlowItem> batch;
  for (int i = 0; i < items; ++i) {
    bwe::cfm::FlowItem it;
    it.x_lr.resize(frames, M);
    it.x_hr.resize(frames, M);
    for (Eigen::Index j = 0; j < it.x_lr.size(); ++j) {
      it.x_hr.data()[j] = -4.0 + 2.0 * g(rng);
      it.x_lr.data()[j] = it.x_hr.data()[j] - 3.0 * u(rng);
    }
    bwe::Grid c(frames, p.shape.control_dims);
    for (Eigen::Index j = 0; j < c.size(); ++j) c.data()[j] = u(rng);
    it.control = c;
    it.boundary = std::uniform_int_distribution<int>(0, M)(rng);
    batch.push_back(std::move(it));
  }
  bwe::cfm::PathConfig path;
  return bwe::cfm::make_flow_batch(p, batch, path, 0.5, rng);
}

struct GradientCheck {
  std::string tensor;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences on `per_tensor` random entries of every tensor.
/// rel = |fd - an| / max(|fd|, |an|, floor).
inline std::vector<GradientCheck> gradient_check(const bwe::cfm::EstimatorParams& params,
                                                 const bwe::cfm::FlowBatch& batch, std::size_t per_tensor,
                                                 std::uint64_t seed, double h = 1e-4, double floor = 1e-6) {
  using namespace bwe::cfm;
  const LossGradient lg = loss_and_gradient(params, batch);
  std::vector<GradientCheck> out;
  std::vector<Eigen::VectorXd> analytic;
  lg.grad.for_each_tensor([&](const char* name, const auto& v) {
    out.push_back({name, 0.0, 0});
    analytic.emplace_back(v);
  });
  std::mt19937_64 rng(seed);
  EstimatorParams work = params;
  std::size_t t = 0;
  work.for_each_tensor([&](const char*, auto v) {
    const auto n = static_cast<std::size_t>(v.size());
    for (std::size_t s = 0; s < std::min(per_tensor, n); ++s) {
      const auto i = static_cast<Eigen::Index>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
      const double orig = v[i];
      v[i] = orig + h;
      const double up = batch_loss(work, batch);
      v[i] = orig - h;
      const double down = batch_loss(work, batch);
      v[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[t][i];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
      out[t].max_rel_error = std::max(out[t].max_rel_error, rel);
      ++out[t].checked;
    }
    ++t;
  });
  return out;
}

/// Random velocity fields for the guidance identities.
inline bwe::Grid random_field(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  bwe::Grid x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

/// Untrained model with the default analysis and a narrow hidden layer.
inline bwe::cfm::FlowModel untrained_model(int hidden = 16, std::uint64_t seed = 3) {
  bwe::cfm::FlowModel m;
  bwe::cfm::EstimatorShape shape;
  shape.mel_bands = m.mel.bands;
  shape.hidden = hidden;
  bwe::Analysis a;
  m.params = bwe::cfm::EstimatorParams::init(shape, seed, bwe::band_anchors(a));
  m.sampler.seed = 5;
  return m;
}

} // namespace testing
