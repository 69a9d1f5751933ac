#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dsp.hpp"
#include "error.hpp"

namespace bwe {

/// Dynamic Spectral Contour parameters.
struct DscParams {
  double q = 0.025118864315095794; // 10^-1.6, on peak-normalized magnitude
  double sigma_f = 9.0;            // Gaussian smoothing along frequency, in bins
  double gamma = 0.07;             // smoothed-mask threshold
  int m_f = 9;                     // temporal median window, in frames
};

inline void validate(const DscParams& p) {
  require(p.q > 0.0, "dsc: q must be positive");
  require(p.sigma_f >= 0.0, "dsc: sigma_f must be >= 0");
  require(p.gamma > 0.0 && p.gamma < 1.0, "dsc: gamma must lie in (0, 1)");
  require(p.m_f >= 1 && p.m_f % 2 == 1, "dsc: m_f must be odd and >= 1");
}

enum class Feature { Dsc, Centroid, Rolloff };

inline const char* to_string(Feature f) {
  switch (f) {
    case Feature::Dsc: return "dsc";
    case Feature::Centroid: return "centroid";
    case Feature::Rolloff: return "rolloff";
  }
  return "?";
}

inline Feature feature_from_string(const std::string& s) {
  if (s == "dsc") return Feature::Dsc;
  if (s == "centroid") return Feature::Centroid;
  if (s == "rolloff") return Feature::Rolloff;
  throw Error(ErrorKind::InvalidArgument, "unknown feature '" + s + "'");
}

/// Per-frame control tracks in Hz. `values` is m features x F frames.
struct ControlSignal {
  Grid values;
  std::vector<std::string> feature_names;
  double sample_rate = 44100.0;
  int hop = 512;
  int n_fft = 2048;

  Eigen::Index features() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
  double nyquist() const { return 0.5 * sample_rate; }
  std::vector<double> track(Eigen::Index i = 0) const {
    return {values.row(i).data(), values.row(i).data() + values.cols()};
  }
};

namespace features_detail {
inline ControlSignal make_signal(const Spectrogram& spec, const char* name, const std::vector<double>& hz) {
  ControlSignal c;
  c.values.resize(1, static_cast<Eigen::Index>(hz.size()));
  for (std::size_t i = 0; i < hz.size(); ++i) c.values(0, static_cast<Eigen::Index>(i)) = hz[i];
  c.feature_names = {name};
  c.sample_rate = spec.sample_rate;
  c.hop = spec.config.hop;
  c.n_fft = spec.config.n_fft;
  return c;
}
} // namespace features_detail

/// Per-frame contour bins before temporal smoothing (steps 1-3).
inline std::vector<double> dsc_raw_bins(const Spectrogram& spec, const DscParams& p) {
  validate(p);
  const double peak = spec.mags.size() > 0 ? spec.mags.maxCoeff() : 0.0;
  const double scale = peak > 0.0 ? 1.0 / peak : 0.0;
  const auto K = static_cast<std::size_t>(spec.bins());

  std::vector<double> bins(static_cast<std::size_t>(spec.frames()));
  std::vector<double> mask(K);
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    for (std::size_t k = 0; k < K; ++k)
      mask[k] = spec.mags(f, static_cast<Eigen::Index>(k)) * scale > p.q ? 1.0 : 0.0;
    const auto smooth = gaussian_filter_1d(mask, p.sigma_f);
    const auto it = std::find_if(smooth.begin(), smooth.end(), [&](double v) { return v < p.gamma; });
    bins[static_cast<std::size_t>(f)] = it == smooth.end() ? static_cast<double>(K - 1)
                                                           : static_cast<double>(it - smooth.begin());
  }
  return bins;
}

/// Dynamic Spectral Contour: per-frame highest meaningfully active
/// frequency, in Hz.
inline ControlSignal compute_dsc(const Spectrogram& spec, const DscParams& p = {}) {
  auto bins = median_filter_1d(dsc_raw_bins(spec, p), p.m_f);
  for (double& b : bins) b *= spec.bin_hz();
  return features_detail::make_signal(spec, "dsc", bins);
}

/// Magnitude-weighted mean frequency per frame; silent frames give 0.
inline ControlSignal compute_centroid(const Spectrogram& spec) {
  std::vector<double> hz(static_cast<std::size_t>(spec.frames()));
  const double bin_hz = spec.bin_hz();
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index k = 0; k < spec.bins(); ++k) {
      num += static_cast<double>(k) * bin_hz * spec.mags(f, k);
      den += spec.mags(f, k);
    }
    hz[static_cast<std::size_t>(f)] = den > 0.0 ? num / den : 0.0;
  }
  return features_detail::make_signal(spec, "centroid", hz);
}

/// Lowest frequency whose cumulative energy reaches `pct` of the frame total.
inline ControlSignal compute_rolloff(const Spectrogram& spec, double pct = 0.85) {
  require(pct > 0.0 && pct < 1.0, "rolloff: pct must lie in (0, 1)");
  std::vector<double> hz(static_cast<std::size_t>(spec.frames()));
  const double bin_hz = spec.bin_hz();
  for (Eigen::Index f = 0; f < spec.frames(); ++f) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < spec.bins(); ++k) total += spec.mags(f, k) * spec.mags(f, k);
    double out = 0.0;
    if (total > 0.0) {
      double cum = 0.0;
      for (Eigen::Index k = 0; k < spec.bins(); ++k) {
        cum += spec.mags(f, k) * spec.mags(f, k);
        if (cum >= pct * total) {
          out = static_cast<double>(k) * bin_hz;
          break;
        }
      }
    }
    hz[static_cast<std::size_t>(f)] = out;
  }
  return features_detail::make_signal(spec, "rolloff", hz);
}

inline ControlSignal extract_feature(const Spectrogram& spec, Feature feature, const DscParams& p = {}) {
  switch (feature) {
    case Feature::Dsc: return compute_dsc(spec, p);
    case Feature::Centroid: return compute_centroid(spec);
    case Feature::Rolloff: return compute_rolloff(spec);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown feature");
}

/// Multiplies every value by `factor`, then clamps to [0, Nyquist].
inline ControlSignal scale_control(ControlSignal c, double factor) {
  require(factor > 0.0 && std::isfinite(factor), "scale_control: factor must be positive");
  const double nyq = c.nyquist();
  c.values = (c.values * factor).cwiseMax(0.0).cwiseMin(nyq);
  return c;
}

/// Resamples the frame axis by linear interpolation to `frames` frames.
inline ControlSignal resample_frames(const ControlSignal& c, Eigen::Index frames) {
  require(frames >= 1 && c.frames() >= 1, "resample_frames: empty signal");
  if (frames == c.frames()) return c;
  ControlSignal out = c;
  out.values.resize(c.features(), frames);
  for (Eigen::Index j = 0; j < frames; ++j) {
    const double pos = frames == 1 ? 0.0 : static_cast<double>(j) * (c.frames() - 1) / (frames - 1);
    const auto i0 = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index i1 = std::min(i0 + 1, c.frames() - 1);
    const double a = pos - static_cast<double>(i0);
    for (Eigen::Index r = 0; r < c.features(); ++r)
      out.values(r, j) = (1.0 - a) * c.values(r, i0) + a * c.values(r, i1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Columnar text format:
//
//   # sample_rate=44100 hop=512 n_fft=2048 unit=Hz
//   frame,dsc
//   0,4005.3515625
//
// Values use shortest round-trip formatting, so files reproduce exactly.

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw Error(ErrorKind::MalformedControl, "control file: bad number '" + std::string(s) + "'");
  return v;
}

inline std::string to_csv(const ControlSignal& c) {
  std::string out = "# sample_rate=" + format_double(c.sample_rate) + " hop=" + std::to_string(c.hop) +
                    " n_fft=" + std::to_string(c.n_fft) + " unit=Hz\n";
  out += "frame";
  for (const auto& n : c.feature_names) out += "," + n;
  out += "\n";
  for (Eigen::Index j = 0; j < c.frames(); ++j) {
    out += std::to_string(j);
    for (Eigen::Index r = 0; r < c.features(); ++r) out += "," + format_double(c.values(r, j));
    out += "\n";
  }
  return out;
}

inline ControlSignal from_csv(const std::string& text) {
  auto bad = [](const std::string& why) { return Error(ErrorKind::MalformedControl, "control file: " + why); };
  std::istringstream in(text);
  std::string line;

  ControlSignal c;
  bool have_meta = false, have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string kv;
      while (meta >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw bad("bad metadata token '" + kv + "'");
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "sample_rate") c.sample_rate = parse_double(val);
        else if (key == "hop") c.hop = static_cast<int>(parse_double(val));
        else if (key == "n_fft") c.n_fft = static_cast<int>(parse_double(val));
        else if (key == "unit") { if (val != "Hz") throw bad("unsupported unit '" + val + "'"); }
        else throw bad("unknown metadata key '" + key + "'");
      }
      have_meta = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!have_header) {
      if (cells.size() < 2 || cells[0] != "frame") throw bad("header must start with 'frame'");
      c.feature_names.assign(cells.begin() + 1, cells.end());
      have_header = true;
      continue;
    }
    if (cells.size() != c.feature_names.size() + 1) throw bad("row has wrong column count");
    if (static_cast<std::size_t>(parse_double(cells[0])) != rows.size()) throw bad("frame indices must be 0, 1, 2, ...");
    std::vector<double> r;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const double v = parse_double(cells[i]);
      if (!std::isfinite(v) || v < 0.0) throw bad("values must be finite and nonnegative");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  if (!have_meta) throw bad("missing metadata line");
  if (!have_header) throw bad("missing header row");
  if (rows.empty()) throw bad("no frames");
  if (!(c.sample_rate > 0.0) || c.hop < 1 || c.n_fft < 2) throw bad("bad metadata values");

  c.values.resize(static_cast<Eigen::Index>(c.feature_names.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t r = 0; r < rows[j].size(); ++r)
      c.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[j][r];
  return c;
}

} // namespace bwe
