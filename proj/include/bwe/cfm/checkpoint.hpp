#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "../audio.hpp"
#include "../dsp.hpp"
#include "../error.hpp"
#include "../features.hpp"
#include "../mel.hpp"
#include "estimator.hpp"
#include "guidance.hpp"
#include "path.hpp"
#include "sampler.hpp"

namespace bwe::cfm {

/// Trained estimator plus everything needed to run it on audio.
struct FlowModel {
  EstimatorParams params;
  PathConfig path;
  GuidanceConfig guidance;
  SamplerConfig sampler;
  StftConfig stft;
  MelConfig mel;
  Feature feature = Feature::Dsc;
  DscParams dsc;
  double sample_rate = 44100.0;
};

inline constexpr std::array<char, 4> kCheckpointMagic = {'C', 'F', 'M', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace checkpoint_detail {

class Writer {
public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(int v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  std::vector<std::uint8_t> out;
};

class Reader {
public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}

  void need(std::size_t n) const {
    require(pos + n <= bytes.size(), ErrorKind::MalformedCheckpoint, "checkpoint: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    return v;
  }
  int i32() { return static_cast<int>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

} // namespace checkpoint_detail

/// Layout: magic, u32 version, shape header, path / guidance / sampler /
/// analysis configs, u64 weight count, little-endian f64 weights in
/// w1 b1 w2 b2 w3 b3 ga gc order (matrices column-major), then the M band
/// anchors.
inline std::vector<std::uint8_t> encode_checkpoint(const FlowModel& m) {
  checkpoint_detail::Writer w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  const EstimatorShape& s = m.params.shape;
  w.i32(s.mel_bands);
  w.i32(s.control_dims);
  w.i32(s.hidden);
  w.i32(s.time_freqs);
  w.u8(static_cast<std::uint8_t>(m.path.kind));
  w.f64(m.path.sigma_min);
  w.i32(m.path.mixed_boundary);
  w.f64(m.guidance.w);
  w.u8(static_cast<std::uint8_t>(m.guidance.s_mode));
  w.i32(m.guidance.zero_init_steps);
  w.f64(m.guidance.cond_dropout_p);
  w.i32(m.sampler.steps);
  w.u64(m.sampler.seed);
  w.i32(m.stft.n_fft);
  w.i32(m.stft.hop);
  w.i32(m.mel.bands);
  w.f64(m.mel.f_min);
  w.f64(m.mel.f_max);
  w.f64(m.mel.log_floor);
  w.u8(static_cast<std::uint8_t>(m.feature));
  w.f64(m.dsc.q);
  w.f64(m.dsc.sigma_f);
  w.f64(m.dsc.gamma);
  w.i32(m.dsc.m_f);
  w.f64(m.sample_rate);
  w.u64(m.params.parameter_count());
  m.params.for_each_tensor([&](const char*, const auto& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
  });
  for (Eigen::Index i = 0; i < m.params.anchors.size(); ++i) w.f64(m.params.anchors(i));
  return std::move(w.out);
}

inline FlowModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  checkpoint_detail::Reader r(bytes);
  for (char c : kCheckpointMagic)
    require(r.u8() == static_cast<std::uint8_t>(c), ErrorKind::MalformedCheckpoint, "checkpoint: bad magic bytes");
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::VersionMismatch,
          "checkpoint: format version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointVersion));

  FlowModel m;
  EstimatorShape s;
  s.mel_bands = r.i32();
  s.control_dims = r.i32();
  s.hidden = r.i32();
  s.time_freqs = r.i32();
  require(s.mel_bands > 0 && s.control_dims >= 0 && s.hidden > 0 && s.time_freqs >= 0 && s.mel_bands <= 4096 &&
              s.hidden <= 1 << 16 && s.control_dims <= 64 && s.time_freqs <= 64,
          ErrorKind::MalformedCheckpoint, "checkpoint: implausible shape header");
  const std::uint8_t kind = r.u8();
  require(kind <= 1, ErrorKind::MalformedCheckpoint, "checkpoint: bad path kind");
  m.path.kind = static_cast<PathKind>(kind);
  m.path.sigma_min = r.f64();
  m.path.mixed_boundary = r.i32();
  m.guidance.w = r.f64();
  const std::uint8_t mode = r.u8();
  require(mode <= 1, ErrorKind::MalformedCheckpoint, "checkpoint: bad scale mode");
  m.guidance.s_mode = static_cast<ScaleMode>(mode);
  m.guidance.zero_init_steps = r.i32();
  m.guidance.cond_dropout_p = r.f64();
  m.sampler.steps = r.i32();
  m.sampler.seed = r.u64();
  m.stft.n_fft = r.i32();
  m.stft.hop = r.i32();
  m.mel.bands = r.i32();
  m.mel.f_min = r.f64();
  m.mel.f_max = r.f64();
  m.mel.log_floor = r.f64();
  const std::uint8_t feat = r.u8();
  require(feat <= 2, ErrorKind::MalformedCheckpoint, "checkpoint: bad feature id");
  m.feature = static_cast<Feature>(feat);
  m.dsc.q = r.f64();
  m.dsc.sigma_f = r.f64();
  m.dsc.gamma = r.f64();
  m.dsc.m_f = r.i32();
  m.sample_rate = r.f64();

  m.params = EstimatorParams::zeros(s);
  const std::uint64_t count = r.u64();
  require(count == m.params.parameter_count(), ErrorKind::ShapeMismatch,
          "checkpoint: weight count " + std::to_string(count) + " does not match the shape header");
  r.need((count + static_cast<std::uint64_t>(s.mel_bands)) * 8);
  m.params.for_each_tensor([&](const char*, auto v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.f64();
  });
  for (Eigen::Index i = 0; i < m.params.anchors.size(); ++i) m.params.anchors(i) = r.f64();
  require(r.pos == bytes.size(), ErrorKind::MalformedCheckpoint, "checkpoint: trailing bytes");
  require(m.params.all_finite(), ErrorKind::MalformedCheckpoint, "checkpoint: non-finite weights");
  require(m.mel.bands == s.mel_bands, ErrorKind::ShapeMismatch, "checkpoint: mel bands disagree with the estimator");
  validate(m.stft);
  validate(m.path, s.mel_bands);
  validate(m.guidance);
  validate(m.sampler);
  validate(m.dsc);
  return m;
}

inline void save_checkpoint(const std::string& path, const FlowModel& m) { write_file_bytes(path, encode_checkpoint(m)); }

inline FlowModel load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

} // namespace bwe::cfm
