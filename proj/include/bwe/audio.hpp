#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "error.hpp"

namespace bwe {

/// Mono waveform. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  double sample_rate = 44100.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  double nyquist() const { return 0.5 * sample_rate; }
};

inline void validate(const AudioClip& clip) {
  require(clip.sample_rate > 0.0, "sample_rate must be positive");
  for (double s : clip.samples)
    require(std::isfinite(s), "audio clip contains non-finite samples");
}

/// Hard-clips to [-1, 1]; returns the number of samples that were clipped.
inline std::size_t clip_to_unit(AudioClip& clip) {
  std::size_t count = 0;
  for (double& s : clip.samples) {
    if (s > 1.0) { s = 1.0; ++count; }
    else if (s < -1.0) { s = -1.0; ++count; }
  }
  return count;
}

inline double peak(const AudioClip& clip) {
  double p = 0.0;
  for (double s : clip.samples) p = std::max(p, std::abs(s));
  return p;
}

inline void normalize_peak(AudioClip& clip, double target) {
  const double p = peak(clip);
  if (p <= 0.0) return;
  const double g = target / p;
  for (double& s : clip.samples) s *= g;
}

inline double rms(const AudioClip& clip) {
  if (clip.empty()) return 0.0;
  double acc = 0.0;
  for (double s : clip.samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(clip.size()));
}

// ---------------------------------------------------------------------------
// WAV container (RIFF). Reads PCM 16/24/32-bit and IEEE float 32/64, any
// channel count (downmixed by averaging). Writes mono PCM16 or float32.

enum class WavFormat { Pcm16, Float32 };

namespace wav_detail {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

inline std::uint32_t rd_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t rd_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

} // namespace wav_detail

inline AudioClip decode_wav(const std::vector<std::uint8_t>& bytes) {
  using namespace wav_detail;
  auto bad = [](const std::string& why) { return Error(ErrorKind::MalformedWav, "malformed WAV: " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw bad("missing RIFF/WAVE header");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t len = rd_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || avail < 16) throw bad("short fmt chunk");
      format = rd_u16(chunk + 8);
      channels = rd_u16(chunk + 10);
      rate = rd_u32(chunk + 12);
      bits = rd_u16(chunk + 22);
      if (format == 0xFFFE) {
        if (len < 40 || avail < 40) throw bad("short extensible fmt chunk");
        format = rd_u16(chunk + 8 + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = std::min<std::size_t>(len, avail);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (format == 0) throw bad("no fmt chunk");
  if (data == nullptr) throw bad("no data chunk");
  if (channels == 0 || rate == 0) throw bad("zero channels or sample rate");

  const bool is_float = format == 3;
  if (!(format == 1 || is_float)) throw bad("unsupported format tag " + std::to_string(format));
  if (is_float && bits != 32 && bits != 64) throw bad("unsupported float width");
  if (!is_float && bits != 16 && bits != 24 && bits != 32) throw bad("unsupported PCM width");

  const std::size_t width = bits / 8;
  const std::size_t frame_bytes = width * channels;
  const std::size_t frames = data_len / frame_bytes;

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * width;
      double v = 0.0;
      if (is_float && bits == 32) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else if (is_float) {
        std::memcpy(&v, p, 8);
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(rd_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(rd_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    const double mono = acc / channels;
    if (!std::isfinite(mono)) throw bad("non-finite sample");
    clip.samples[i] = mono;
  }
  return clip;
}

inline std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavFormat fmt = WavFormat::Float32) {
  using namespace wav_detail;
  const bool flt = fmt == WavFormat::Float32;
  const std::uint16_t bits = flt ? 32 : 16;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, flt ? 3 : 1);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_len);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    if (flt) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(c));
      put_u32(out, u);
    } else {
      const long q = std::clamp(std::lround(c * 32768.0), -32768L, 32767L);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline AudioClip read_wav(const std::string& path) { return decode_wav(read_file_bytes(path)); }

inline void write_wav(const std::string& path, const AudioClip& clip, WavFormat fmt = WavFormat::Float32) {
  write_file_bytes(path, encode_wav(clip, fmt));
}

} // namespace bwe
