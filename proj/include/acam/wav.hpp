#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "acam/error.hpp"
#include "acam/gccphat.hpp"

namespace acam::wav {

enum class SampleFormat { Pcm16, Pcm24, Float32 };

namespace detail {

inline std::uint32_t u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Decodes a RIFF/WAVE image. Supports PCM 16/24/32-bit and IEEE float 32,
/// plain or WAVE_FORMAT_EXTENSIBLE. Integer samples are scaled to [-1, 1).
inline AudioBuffer decode(const std::vector<unsigned char>& bytes, const std::string& name = "<memory>") {
  using namespace detail;
  auto fail = [&](const std::string& msg) { return ParseError(name, 0, msg); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated final data chunk.
      if (std::memcmp(hdr, "data", 4) != 0) throw fail("chunk extends past end of file");
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) throw fail("fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      format = u16(f);
      channels = u16(f + 2);
      rate = u32(f + 4);
      bits = u16(f + 14);
      if (format == kFormatExtensible) {
        if (avail < 26) throw fail("extensible fmt chunk too short");
        format = u16(f + 24);  // first two bytes of the subformat GUID
      }
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0) throw fail("missing or empty fmt chunk");
  if (!data) throw fail("missing data chunk");
  if (rate == 0) throw fail("sample rate is zero");

  const bool is_float = format == kFormatFloat;
  if (!(format == kFormatPcm || is_float)) throw fail("unsupported sample format " + std::to_string(format));
  if (is_float && bits != 32) throw fail("only 32-bit float samples are supported");
  if (!is_float && bits != 16 && bits != 24 && bits != 32) throw fail("unsupported PCM bit depth " + std::to_string(bits));

  const std::size_t width = bits / 8;
  const std::size_t frame = width * channels;
  const std::size_t frames = data_size / frame;
  AudioBuffer out;
  out.sample_rate = static_cast<double>(rate);
  out.channels.assign(channels, std::vector<double>(frames));
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const unsigned char* s = data + n * frame + ch * width;
      double v = 0.0;
      if (is_float) {
        const std::uint32_t raw = u32(s);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        v = f;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(u16(s)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = static_cast<std::int32_t>(s[0] | (s[1] << 8) | (s[2] << 16));
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(u32(s)) / 2147483648.0;
      }
      out.channels[ch][n] = v;
    }
  }
  return out;
}

inline AudioBuffer read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open WAV file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes, path);
}

/// Encodes channels as a canonical 44-byte-header WAV. Integer formats clip to [-1, 1].
inline std::string encode(const AudioBuffer& audio, SampleFormat fmt = SampleFormat::Float32) {
  using namespace detail;
  audio.validate();
  if (audio.channels.empty()) throw InvalidArgument("cannot write a WAV file without channels");
  const std::uint16_t bits = fmt == SampleFormat::Pcm16 ? 16 : fmt == SampleFormat::Pcm24 ? 24 : 32;
  const std::uint16_t channels = static_cast<std::uint16_t>(audio.channel_count());
  const std::uint32_t block = channels * (bits / 8u);
  const auto data_size = static_cast<std::uint32_t>(audio.frames() * block);
  const auto rate = static_cast<std::uint32_t>(std::lround(audio.sample_rate));

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, fmt == SampleFormat::Float32 ? kFormatFloat : kFormatPcm);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * block);
  put_u16(out, static_cast<std::uint16_t>(block));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_size);
  for (std::size_t n = 0; n < audio.frames(); ++n) {
    for (const auto& ch : audio.channels) {
      const double v = ch[n];
      if (fmt == SampleFormat::Float32) {
        const float f = static_cast<float>(v);
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof raw);
        put_u32(out, raw);
      } else if (fmt == SampleFormat::Pcm16) {
        const auto x = static_cast<std::int16_t>(std::lround(std::clamp(v, -1.0, 32767.0 / 32768.0) * 32768.0));
        put_u16(out, static_cast<std::uint16_t>(x));
      } else {
        const auto x = static_cast<std::int32_t>(std::lround(std::clamp(v, -1.0, 8388607.0 / 8388608.0) * 8388608.0));
        const auto u = static_cast<std::uint32_t>(x);
        out.push_back(static_cast<char>(u & 0xff));
        out.push_back(static_cast<char>((u >> 8) & 0xff));
        out.push_back(static_cast<char>((u >> 16) & 0xff));
      }
    }
  }
  return out;
}

}  // namespace acam::wav
