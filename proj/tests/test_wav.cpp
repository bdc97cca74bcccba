#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "acam/wav.hpp"

using namespace acam;

namespace {

AudioBuffer random_audio(std::size_t channels, std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  AudioBuffer a;
  a.sample_rate = 44100.0;
  a.channels.assign(channels, std::vector<double>(frames));
  for (auto& ch : a.channels)
    for (auto& v : ch) v = u(rng);
  return a;
}

std::vector<unsigned char> bytes(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Wav, Float32RoundTrip) {
  const auto a = random_audio(8, 500, 1);
  const auto b = wav::decode(bytes(wav::encode(a, wav::SampleFormat::Float32)));
  ASSERT_EQ(b.channel_count(), 8u);
  ASSERT_EQ(b.frames(), 500u);
  EXPECT_EQ(b.sample_rate, 44100.0);
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t n = 0; n < 500; ++n) EXPECT_EQ(b.channels[c][n], static_cast<double>(static_cast<float>(a.channels[c][n])));
}

TEST(Wav, PcmRoundTrip) {
  const auto a = random_audio(3, 300, 2);
  const auto b16 = wav::decode(bytes(wav::encode(a, wav::SampleFormat::Pcm16)));
  const auto b24 = wav::decode(bytes(wav::encode(a, wav::SampleFormat::Pcm24)));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t n = 0; n < 300; ++n) {
      EXPECT_NEAR(b16.channels[c][n], a.channels[c][n], 0.5 / 32768.0 + 1e-15);
      EXPECT_NEAR(b24.channels[c][n], a.channels[c][n], 0.5 / 8388608.0 + 1e-15);
    }
}

TEST(Wav, PcmClipsOutOfRange) {
  AudioBuffer a;
  a.sample_rate = 8000.0;
  a.channels = {{2.0, -2.0, 1.0, -1.0}};
  const auto b = wav::decode(bytes(wav::encode(a, wav::SampleFormat::Pcm16)));
  EXPECT_EQ(b.channels[0][0], 32767.0 / 32768.0);
  EXPECT_EQ(b.channels[0][1], -1.0);
  EXPECT_EQ(b.channels[0][3], -1.0);
}

TEST(Wav, ExtensibleHeader) {
  // Rewrite a 16-bit PCM file as WAVE_FORMAT_EXTENSIBLE (40-byte fmt chunk).
  const auto a = random_audio(2, 10, 3);
  const std::string plain = wav::encode(a, wav::SampleFormat::Pcm16);
  std::string ext = plain.substr(0, 12) + "fmt ";
  auto u32 = [](std::uint32_t v) {
    std::string s;
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    return s;
  };
  ext += u32(40);
  ext += std::string("\xFE\xFF", 2) + plain.substr(22, 14);  // tag, channels, rate, byte rate, align, bits
  ext += std::string("\x16\x00", 2) + std::string("\x10\x00", 2) + u32(3);  // cbSize, valid bits, channel mask
  ext += std::string("\x01\x00\x00\x00\x00\x00\x10\x00\x80\x00\x00\xAA\x00\x38\x9B\x71", 16);
  ext += plain.substr(36);
  const auto b = wav::decode(bytes(ext));
  const auto c = wav::decode(bytes(plain));
  EXPECT_EQ(b.channels, c.channels);
}

TEST(Wav, RejectsMalformed) {
  EXPECT_THROW(wav::decode(bytes("not a wav file at all")), ParseError);
  const auto a = random_audio(1, 10, 4);
  std::string s = wav::encode(a, wav::SampleFormat::Pcm16);
  std::string eight_bit = s;
  eight_bit[34] = 8;  // bits per sample
  EXPECT_THROW(wav::decode(bytes(eight_bit)), ParseError);
  std::string no_data = s.substr(0, 36);
  EXPECT_THROW(wav::decode(bytes(no_data)), ParseError);
  std::string alaw = s;
  alaw[20] = 6;
  EXPECT_THROW(wav::decode(bytes(alaw)), ParseError);
}

TEST(Wav, MissingFile) { EXPECT_THROW(wav::read("/nonexistent/file.wav"), ParseError); }
