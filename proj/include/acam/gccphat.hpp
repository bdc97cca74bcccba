#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acam/error.hpp"
#include "acam/fft.hpp"
#include "acam/geometry.hpp"
#include "acam/tdoa_model.hpp"

namespace acam {

/// Equal-length channels, channel i = microphone i.
struct AudioBuffer {
  std::vector<std::vector<double>> channels;
  double sample_rate = 0.0;  // Hz

  std::size_t channel_count() const noexcept { return channels.size(); }
  std::size_t frames() const noexcept { return channels.empty() ? 0 : channels.front().size(); }

  void validate() const {
    if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be positive");
    for (const auto& ch : channels)
      if (ch.size() != frames()) throw DimensionMismatch("audio channels differ in length");
  }
};

struct EmissionWindow {
  std::size_t start_sample = 0;
  std::size_t length_samples = 0;
  std::size_t board_index = 0;
  std::size_t source_index = 0;
};

inline constexpr std::size_t kMinGccSamples = 16;
inline constexpr double kPhatFloor = 1e-12;

/// GCC-PHAT delay estimator for a fixed input length; reuses its FFT plans.
class GccPhat {
 public:
  explicit GccPhat(std::size_t length) : length_(length), fft_(fft_size(length)) {
    if (length_ < kMinGccSamples) throw InvalidArgument("GCC-PHAT needs at least 16 samples per signal");
  }

  std::size_t length() const noexcept { return length_; }

  /// Delay of `a` relative to `b` in seconds (positive when `a` lags `b`).
  /// The peak is searched within +-floor(max_lag * sample_rate) samples and
  /// refined by a parabola through the peak and its two neighbours.
  double delay(std::span<const double> a, std::span<const double> b, double sample_rate, double max_lag) {
    if (a.size() != length_ || b.size() != length_) throw DimensionMismatch("GCC-PHAT inputs must have the configured length");
    if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be positive");
    if (!(max_lag > 0.0) || !std::isfinite(max_lag)) throw InvalidArgument("max lag must be positive");
    const double lag_samples = std::floor(max_lag * sample_rate);
    if (lag_samples >= static_cast<double>(length_)) throw InvalidArgument("max lag must be shorter than the signal");
    const auto m = static_cast<long>(lag_samples);
    if (m < 1) throw InvalidArgument("max lag is shorter than one sample");

    const auto fa = fft_.forward(a);
    const auto fb = fft_.forward(b);
    std::vector<std::complex<double>> cross(fa.size());
    bool any = false;
    for (std::size_t k = 0; k < cross.size(); ++k) {
      const std::complex<double> x = fa[k] * std::conj(fb[k]);
      const double mag = std::abs(x);
      if (mag < kPhatFloor) {
        cross[k] = 0.0;
      } else {
        cross[k] = x / mag;
        any = true;
      }
    }
    if (!any) throw NoSignal("no spectral content in GCC-PHAT inputs");
    const auto r = fft_.inverse(cross);

    const auto n = static_cast<long>(fft_.size());
    auto at = [&](long lag) { return r[static_cast<std::size_t>(lag < 0 ? n + lag : lag)]; };
    long best = -m;
    double peak = -std::numeric_limits<double>::infinity();
    for (long lag = -m; lag <= m; ++lag) {
      const double v = at(lag);
      if (v > peak) {
        peak = v;
        best = lag;
      }
    }
    if (best == -m || best == m)
      throw AmbiguousPeak("GCC-PHAT peak at the search boundary (lag " + std::to_string(best) + " samples)");

    const double ym = at(best - 1), y0 = at(best), yp = at(best + 1);
    const double denom = ym - 2.0 * y0 + yp;
    double frac = 0.0;
    if (denom < 0.0) frac = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
    return (static_cast<double>(best) + frac) / sample_rate;
  }

 private:
  // Zero padding to at least 2L avoids circular wrap of the correlation.
  static std::size_t fft_size(std::size_t length) {
    std::size_t n = 1;
    while (n < 2 * length) n <<= 1;
    return n;
  }

  std::size_t length_;
  RealFft fft_;
};

inline double gcc_phat(std::span<const double> sig_a, std::span<const double> sig_b, double sample_rate, double max_lag) {
  if (sig_a.size() != sig_b.size()) throw DimensionMismatch("GCC-PHAT inputs differ in length");
  if (sig_a.size() < kMinGccSamples) throw InvalidArgument("GCC-PHAT needs at least 16 samples per signal");
  return GccPhat(sig_a.size()).delay(sig_a, sig_b, sample_rate, max_lag);
}

/// Largest physically possible TDOA for an array: its diameter over c.
inline double default_max_lag(const MicArray& nominal, double c) {
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  return nominal.diameter() / c;
}

struct ExtractionFailure {
  std::size_t window = 0;
  MicPair pair{0, 0};
  std::string message;
};

class ExtractionError : public Error {
 public:
  explicit ExtractionError(std::vector<ExtractionFailure> failures)
      : Error(describe(failures)), failures_(std::move(failures)) {}
  const std::vector<ExtractionFailure>& failures() const noexcept { return failures_; }

 private:
  static std::string describe(const std::vector<ExtractionFailure>& f) {
    std::string s = std::to_string(f.size()) + " TDOA extraction failure(s)";
    if (!f.empty())
      s += "; first: window " + std::to_string(f.front().window) + " pair (" + std::to_string(f.front().pair.mic) + "," +
           std::to_string(f.front().pair.ref) + "): " + f.front().message;
    return s;
  }
  std::vector<ExtractionFailure> failures_;
};

/// One measurement block per window, rows in the strategy's block order.
/// Event source positions are left at zero; they come from board poses.
/// Every window is processed; any failures are reported together.
inline MeasurementSet extract_measurements(const AudioBuffer& audio, const std::vector<EmissionWindow>& windows,
                                           const PairingStrategy& strategy, double max_lag) {
  audio.validate();
  if (windows.empty()) throw InvalidArgument("no emission windows");
  const std::size_t n = audio.channel_count();
  const auto pairs = strategy.pairs(n);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    if (win.length_samples < kMinGccSamples)
      throw InvalidArgument("window " + std::to_string(w) + " is shorter than 16 samples");
    if (win.start_sample + win.length_samples > audio.frames())
      throw InvalidArgument("window " + std::to_string(w) + " extends past the end of the audio");
    if (w > 0 && win.start_sample < windows[w - 1].start_sample + windows[w - 1].length_samples)
      throw InvalidArgument("windows must be sorted and non-overlapping (window " + std::to_string(w) + ")");
  }

  MeasurementSet z;
  z.strategy = strategy;
  z.mic_count = n;
  z.values.resize(static_cast<Eigen::Index>(pairs.size() * windows.size()));
  z.events.reserve(windows.size());
  std::vector<ExtractionFailure> failures;
  std::unique_ptr<GccPhat> gcc;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    z.events.push_back({win.board_index, win.source_index, Vec3::Zero()});
    if (!gcc || gcc->length() != win.length_samples) gcc = std::make_unique<GccPhat>(win.length_samples);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      const auto& p = pairs[r];
      const std::span<const double> a(audio.channels[p.mic].data() + win.start_sample, win.length_samples);
      const std::span<const double> b(audio.channels[p.ref].data() + win.start_sample, win.length_samples);
      const auto row = static_cast<Eigen::Index>(w * pairs.size() + r);
      try {
        z.values[row] = gcc->delay(a, b, audio.sample_rate, max_lag);
      } catch (const Error& e) {
        z.values[row] = std::numeric_limits<double>::quiet_NaN();
        failures.push_back({w, p, e.what()});
      }
    }
  }
  if (!failures.empty()) throw ExtractionError(std::move(failures));
  return z;
}

struct ChirpSpec {
  double f_start = 500.0;   // Hz
  double f_end = 16000.0;   // Hz, capped at 0.4 * sample_rate
  double duration = 0.04;   // seconds
  double lead = 0.005;      // seconds of silence before emission
  double tail = 0.02;       // seconds after the latest arrival
};

/// Hann-tapered linear chirp sampled at `sample_rate`.
inline std::vector<double> make_chirp(const ChirpSpec& spec, double sample_rate) {
  const double f1 = std::min(spec.f_end, 0.4 * sample_rate);
  const auto len = static_cast<std::size_t>(std::round(spec.duration * sample_rate));
  std::vector<double> out(len);
  const double k = (f1 - spec.f_start) / spec.duration;
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double taper = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len - 1));
    out[i] = taper * std::sin(2.0 * std::numbers::pi * (spec.f_start * t + 0.5 * k * t * t));
  }
  return out;
}

/// Propagation time from the event's source to every microphone, seconds.
inline std::vector<double> emission_delays(const MicArray& mics, const EmissionEvent& event, double c) {
  std::vector<double> d(mics.size());
  for (std::size_t i = 0; i < mics.size(); ++i) d[i] = detail::checked_distance(mics[i], event.source_position) / c;
  return d;
}

/// Frames needed for one synthesized emission of `event`.
inline std::size_t emission_frames(const MicArray& mics, const EmissionEvent& event, double c, double sample_rate,
                                   const ChirpSpec& chirp = {}) {
  const auto d = emission_delays(mics, event, c);
  const double latest = *std::max_element(d.begin(), d.end());
  return static_cast<std::size_t>(std::ceil((chirp.lead + latest + chirp.duration + chirp.tail) * sample_rate));
}

/// One emission as heard by every microphone: the chirp delayed by
/// lead + |x_i - s| / c (fractional delay applied as a linear phase in the
/// frequency domain), plus independent white Gaussian noise at `snr_db`
/// relative to the chirp RMS. snr_db = +inf adds no noise.
inline AudioBuffer synth_emission(const MicArray& mics, const EmissionEvent& event, double c, double sample_rate,
                                  double snr_db, std::uint64_t seed, std::size_t frames = 0, const ChirpSpec& chirp = {}) {
  if (!(sample_rate >= 8000.0)) throw InvalidArgument("synthetic audio needs a sample rate of at least 8 kHz");
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  const auto delays = emission_delays(mics, event, c);
  const std::size_t need = emission_frames(mics, event, c, sample_rate, chirp);
  if (frames == 0) frames = need;
  if (frames < need) throw InvalidArgument("requested frame count is too short for the emission");

  const auto pulse = make_chirp(chirp, sample_rate);
  double rms = 0.0;
  for (double v : pulse) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(pulse.size()));

  // Transform length with room for the delayed pulse, so the circular shift never wraps.
  RealFft fft(frames + pulse.size());
  const auto spectrum = fft.forward(pulse);
  const double n = static_cast<double>(fft.size());

  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.channels.resize(mics.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double noise_std = std::isinf(snr_db) && snr_db > 0 ? 0.0 : rms * std::pow(10.0, -snr_db / 20.0);
  std::vector<std::complex<double>> shifted(spectrum.size());
  for (std::size_t i = 0; i < mics.size(); ++i) {
    const double shift = (chirp.lead + delays[i]) * sample_rate;
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) * shift / n;
      shifted[k] = spectrum[k] * std::polar(1.0, phase);
    }
    if (fft.size() % 2 == 0) shifted.back() = {shifted.back().real(), 0.0};
    auto x = fft.inverse(shifted);
    x.resize(frames);
    for (auto& v : x) v /= n;
    if (noise_std > 0.0)
      for (auto& v : x) v += noise_std * gauss(rng);
    out.channels[i] = std::move(x);
  }
  return out;
}

struct SynthSession {
  AudioBuffer audio;
  std::vector<EmissionWindow> windows;
};

/// Emissions played back to back, one equal-length window per event.
/// Event e uses noise seed derived from (seed, e).
inline SynthSession synth_session(const MicArray& mics, const std::vector<EmissionEvent>& events, double c,
                                  double sample_rate, double snr_db, std::uint64_t seed, const ChirpSpec& chirp = {}) {
  if (events.empty()) throw InvalidArgument("no emission events");
  std::size_t frames = 0;
  for (const auto& ev : events) frames = std::max(frames, emission_frames(mics, ev, c, sample_rate, chirp));
  SynthSession s;
  s.audio.sample_rate = sample_rate;
  s.audio.channels.assign(mics.size(), {});
  for (auto& ch : s.audio.channels) ch.reserve(frames * events.size());
  for (std::size_t e = 0; e < events.size(); ++e) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(e)};
    std::uint32_t w[2];
    seq.generate(w, w + 2);
    const auto buf = synth_emission(mics, events[e], c, sample_rate, snr_db,
                                    (static_cast<std::uint64_t>(w[0]) << 32) | w[1], frames, chirp);
    for (std::size_t i = 0; i < mics.size(); ++i)
      s.audio.channels[i].insert(s.audio.channels[i].end(), buf.channels[i].begin(), buf.channels[i].end());
    s.windows.push_back({e * frames, frames, events[e].board_index, events[e].source_index});
  }
  return s;
}

}  // namespace acam
