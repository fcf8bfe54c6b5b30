#pragma once

// Pickup from node velocities to a mono sample stream, DC blocking, soft
// limiting and 16-bit PCM WAV I/O.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "retisonic/core.hpp"

namespace retisonic::render {

inline constexpr int kDefaultBlockSize = 256;

struct AudioBlock {
  std::uint32_t index = 0;
  std::vector<float> samples;
};

/// Identity below the knee, tanh-shaped above it, asymptote 0.95.
inline double soft_limit(double x) {
  constexpr double knee = 0.5, span = 0.45;
  if (std::isnan(x)) return 0.0;
  const double a = std::abs(x);
  if (a <= knee) return x;
  return std::copysign(knee + span * std::tanh((a - knee) / span), x);
}

/// One-pole high-pass y[n] = a (y[n-1] + x[n] - x[n-1]).
class DcBlocker {
 public:
  explicit DcBlocker(double cutoff_hz = 20.0, double sample_rate = kSampleRate)
      : a_(std::exp(-2.0 * kPi * cutoff_hz / sample_rate)) {}

  double coefficient() const { return a_; }
  double process(double x) {
    const double y = a_ * (y1_ + x - x1_);
    x1_ = x;
    y1_ = y;
    return y;
  }
  void reset() { x1_ = y1_ = 0.0; }

 private:
  double a_;
  double x1_ = 0.0, y1_ = 0.0;
};

/// Weighted mean of node axial velocities times a gain. Weights are
/// normalized at construction.
class Pickup {
 public:
  Pickup() = default;
  Pickup(std::vector<double> weights, double gain) : gain_(gain) { set_weights(std::move(weights)); }

  void set_weights(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("pickup weights must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0.0)) throw ValidationError("pickup weights sum to zero");
    for (double& w : weights) w /= sum;
    weights_ = std::move(weights);
  }
  void set_gain(double g) { gain_ = g; }
  double gain() const { return gain_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> weights() const { return weights_; }

  double sample(std::span<const double> velocities) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) acc += weights_[i] * velocities[i];
    return gain_ * acc;
  }

 private:
  std::vector<double> weights_;
  double gain_ = 1.0;
};

/// Stateful block synthesizer: pickup, DC blocker, limiter.
class Renderer {
 public:
  Renderer(Pickup pickup, double dc_cutoff_hz = 20.0, double sample_rate = kSampleRate)
      : pickup_(std::move(pickup)), dc_(dc_cutoff_hz, sample_rate) {}

  Pickup& pickup() { return pickup_; }

  /// `velocities` is row-major [sample][node], n rows.
  void synthesize(std::span<const double> velocities, std::span<float> out) {
    const std::size_t nodes = pickup_.size();
    if (velocities.size() < out.size() * nodes) throw ValidationError("velocity buffer shorter than block");
    for (std::size_t s = 0; s < out.size(); ++s) {
      const double x = pickup_.sample(velocities.subspan(s * nodes, nodes));
      if (!std::isfinite(x)) throw NumericalFault("non-finite pickup sample");
      out[s] = static_cast<float>(soft_limit(dc_.process(x)));
    }
  }

  AudioBlock synthesize_block(std::span<const double> velocities, std::size_t n, std::uint32_t index) {
    AudioBlock b{index, std::vector<float>(n)};
    synthesize(velocities, b.samples);
    return b;
  }

  void reset() { dc_.reset(); }

 private:
  Pickup pickup_;
  DcBlocker dc_;
};

// ---- WAV ----

inline std::int16_t to_pcm16(double x) {
  const double c = std::clamp(std::isnan(x) ? 0.0 : x, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}
inline double from_pcm16(std::int16_t q) { return q / 32767.0; }

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

}  // namespace detail

inline std::string wav_header(std::uint32_t samples, std::uint32_t sample_rate = kSampleRate) {
  std::string h;
  const std::uint32_t data_bytes = samples * 2;
  h += "RIFF";
  detail::put_u32(h, 36 + data_bytes);
  h += "WAVEfmt ";
  detail::put_u32(h, 16);
  detail::put_u16(h, 1);  // PCM
  detail::put_u16(h, 1);  // mono
  detail::put_u32(h, sample_rate);
  detail::put_u32(h, sample_rate * 2);
  detail::put_u16(h, 2);
  detail::put_u16(h, 16);
  h += "data";
  detail::put_u32(h, data_bytes);
  return h;
}

inline void write_wav(const std::filesystem::path& path, std::span<const float> samples,
                      std::uint32_t sample_rate = kSampleRate) {
  std::string bytes = wav_header(static_cast<std::uint32_t>(samples.size()), sample_rate);
  bytes.reserve(bytes.size() + samples.size() * 2);
  for (float x : samples) detail::put_u16(bytes, static_cast<std::uint16_t>(to_pcm16(x)));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_wav(const std::filesystem::path& path, std::span<const AudioBlock> blocks,
                      std::uint32_t sample_rate = kSampleRate) {
  std::vector<float> all;
  for (const auto& b : blocks) all.insert(all.end(), b.samples.begin(), b.samples.end());
  write_wav(path, all, sample_rate);
}

struct WavData {
  std::uint32_t sample_rate = 0;
  std::vector<std::int16_t> pcm;
  std::vector<float> samples() const {
    std::vector<float> out(pcm.size());
    for (std::size_t i = 0; i < pcm.size(); ++i) out[i] = static_cast<float>(from_pcm16(pcm[i]));
    return out;
  }
};

/// Reads mono 16-bit PCM. Unknown chunks are skipped.
inline WavData read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto bad = [&](const std::string& why) { return IoError("'" + path.string() + "': " + why); };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw bad("not a RIFF/WAVE file");
  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* ck = buf.data() + pos;
    const std::uint32_t size = detail::get_u32(ck + 4);
    if (pos + 8 + size > buf.size()) throw bad("truncated chunk");
    if (std::memcmp(ck, "fmt ", 4) == 0) {
      if (size < 16) throw bad("short fmt chunk");
      if (detail::get_u16(ck + 8) != 1 || detail::get_u16(ck + 10) != 1 || detail::get_u16(ck + 22) != 16)
        throw bad("only mono 16-bit PCM is supported");
      out.sample_rate = detail::get_u32(ck + 12);
      have_fmt = true;
    } else if (std::memcmp(ck, "data", 4) == 0) {
      if (!have_fmt) throw bad("data chunk before fmt chunk");
      out.pcm.resize(size / 2);
      for (std::size_t i = 0; i < out.pcm.size(); ++i)
        out.pcm[i] = static_cast<std::int16_t>(detail::get_u16(ck + 8 + 2 * i));
      return out;
    }
    pos += 8 + size + (size & 1);
  }
  throw bad("no data chunk");
}

}  // namespace retisonic::render
