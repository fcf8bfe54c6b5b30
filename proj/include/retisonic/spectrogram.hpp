#pragma once

// Hann-windowed STFT magnitudes in dB, CSV/PNG export and the broadband
// onset metric.

#include <fftw3.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retisonic/core.hpp"

namespace retisonic::render {

inline constexpr double kDbFloor = -120.0;

struct Spectrogram {
  int window = 1024;
  int hop = 256;
  double sample_rate = kSampleRate;
  int frames = 0;
  int bins = 0;  // window / 2 + 1
  double norm = 1.0;  // linear magnitude = |X| * norm (unit sine peak -> 0 dB)
  std::vector<double> db;  // row-major [frame][bin]

  double at(int frame, int bin) const { return db[static_cast<std::size_t>(frame) * bins + bin]; }
  double frame_time(int frame) const { return (frame * hop + 0.5 * window) / sample_rate; }
  double bin_frequency(int bin) const { return bin * sample_rate / window; }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlan {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
  explicit FftwPlan(int n) {
    std::lock_guard lock(fftw_planner_mutex());
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
};

}  // namespace detail

inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

inline Spectrogram spectrogram(std::span<const float> samples, int window = 1024, int hop = 256,
                               double sample_rate = kSampleRate) {
  if (window < 2 || window % 2 != 0 || hop < 1) throw ValidationError("window must be even and >= 2, hop >= 1");
  if (samples.size() < static_cast<std::size_t>(window))
    throw ValidationError("spectrogram needs at least " + std::to_string(window) + " samples, got " +
                          std::to_string(samples.size()));
  Spectrogram s;
  s.window = window;
  s.hop = hop;
  s.sample_rate = sample_rate;
  s.bins = window / 2 + 1;
  s.frames = static_cast<int>((samples.size() - static_cast<std::size_t>(window)) / static_cast<std::size_t>(hop)) + 1;
  const auto w = hann_window(window);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  s.norm = 2.0 / wsum;
  s.db.resize(static_cast<std::size_t>(s.frames) * s.bins);
  detail::FftwPlan plan(window);
  for (int f = 0; f < s.frames; ++f) {
    const std::size_t off = static_cast<std::size_t>(f) * hop;
    for (int i = 0; i < window; ++i) plan.in[i] = w[static_cast<std::size_t>(i)] * samples[off + static_cast<std::size_t>(i)];
    fftw_execute(plan.plan);
    for (int k = 0; k < s.bins; ++k) {
      const double mag = std::hypot(plan.out[k][0], plan.out[k][1]) * s.norm;
      s.db[static_cast<std::size_t>(f) * s.bins + k] = mag > 0.0 ? std::max(kDbFloor, 20.0 * std::log10(mag)) : kDbFloor;
    }
  }
  return s;
}

/// Header `frame,t,b0..b{bins-1}`; every value after the frame index uses six decimals.
inline void write_spectrogram_csv(const Spectrogram& s, std::ostream& out) {
  out << "frame,t";
  for (int k = 0; k < s.bins; ++k) out << ",b" << k;
  out << '\n';
  char buf[64];
  std::string line;
  for (int f = 0; f < s.frames; ++f) {
    line = std::to_string(f);
    std::snprintf(buf, sizeof buf, ",%.6f", s.frame_time(f));
    line += buf;
    for (int k = 0; k < s.bins; ++k) {
      std::snprintf(buf, sizeof buf, ",%.6f", s.at(f, k));
      line += buf;
    }
    line += '\n';
    out << line;
  }
}

inline void write_spectrogram_csv(const Spectrogram& s, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  write_spectrogram_csv(s, f);
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

/// Grayscale PNG: time runs left to right, frequency bottom to top, -120..0 dB.
inline void write_spectrogram_png(const Spectrogram& s, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(s.frames));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.frames), static_cast<png_uint_32>(s.bins), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int k = s.bins - 1; k >= 0; --k) {
    for (int f = 0; f < s.frames; ++f) {
      const double v = std::clamp((s.at(f, k) - kDbFloor) / -kDbFloor, 0.0, 1.0);
      row[static_cast<std::size_t>(f)] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline constexpr int kMinOnsetFrames = 10;

struct Band {
  double lo_hz = 200.0;
  double hi_hz = 8000.0;
};

/// Mean linear power over the band and the given frames, in dB.
inline double band_mean_db(const Spectrogram& s, int frame_begin, int frame_end, Band band = {}) {
  double acc = 0.0;
  std::size_t n = 0;
  for (int f = frame_begin; f < frame_end; ++f)
    for (int k = 0; k < s.bins; ++k) {
      const double hz = s.bin_frequency(k);
      if (hz < band.lo_hz || hz > band.hi_hz) continue;
      acc += std::pow(10.0, s.at(f, k) / 10.0);
      ++n;
    }
  if (n == 0) throw ValidationError("band contains no bins");
  return 10.0 * std::log10(acc / static_cast<double>(n));
}

/// Band energy after t_split minus band energy before it (dB). A frame
/// counts on one side only if its whole window lies there; frames straddling
/// the split are left out. `span` limits each side to that many seconds
/// (by frame center) around the split.
inline double broadband_onset_metric(const Spectrogram& s, double t_split, std::optional<double> span = std::nullopt,
                                     Band band = {}) {
  int before_begin = s.frames, before_end = 0, after_begin = s.frames, after_end = 0;
  const double half = 0.5 * s.window / s.sample_rate;
  for (int f = 0; f < s.frames; ++f) {
    const double t = s.frame_time(f);
    if (span && std::abs(t - t_split) > *span) continue;
    if (t + half <= t_split) before_begin = std::min(before_begin, f), before_end = f + 1;
    else if (t - half >= t_split) after_begin = std::min(after_begin, f), after_end = f + 1;
  }
  const int nb = std::max(0, before_end - before_begin), na = std::max(0, after_end - after_begin);
  if (nb < kMinOnsetFrames || na < kMinOnsetFrames)
    throw ValidationError("onset metric needs >= 10 frames on each side (have " + std::to_string(nb) + " and " +
                          std::to_string(na) + ")");
  return band_mean_db(s, after_begin, after_end, band) - band_mean_db(s, before_begin, before_end, band);
}

}  // namespace retisonic::render
