#pragma once

// Offline sessions: sonify a sequence into WAV + spectrogram + logs, and the
// per-stage benchmark.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "retisonic/config.hpp"
#include "retisonic/ingest.hpp"
#include "retisonic/phantom.hpp"
#include "retisonic/pipeline.hpp"
#include "retisonic/render.hpp"
#include "retisonic/spectrogram.hpp"

namespace retisonic::runtime {

/// Scripted phantom injection for the session's phantom settings and seed.
inline ingest::PhantomSequence scripted_phantom(const SessionConfig& cfg, double inject_seconds = 3.0) {
  ingest::PhantomConfig pc = cfg.phantom;
  pc.seed = cfg.seed;
  return ingest::generate_sequence(pc, ingest::standard_injection_script(pc, cfg.frame_rate, inject_seconds),
                                   cfg.frame_rate);
}

/// Frames named by the config: the recorded sequence, or the scripted phantom.
inline std::vector<ingest::SequenceFrame> load_input(const SessionConfig& cfg) {
  if (cfg.source == InputSource::Sequence) return ingest::load_sequence(cfg.sequence_path);
  return scripted_phantom(cfg).frames;
}

struct OfflineResult {
  std::vector<float> samples;
  std::vector<FrameReport> reports;
  SynthesisTelemetry telemetry;
};

/// Deterministic for a given (config, frames): frame k's update is applied at
/// the first block boundary at or after its timestamp.
inline OfflineResult sonify(const SessionConfig& cfg, const std::vector<ingest::SequenceFrame>& frames) {
  if (frames.empty()) throw SequenceError("empty sequence: nothing to sonify");
  AnalysisContext analysis(cfg);
  SynthesisEngine engine(cfg);
  OfflineResult out;
  const double t0 = frames.front().seg.t;
  const auto block = static_cast<std::size_t>(cfg.block_size);
  std::vector<float> buf(block);
  const auto render_until = [&](std::int64_t target) {
    while (engine.sample() < target) {
      engine.render_block(buf);
      out.samples.insert(out.samples.end(), buf.begin(), buf.end());
    }
  };
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    render_until(static_cast<std::int64_t>(std::llround((f.seg.t - t0) * kSampleRate)));
    if (k % static_cast<std::size_t>(cfg.analysis_stride) != 0) continue;
    const auto ingest_start = std::chrono::steady_clock::now();
    ingest::validate(f.seg, k, f.image ? std::optional<int>(f.image->height) : std::nullopt);
    FrameReport report;
    report.ms.ingest =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - ingest_start).count();
    try {
      auto up = std::make_unique<FrameUpdate>(analysis.process(f.seg, f.image ? &*f.image : nullptr, report));
      engine.submit(std::move(up));
    } catch (const Error& e) {
      throw Error("frame " + std::to_string(k) + ": " + e.what());
    }
    report.overrun = report.ms.total() > cfg.frame_budget_ms;
    out.reports.push_back(std::move(report));
  }
  const double period = frames.size() > 1 ? frames.back().seg.t - frames[frames.size() - 2].seg.t : 1.0 / cfg.frame_rate;
  render_until(static_cast<std::int64_t>(std::llround((frames.back().seg.t - t0 + period) * kSampleRate)));
  out.telemetry = engine.telemetry();
  return out;
}

inline void write_event_log(const std::vector<FrameReport>& reports, std::ostream& out) {
  out << "frame,t,source,label,value\n";
  char buf[256];
  for (const auto& r : reports)
    for (const auto& e : r.events) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%s,%s,%.6f\n", e.frame, e.t, e.source.c_str(), e.label.c_str(), e.value);
      out << buf;
    }
}

inline void write_frame_log(const std::vector<FrameReport>& reports, std::ostream& out) {
  out << "frame,t,ingest_ms,spline_ms,geometry_ms,lattice_ms,excitation_ms,analysis_ms,conf_ilm,conf_rpe,f_ilm,"
         "tip_x,tip_y,zone,events,overrun,warning\n";
  char buf[512];
  for (const auto& r : reports) {
    std::string warning = r.warning;
    for (char& c : warning)
      if (c == ',' || c == '\n') c = ';';
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.6f,", r.frame, r.t, r.ms.ingest,
                  r.ms.spline, r.ms.geometry, r.ms.lattice, r.ms.excitation, r.ms.analysis(), r.conf_ilm, r.conf_rpe,
                  r.f_ilm);
    out << buf;
    if (r.tip) {
      std::snprintf(buf, sizeof buf, "%.3f,%.3f,", r.tip->x, r.tip->y);
      out << buf;
    } else {
      out << ",,";
    }
    out << (r.zone ? std::string(baseline::to_string(*r.zone)) : std::string()) << ',' << r.events.size() << ','
        << (r.overrun ? 1 : 0) << ',' << warning << '\n';
  }
}

struct OfflineOutputs {
  std::filesystem::path wav, spectrogram_csv, spectrogram_png, frames_csv, events_csv;
};

/// Sonifies and writes audio.wav, spectrogram.csv/.png, frames.csv and
/// events.csv into `out_dir`. Nothing is written when the input is empty.
inline OfflineOutputs run_offline(const SessionConfig& cfg, const std::vector<ingest::SequenceFrame>& frames,
                                  const std::filesystem::path& out_dir, bool png = true) {
  const OfflineResult r = sonify(cfg, frames);
  std::filesystem::create_directories(out_dir);
  OfflineOutputs o{out_dir / "audio.wav", out_dir / "spectrogram.csv", out_dir / "spectrogram.png",
                   out_dir / "frames.csv", out_dir / "events.csv"};
  render::write_wav(o.wav, r.samples);
  const auto spec = render::spectrogram(r.samples);
  render::write_spectrogram_csv(spec, o.spectrogram_csv);
  if (png) render::write_spectrogram_png(spec, o.spectrogram_png);
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
    return f;
  };
  {
    auto f = open(o.frames_csv);
    write_frame_log(r.reports, f);
  }
  {
    auto f = open(o.events_csv);
    write_event_log(r.reports, f);
  }
  return o;
}

// ---- benchmark ----

struct StageStats {
  std::string stage;
  double mean_ms = 0.0;
  double sd_ms = 0.0;
  double max_ms = 0.0;
  std::size_t samples = 0;
};

inline StageStats stage_stats(std::string name, const std::vector<double>& v) {
  StageStats s{std::move(name)};
  s.samples = v.size();
  if (v.empty()) return s;
  s.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) {
    ss += (x - s.mean_ms) * (x - s.mean_ms);
    s.max_ms = std::max(s.max_ms, x);
  }
  s.sd_ms = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

struct BenchSummary {
  std::vector<StageStats> stages;  // spline, geometry, lattice, excitation, analysis, lattice+excitation, audio_per_frame
  double budget_ms = 0.0;
  std::size_t frames = 0;

  const StageStats& get(const std::string& name) const {
    for (const auto& s : stages)
      if (s.stage == name) return s;
    throw ValidationError("no stage named " + name);
  }
};

/// Phantom variants used by the benchmark: seed, tilt and needle angle differ.
inline std::vector<std::vector<ingest::SequenceFrame>> bench_sequences(const SessionConfig& cfg, int n) {
  std::vector<std::vector<ingest::SequenceFrame>> out;
  for (int i = 0; i < n; ++i) {
    SessionConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(i);
    c.phantom.tilt_deg = -6.0 + 12.0 * i / std::max(1, n - 1);
    c.phantom.needle_angle_deg = 35.0 + (i % 4) * 3.0;
    c.phantom.render_image = true;
    out.push_back(scripted_phantom(c).frames);
  }
  return out;
}

/// Times every analysis stage, and the audio blocks rendered per frame.
inline BenchSummary bench(const SessionConfig& cfg, const std::vector<std::vector<ingest::SequenceFrame>>& sequences,
                          int repeats = 1) {
  std::vector<double> spline, geometry, lattice_ms, excitation, analysis, lat_exc, audio;
  std::vector<float> buf(static_cast<std::size_t>(cfg.block_size));
  for (int rep = 0; rep < repeats; ++rep)
    for (const auto& frames : sequences) {
      if (frames.size() < 50) throw ValidationError("bench needs sequences of at least 50 frames");
      AnalysisContext ctx(cfg);
      SynthesisEngine engine(cfg);
      const double t0 = frames.front().seg.t;
      for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& f = frames[k];
        const auto target = static_cast<std::int64_t>(std::llround((f.seg.t - t0) * kSampleRate));
        const auto a0 = std::chrono::steady_clock::now();
        while (engine.sample() < target) engine.render_block(buf);
        const double audio_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a0).count();
        FrameReport r;
        engine.submit(std::make_unique<FrameUpdate>(ctx.process(f.seg, f.image ? &*f.image : nullptr, r)));
        if (k == 0) continue;  // initialization frame builds the lattice
        spline.push_back(r.ms.spline);
        geometry.push_back(r.ms.geometry);
        lattice_ms.push_back(r.ms.lattice);
        excitation.push_back(r.ms.excitation);
        analysis.push_back(r.ms.analysis());
        lat_exc.push_back(r.ms.lattice + r.ms.excitation);
        audio.push_back(audio_ms);
      }
    }
  BenchSummary s;
  s.budget_ms = cfg.frame_budget_ms;
  s.frames = analysis.size();
  s.stages = {stage_stats("spline", spline),         stage_stats("geometry", geometry),
              stage_stats("lattice", lattice_ms),    stage_stats("excitation", excitation),
              stage_stats("analysis", analysis),     stage_stats("lattice+excitation", lat_exc),
              stage_stats("audio_per_frame", audio)};
  return s;
}

inline void write_bench_csv(const BenchSummary& s, std::ostream& out) {
  out << "stage,mean_ms,sd_ms,max_ms,frames,budget_ms\n";
  char buf[256];
  for (const auto& st : s.stages) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%zu,%.2f\n", st.stage.c_str(), st.mean_ms, st.sd_ms, st.max_ms,
                  st.samples, s.budget_ms);
    out << buf;
  }
}

}  // namespace retisonic::runtime
