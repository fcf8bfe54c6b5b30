// retisonic command line: sonify | live | phantom | bench | spectrogram

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "retisonic/config.hpp"
#include "retisonic/ingest.hpp"
#include "retisonic/live.hpp"
#include "retisonic/offline.hpp"
#include "retisonic/render.hpp"
#include "retisonic/spectrogram.hpp"

namespace rs = retisonic;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string method;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON config file");
    app->add_option("--set", sets, "override a config value, key=value (repeatable)");
    app->add_option("--method", method, "proposed | baseline")->check(CLI::IsMember({"proposed", "baseline"}));
    app->add_option("--seed", seed, "random seed");
  }

  rs::runtime::SessionConfig build() const {
    std::vector<std::string> o = sets;
    if (!method.empty()) o.push_back("method=\"" + method + "\"");
    if (seed) o.push_back("seed=" + std::to_string(*seed));
    return rs::runtime::build_config(config.empty() ? std::nullopt : std::optional<fs::path>(config), o);
  }
};

void print_bench(const rs::runtime::BenchSummary& s) {
  std::printf("%-20s %10s %10s\n", "stage", "mean_ms", "sd_ms");
  for (const auto& st : s.stages) std::printf("%-20s %10.4f %10.4f\n", st.stage.c_str(), st.mean_ms, st.sd_ms);
  std::printf("frames %zu, budget %.1f ms\n", s.frames, s.budget_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retisonic: physics-based sonification of iOCT segmentation streams"};
  app.require_subcommand(1);

  Common sonify_opts, live_opts, phantom_opts, bench_opts;
  std::string out_dir = "out", input;
  bool no_png = false;
  auto* sonify = app.add_subcommand("sonify", "offline: sequence -> audio.wav, spectrogram, frame and event logs");
  sonify_opts.add_to(sonify);
  sonify->add_option("-i,--input", input, "sequence JSONL (default: scripted phantom injection)");
  sonify->add_option("-o,--out", out_dir, "output directory");
  sonify->add_flag("--no-png", no_png, "skip the spectrogram image");

  double duration = 0.0;
  std::string live_out;
  bool record = false;
  std::optional<int> port, ws_port;
  auto* live = app.add_subcommand("live", "serve the streaming protocol until interrupted");
  live_opts.add_to(live);
  live->add_option("--port", port, "raw TCP port");
  live->add_option("--ws-port", ws_port, "WebSocket port (-1 disables)");
  live->add_option("--duration", duration, "stop after this many seconds (0: run until SIGINT)");
  live->add_option("-o,--out", live_out, "write frames.csv / events.csv here on shutdown");
  live->add_flag("--record", record, "also write the rendered audio to audio.wav");

  std::string phantom_out = "phantom.jsonl";
  double inject_seconds = 3.0;
  bool images = false;
  auto* phantom = app.add_subcommand("phantom", "write the scripted phantom injection as a sequence");
  phantom_opts.add_to(phantom);
  phantom->add_option("-o,--out", phantom_out, "output JSONL path");
  phantom->add_option("--inject-seconds", inject_seconds, "injection duration");
  phantom->add_flag("--images", images, "also render B-scan images (PGM)");

  int sequences = 10, repeats = 1;
  std::string bench_csv;
  auto* bench = app.add_subcommand("bench", "per-stage timing over phantom sequences");
  bench_opts.add_to(bench);
  bench->add_option("-n,--sequences", sequences, "number of phantom sequences")->check(CLI::PositiveNumber);
  bench->add_option("-r,--repeats", repeats, "repeats")->check(CLI::PositiveNumber);
  bench->add_option("-o,--out", bench_csv, "CSV output path");

  std::string wav_in, spec_out = "spectrogram.csv", png_out;
  int window = 1024, hop = 256;
  auto* spec = app.add_subcommand("spectrogram", "STFT of a WAV file to CSV (and optional PNG)");
  spec->add_option("wav", wav_in, "input WAV")->required();
  spec->add_option("-o,--out", spec_out, "CSV output path");
  spec->add_option("--png", png_out, "PNG output path");
  spec->add_option("--window", window, "window length");
  spec->add_option("--hop", hop, "hop length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sonify) {
      auto cfg = sonify_opts.build();
      if (!input.empty()) {
        cfg.source = rs::runtime::InputSource::Sequence;
        cfg.sequence_path = input;
      }
      const auto frames = rs::runtime::load_input(cfg);
      const auto o = rs::runtime::run_offline(cfg, frames, out_dir, !no_png);
      std::printf("wrote %s\n", o.wav.string().c_str());
    } else if (*live) {
      auto cfg = live_opts.build();
      if (port) cfg.live.port = *port;
      if (ws_port) cfg.live.ws_port = *ws_port;
      cfg.validate();
      rs::runtime::LiveSession session(cfg, {.record_audio = record});
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      session.start();
      std::printf("listening on %s:%d (tcp)", cfg.live.host.c_str(), session.port());
      if (session.ws_port() >= 0) std::printf(", %d (websocket)", session.ws_port());
      std::printf("\n");
      std::fflush(stdout);
      const auto t0 = std::chrono::steady_clock::now();
      while (!g_interrupted &&
             (duration <= 0.0 || std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < duration))
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      session.stop();
      const auto s = session.stats();
      std::printf("frames %llu blocks %llu underruns %llu update_drops %llu audio_drops %llu poses %llu protocol_errors %llu\n",
                  (unsigned long long)s.frames, (unsigned long long)s.blocks, (unsigned long long)s.underruns,
                  (unsigned long long)s.update_drops, (unsigned long long)s.audio_drops, (unsigned long long)s.poses,
                  (unsigned long long)s.protocol_errors);
      if (!live_out.empty()) session.write_logs(live_out);
    } else if (*phantom) {
      auto cfg = phantom_opts.build();
      if (images) cfg.phantom.render_image = true;
      const auto seq = rs::runtime::scripted_phantom(cfg, inject_seconds);
      rs::ingest::write_sequence(seq.frames, phantom_out);
      std::printf("wrote %zu frames to %s", seq.frames.size(), phantom_out.c_str());
      if (seq.truth.ilm_crossing_t) std::printf("; ILM crossing t=%.4f", *seq.truth.ilm_crossing_t);
      if (seq.truth.bleb_onset_t) std::printf("; bleb onset t=%.4f", *seq.truth.bleb_onset_t);
      std::printf("\n");
    } else if (*bench) {
      const auto cfg = bench_opts.build();
      const auto s = rs::runtime::bench(cfg, rs::runtime::bench_sequences(cfg, sequences), repeats);
      print_bench(s);
      if (!bench_csv.empty()) {
        std::ofstream out(bench_csv);
        if (!out) throw rs::IoError("cannot write " + bench_csv);
        rs::runtime::write_bench_csv(s, out);
      }
    } else if (*spec) {
      const auto wav = rs::render::read_wav(wav_in);
      const auto samples = wav.samples();
      const auto s = rs::render::spectrogram(samples, window, hop, wav.sample_rate);
      rs::render::write_spectrogram_csv(s, fs::path(spec_out));
      if (!png_out.empty()) rs::render::write_spectrogram_png(s, png_out);
    }
  } catch (const rs::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
