// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--only N] [--live-seconds S]

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "retisonic/client.hpp"
#include "retisonic/live.hpp"
#include "retisonic/offline.hpp"

using namespace retisonic;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

anatomy::LayerCurve curve_from(std::vector<double> y) {
  anatomy::LayerCurve c;
  c.domain = {0, static_cast<int>(y.size()) - 1};
  c.conf.assign(y.size(), 1.0);
  c.y = std::move(y);
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---- 1 ----

Verdict anchor_law() {
  constexpr int kNodes = 10000, kCycles = 1000;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0), row(0.0, 500.0), gap(1e-3, 200.0);
  lattice::LatticeModel model;
  model.nodes.resize(kNodes);
  for (int n = 0; n < kNodes; ++n) {
    auto& node = model.nodes[static_cast<std::size_t>(n)];
    node.x = n;
    node.rho = u(rng);
  }
  std::vector<std::uint64_t> rho_bits;
  for (const auto& n : model.nodes) rho_bits.push_back(std::bit_cast<std::uint64_t>(*n.rho));

  double worst = 0.0, update_seconds = 0.0;
  std::vector<double> yi(kNodes), yr(kNodes);
  for (int cycle = 0; cycle < kCycles; ++cycle) {
    for (int x = 0; x < kNodes; ++x) {
      yi[static_cast<std::size_t>(x)] = row(rng);
      yr[static_cast<std::size_t>(x)] = yi[static_cast<std::size_t>(x)] + gap(rng);
    }
    const auto ilm = curve_from(yi), rpe = curve_from(yr);
    const auto t0 = Clock::now();
    const bool ok = lattice::update_anchors(model, ilm, rpe).accepted;
    update_seconds += seconds_since(t0);
    if (!ok) return {false, fmt("update rejected at cycle %d", cycle)};
    for (int n = 0; n < kNodes; ++n) {
      const auto i = static_cast<std::size_t>(n);
      const double expect = yi[i] + *model.nodes[i].rho * (yr[i] - yi[i]);
      worst = std::max(worst, std::abs(model.nodes[i].rest.y - expect));
    }
  }
  bool identical = true;
  for (int n = 0; n < kNodes; ++n) {
    const auto& node = model.nodes[static_cast<std::size_t>(n)];
    identical &= node.rho && std::bit_cast<std::uint64_t>(*node.rho) == rho_bits[static_cast<std::size_t>(n)] && !node.delta;
  }
  return {worst <= 1e-9 && identical && update_seconds < 1.0,
          fmt("max |error| %.2e (tol 1e-9), rho bit-identical after %d cycles: %s, %.3f s (limit 1 s)", worst, kCycles,
              identical ? "yes" : "no", update_seconds)};
}

// ---- 2 ----

Verdict coupling_law() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> k(1.0, 3000.0), d(0.0, 2.0);
  std::uniform_int_distribution<int> ord(1, 2);
  constexpr int rows = 12, cols = 16;
  std::size_t springs_checked = 0;
  bool means_exact = true, edges_match = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<lattice::AnchorNode> nodes(rows * cols);
    for (int i = 0; i < rows * cols; ++i) {
      auto& n = nodes[static_cast<std::size_t>(i)];
      n.row = i / cols;
      n.col = i % cols;
      n.k = k(rng);
      n.d = d(rng);
      n.order = ord(rng);
      n.rest = {n.col * 8.0, n.row * 6.0};
    }
    for (int order : {0, 1, 2}) {
      const auto springs = lattice::build_springs(nodes, rows, cols, order);
      std::set<std::pair<int, int>> got;
      for (const auto& s : springs) {
        const auto& a = nodes[static_cast<std::size_t>(s.a)];
        const auto& b = nodes[static_cast<std::size_t>(s.b)];
        means_exact &= s.k == (a.k + b.k) / 2.0 && s.d == (a.d + b.d) / 2.0;
        got.insert({std::min(s.a, s.b), std::max(s.a, s.b)});
        ++springs_checked;
      }
      // Brute force over all pairs: 4-neighbors always, diagonals under the order rule.
      std::set<std::pair<int, int>> want;
      for (int a = 0; a < rows * cols; ++a)
        for (int b = a + 1; b < rows * cols; ++b) {
          const int dr = std::abs(a / cols - b / cols), dc = std::abs(a % cols - b % cols);
          const bool both2 = nodes[static_cast<std::size_t>(a)].order == 2 && nodes[static_cast<std::size_t>(b)].order == 2;
          if (dr + dc == 1 || (dr == 1 && dc == 1 && (order == 2 || (order == 0 && both2)))) want.insert({a, b});
        }
      edges_match &= got == want && got.size() == springs.size();
    }
  }
  return {means_exact && edges_match, fmt("%zu springs: endpoint means exact: %s, edge sets match brute force: %s",
                                          springs_checked, means_exact ? "yes" : "no", edges_match ? "yes" : "no")};
}

// ---- 3 ----

Verdict deformation_signal() {
  lattice::LatticeModel model;
  for (int j = 0; j < 16; ++j) {
    lattice::AnchorNode n;
    n.label = TissueLabel::Ilm;
    n.x = j * 40.0;
    n.k = 900.0;
    model.nodes.push_back(n);
  }
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  int windows = 0, mismatches = 0;
  const auto field = [](std::vector<double> d) {
    dynamics::SeparationField f;
    f.columns = {0, static_cast<int>(d.size()) - 1};
    f.d = std::move(d);
    return f;
  };
  for (int w = 8; w <= 512; ++w, ++windows) {
    std::vector<double> prev(static_cast<std::size_t>(w)), cur(prev.size()), diff(prev.size());
    for (std::size_t i = 0; i < prev.size(); ++i) {
      prev[i] = 80.0 + 3.0 * g(rng);
      cur[i] = prev[i] + 0.8 * g(rng);
      diff[i] = cur[i] - prev[i];
    }
    // Nearest rank by counting: smallest value with at least ceil(0.95 n) values at or below it.
    const auto need = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(w)));
    double oracle = INFINITY;
    for (double c : diff)
      if (static_cast<std::size_t>(std::count_if(diff.begin(), diff.end(), [&](double v) { return v <= c; })) >= need)
        oracle = std::min(oracle, c);
    const auto r = dynamics::deformation_excitation(field(cur), field(prev), model, {});
    mismatches += r.signal.delta_d != oracle;
    if (!(r.signal.f_ilm >= 0.0 && r.signal.f_ilm <= 2.0)) ++mismatches;
  }
  std::uniform_real_distribution<double> huge(-1e300, 1e300);
  int out_of_range = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double v = i % 2 ? huge(rng) : 10.0 * g(rng);
    const double f = dynamics::deformation_proxy(v);
    out_of_range += !(f >= 0.0 && f <= 2.0) || f != std::min(2.0, std::max(0.0, v));
  }
  const auto up = dynamics::deformation_excitation(field(std::vector<double>(64, 83.5)),
                                                   field(std::vector<double>(64, 80.0)), model, {});
  const auto down = dynamics::deformation_excitation(field(std::vector<double>(64, 79.0)),
                                                     field(std::vector<double>(64, 80.0)), model, {});
  const bool clamp_ok = up.signal.f_ilm == 2.0 && down.signal.f_ilm == 0.0;
  return {mismatches == 0 && out_of_range == 0 && clamp_ok,
          fmt("P95 matches oracle for %d window sizes (8..512): %d mismatches; 1e6 inputs outside [0,2]: %d; "
              "uniform +3.5 -> %.1f, uniform -1 -> %.1f",
              windows, mismatches, out_of_range, up.signal.f_ilm, down.signal.f_ilm)};
}

// ---- 4 ----

Verdict physics() {
  using namespace dynamics;
  // Damped oscillator against x(t) = e^{-a t} cos(w t)-like closed form.
  const double m = 1.0, k = std::pow(2.0 * kPi * 150.0, 2), c = 15.0;
  PhysicsCoefficients one;
  one.nodes.push_back({1.0 / m, k, c});
  one.mass.push_back(m);
  lattice::AnchorSnapshot origin;
  origin.anchors = {{0.0, 0.0}};
  Integrator osc(one);
  auto st = rest_state(origin);
  st.position[0].y = st.previous[0].y = 1.0;
  std::vector<double> xs{1.0}, vel1(1);
  for (int s = 0; s < kSampleRate; ++s) {
    osc.step_block(st, origin, std::span<const ExcitationEvent>{}, 1, s, vel1);
    xs.push_back(st.position[0].y);
  }
  const double alpha = c / (2.0 * m), f_closed = std::sqrt(k / m - alpha * alpha) / (2.0 * kPi);
  std::vector<double> zc;
  std::vector<std::pair<double, double>> peaks;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if ((xs[i - 1] < 0.0) != (xs[i] < 0.0)) zc.push_back((static_cast<double>(i) - 1.0 + xs[i - 1] / (xs[i - 1] - xs[i])) / kSampleRate);
    if (i + 1 < xs.size() && xs[i] > xs[i - 1] && xs[i] >= xs[i + 1]) peaks.push_back({static_cast<double>(i) / kSampleRate, xs[i]});
  }
  const double f_meas = static_cast<double>(zc.size() - 1) / (2.0 * (zc.back() - zc.front()));
  const double f_err = std::abs(f_meas - f_closed) / f_closed;
  double env_err = 0.0;
  for (const auto& [t, a] : peaks) {
    const double expect = peaks.front().second * std::exp(-alpha * (t - peaks.front().first));
    env_err = std::max(env_err, std::abs(a - expect) / expect);
  }

  // Lattice from a flat two-layer phantom.
  anatomy::LayerCurve ilm = curve_from(std::vector<double>(512, 200.0)), rpe = curve_from(std::vector<double>(512, 280.0));
  anatomy::RoiSpec roi{0.0, 100.0, 174.4, 356.0, 282.0};
  const auto model = lattice::build_lattice(roi, ilm, rpe);
  const auto coef = coefficients_of(model);
  const auto snap = lattice::snapshot_of(model);
  const std::size_t nodes = coef.nodes.size();

  Integrator still(coef);
  auto rest = rest_state(snap);
  std::vector<double> vel(nodes * 256);
  bool fixed = true;
  for (int b = 0; b < 200; ++b) {
    still.step_block(rest, snap, std::span<const ExcitationEvent>{}, 256, b * 256, vel);
    fixed &= std::all_of(vel.begin(), vel.end(), [](double v) { return v == 0.0; });
  }
  fixed &= rest.position == snap.anchors && rest.previous == snap.anchors;

  double worst_rise = 0.0;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(nodes) - 1);
  for (double amp : {1.0, 10.0, 100.0, 1000.0, 10000.0}) {
    Integrator integ(coef);
    auto s = rest_state(snap);
    std::vector<ExcitationEvent> evs;
    for (int e = 0; e < 3; ++e) {
      ExcitationEvent ev;
      ev.targets = {{pick(rng), 0.6}, {pick(rng), 0.4}};
      ev.amplitude = amp;
      ev.duration = 132;
      ev.onset = e * 40;
      ev.direction = {0.6, 0.8};
      evs.push_back(ev);
    }
    std::vector<double> v(nodes * 300);
    integ.step_block(s, snap, evs, 300, 0, v);
    double prev = mechanical_energy(s, coef, snap);
    for (int n = 300; n < 300 + 44100; ++n) {
      integ.step_block(s, snap, evs, 1, n, v);
      const double e = mechanical_energy(s, coef, snap);
      worst_rise = std::max(worst_rise, (e - prev) / prev);
      prev = e;
    }
  }

  lattice::LatticeOptions stiff;
  for (auto& p : stiff.table.by_label) p.k = p.k_max = 1e9;
  const auto capped = lattice::build_lattice(roi, ilm, rpe, stiff);
  const auto cc = coefficients_of(capped);
  const auto cs = lattice::snapshot_of(capped);
  Integrator big(cc);
  auto bs = rest_state(cs);
  ExcitationEvent kick;
  for (int n = 0; n < static_cast<int>(cc.nodes.size()); n += 5) kick.targets.push_back({n, 1.0});
  kick.amplitude = 1000.0;
  kick.duration = 132;
  std::vector<ExcitationEvent> kicks{kick};
  std::vector<double> bv(cc.nodes.size() * 4096);
  double max_disp = 0.0;
  bool finite = true;
  for (std::int64_t s = 0; s < 1'000'000; s += 4096) {
    const int n = static_cast<int>(std::min<std::int64_t>(4096, 1'000'000 - s));
    big.step_block(bs, cs, kicks, n, s, bv);
    for (std::size_t i = 0; i < bs.position.size(); ++i) {
      finite &= is_finite(bs.position[i]);
      max_disp = std::max(max_disp, norm(bs.position[i] - cs.anchors[i]));
    }
  }
  const double sn = stability_number(cc);
  const bool bounded = finite && max_disp < 1e3 && bs.step == 1'000'000u && sn <= 0.5 + 1e-12;

  return {f_err < 0.02 && env_err < 0.05 && fixed && worst_rise <= 1e-9 && bounded,
          fmt("f %.3f Hz vs %.3f Hz (err %.3f%%, tol 2%%), envelope err %.3f%% (tol 5%%), fixed point exact: %s, "
              "worst energy rise %.1e (tol 1e-9), 1e6 steps at stability number %.3f: max displacement %.3g, %s",
              f_meas, f_closed, 100 * f_err, 100 * env_err, fixed ? "yes" : "no", worst_rise, sn, max_disp,
              finite ? "finite" : "NON-FINITE")};
}

// ---- 5 ----

Verdict bleb_signature() {
  const auto t0 = Clock::now();
  runtime::SessionConfig cfg;
  cfg.seed = 7;
  const auto seq = runtime::scripted_phantom(cfg);
  if (!seq.truth.bleb_onset_t) return {false, "phantom script produced no bleb"};
  double metric[2];
  for (int m = 0; m < 2; ++m) {
    cfg.method = static_cast<runtime::Method>(m);
    const auto r = runtime::sonify(cfg, seq.frames);
    metric[m] = render::broadband_onset_metric(render::spectrogram(r.samples), *seq.truth.bleb_onset_t, 1.0);
  }
  const double secs = seconds_since(t0);
  return {metric[0] >= 10.0 && metric[0] > metric[1] && secs < 30.0,
          fmt("onset %.3f s: proposed %+.2f dB (min +10), baseline %+.2f dB, %.1f s (limit 30 s)",
              *seq.truth.bleb_onset_t, metric[0], metric[1], secs)};
}

// ---- 6 ----

Verdict runtime_budget(double live_seconds) {
  runtime::SessionConfig cfg;
  const auto seqs = runtime::bench_sequences(cfg, 10);
  const auto b = runtime::bench(cfg, seqs);
  const double analysis = b.get("analysis").mean_ms, lat_exc = b.get("lattice+excitation").mean_ms;

  runtime::SessionConfig lc;
  lc.live.port = 0;
  lc.live.ws_port = -1;
  runtime::LiveSession session(lc);
  session.start();
  std::uint64_t states = 0, audio = 0;
  {
    protocol::Client client("127.0.0.1", session.port());
    std::atomic<bool> reading{true};
    std::thread reader([&] {
      while (reading)
        if (auto f = client.next(std::chrono::milliseconds(100))) {
          states += f->type == static_cast<std::uint8_t>(protocol::MsgType::State);
          audio += f->type == static_cast<std::uint8_t>(protocol::MsgType::Audio);
        }
    });
    // Steer: descend into the retina, hover, then inject.
    const int poses = static_cast<int>(live_seconds * 30.0);
    auto next = Clock::now();
    for (int i = 0; i < poses; ++i) {
      const double phase = static_cast<double>(i) / poses;
      const float dy = phase < 0.3 ? 0.8f : (phase < 0.5 ? 0.3f * static_cast<float>(std::sin(i * 0.2)) : 0.0f);
      client.send_pose({0.2f * static_cast<float>(std::sin(i * 0.05)), dy, phase > 0.5, static_cast<std::uint32_t>(i + 1)});
      next += std::chrono::microseconds(33333);
      std::this_thread::sleep_until(next);
    }
    reading = false;
    reader.join();
  }
  session.stop();
  const auto st = session.stats();
  const bool live_ok = st.underruns == 0 && st.blocks > 0;
  return {analysis <= 10.0 && lat_exc < 1.0 && live_ok,
          fmt("bench %zu frames x 512x512: analysis %.3f +/- %.3f ms (limit 10), lattice+excitation %.4f ms (limit 1); "
              "live %.0f s: %llu blocks, %llu underruns (limit 0, worst %.1f ms past a %.1f ms lead), %llu frames, %llu audio msgs received, realtime audio thread %s",
              b.frames, analysis, b.get("analysis").sd_ms, lat_exc, live_seconds,
              static_cast<unsigned long long>(st.blocks), static_cast<unsigned long long>(st.underruns), st.worst_underrun_ms,
              1e3 * lc.live.lead_blocks * lc.block_size / 44100.0,
              static_cast<unsigned long long>(st.frames), static_cast<unsigned long long>(audio),
              st.realtime_audio ? "yes" : "no")};
}

// ---- 7 ----

Verdict robust_fitting() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-40.0, 40.0), xs(0.0, 200.0), off(15.0, 80.0), u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.7);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double slope = std::tan(deg2rad(ang(rng)));
    const double side = u(rng) < 0.5 ? -1.0 : 1.0;
    std::vector<Vec2> pts;
    for (int i = 0; i < 100; ++i) {
      const double x = xs(rng);
      double y = 120.0 + slope * x + noise(rng);
      if (i < 30) y += side * off(rng) * (0.5 + x / 200.0);
      pts.push_back({x, y});
    }
    const double truth = rad2deg(std::atan(slope));
    const double eh = std::abs(rad2deg(std::atan(anatomy::huber_fit(pts).slope)) - truth);
    const double eo = std::abs(rad2deg(std::atan(anatomy::ols_fit(pts).slope)) - truth);
    wins += eh < eo;
  }

  std::vector<anatomy::LayerSample> s;
  for (int x = 0; x < 256; ++x) s.push_back({double(x), 150.0 + 20.0 * std::sin(x / 30.0) + noise(rng), 0.3 + 0.7 * u(rng)});
  const auto base = anatomy::fit_layer_spline(s, 10.0, {0, 255});
  for (int i = 0; i < 500; ++i) s.push_back({255.0 * u(rng), 1e5 * (u(rng) - 0.5), 0.0});
  const auto with = anatomy::fit_layer_spline(s, 10.0, {0, 255});
  const bool inert = with.y == base.y && with.conf == base.conf;
  return {wins >= 95 && inert, fmt("Huber beats OLS in %d/100 lines at 30%% outliers (min 95); 500 zero-confidence "
                                   "samples leave the spline bit-identical: %s",
                                   wins, inert ? "yes" : "no")};
}

// ---- 8 ----

Verdict baseline_contract() {
  const baseline::BaselineParams p;
  bool monotone = true;
  double prev = baseline::pulse_rate(0.0, p);
  for (int i = 1; i <= 10000; ++i) {
    const double r = baseline::pulse_rate(i / 10000.0, p);
    monotone &= r > prev;
    prev = r;
  }
  int changed_frames = 0, voiced = 0;
  for (int z = 0; z < 3; ++z) {
    baseline::BaselineSynth synth(p);
    std::vector<float> y;
    std::vector<float> block(256);
    for (int b = 0; b < 345; ++b) {  // 2 s, depth sweeping across the zone
      synth.render(static_cast<baseline::Zone>(z), b / 344.0, block);
      y.insert(y.end(), block.begin(), block.end());
    }
    const auto s = render::spectrogram(y);
    int first = -1;
    for (int f = 0; f < s.frames; ++f) {
      int best = 0;
      for (int k = 1; k < s.bins; ++k)
        if (s.at(f, k) > s.at(f, best)) best = k;
      if (s.at(f, best) < -40.0) continue;  // between pulses
      ++voiced;
      if (first < 0) first = best;
      changed_frames += best != first;
    }
  }
  auto ilm = curve_from(std::vector<double>(512)), rpe = curve_from(std::vector<double>(512));
  for (int x = 0; x < 512; ++x) {
    ilm.y[static_cast<std::size_t>(x)] = 100.0 + 0.07 * x;
    rpe.y[static_cast<std::size_t>(x)] = 190.0 - 0.03 * x;
  }
  int boundary_errors = 0;
  for (double x = 0.0; x <= 511.0; x += 0.5) {
    const double a = ilm.at(x), b = rpe.at(x);
    using Z = baseline::Zone;
    boundary_errors += baseline::classify_zone({x, std::nextafter(a, 0.0)}, ilm, rpe) != Z::Vitreous;
    boundary_errors += baseline::classify_zone({x, a}, ilm, rpe) != Z::Intraretinal;
    boundary_errors += baseline::classify_zone({x, std::nextafter(b, 0.0)}, ilm, rpe) != Z::Intraretinal;
    boundary_errors += baseline::classify_zone({x, b}, ilm, rpe) != Z::AtOrBelowRpe;
  }
  return {monotone && changed_frames == 0 && voiced > 0 && boundary_errors == 0,
          fmt("rate strictly increasing over 10001 depths: %s; dominant bin changes within a zone: %d of %d voiced "
              "frames; boundary misclassifications: %d of 4092",
              monotone ? "yes" : "no", changed_frames, voiced, boundary_errors)};
}

// ---- 9 ----

Verdict determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "retisonic_acceptance";
  std::filesystem::remove_all(dir);
  runtime::SessionConfig cfg;
  const auto seq = runtime::scripted_phantom(cfg);
  const auto a = runtime::run_offline(cfg, seq.frames, dir / "a", false);
  const auto b = runtime::run_offline(cfg, seq.frames, dir / "b", false);
  const bool wav_same = slurp(a.wav) == slurp(b.wav) && !slurp(a.wav).empty();
  const bool logs_same = slurp(a.events_csv) == slurp(b.events_csv) && slurp(a.spectrogram_csv) == slurp(b.spectrogram_csv);

  ingest::write_sequence(seq.frames, dir / "seq.jsonl");
  const auto back = ingest::load_sequence(dir / "seq.jsonl");
  bool jsonl_same = back.size() == seq.frames.size();
  for (std::size_t i = 0; jsonl_same && i < back.size(); ++i) jsonl_same = back[i].seg == seq.frames[i].seg;
  ingest::write_sequence(back, dir / "seq2.jsonl");
  jsonl_same &= slurp(dir / "seq.jsonl") == slurp(dir / "seq2.jsonl");

  const auto wav = render::read_wav(a.wav);
  render::write_wav(dir / "again.wav", wav.samples());
  const bool wav_roundtrip = slurp(dir / "again.wav") == slurp(a.wav) && render::read_wav(dir / "again.wav").pcm == wav.pcm;
  std::filesystem::remove_all(dir);
  return {wav_same && logs_same && jsonl_same && wav_roundtrip,
          fmt("two offline runs byte-identical (wav %s, logs %s); JSONL round-trip exact: %s; WAV round-trip exact: %s",
              wav_same ? "yes" : "no", logs_same ? "yes" : "no", jsonl_same ? "yes" : "no", wav_roundtrip ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  double live_seconds = 60.0;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (!std::strcmp(argv[i], "--only")) only = std::atoi(argv[i + 1]);
    else if (!std::strcmp(argv[i], "--live-seconds")) live_seconds = std::atof(argv[i + 1]);
  }
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"anchor law", anchor_law},
      {"coupling law", coupling_law},
      {"deformation signal", deformation_signal},
      {"physics", physics},
      {"bleb spectral signature", bleb_signature},
      {"runtime budget", [&] { return runtime_budget(live_seconds); }},
      {"robust fitting", robust_fitting},
      {"baseline contract", baseline_contract},
      {"determinism and formats", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[%s] %zu %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
