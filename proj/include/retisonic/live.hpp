#pragma once

// Live session: phantom driven by client poses, three threads.
//   analysis: steps the phantom at the frame rate, runs AnalysisContext,
//             pushes FrameUpdates, publishes state JSON
//   audio:    paced by the wall clock a few blocks ahead, renders blocks
//   control:  poll()-based TCP server (raw framing, plus an optional
//             WebSocket listener carrying the same framing)
// Threads exchange owned messages through DropOldestRing; the audio thread
// neither blocks nor allocates once warmed up.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <pthread.h>
#include <sched.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "retisonic/config.hpp"
#include "retisonic/offline.hpp"
#include "retisonic/phantom.hpp"
#include "retisonic/pipeline.hpp"
#include "retisonic/protocol.hpp"
#include "retisonic/render.hpp"
#include "retisonic/ring.hpp"
#include "retisonic/websocket.hpp"

namespace retisonic::runtime {

struct LiveStats {
  std::uint64_t frames = 0;
  std::uint64_t analysis_overruns = 0;
  std::uint64_t blocks = 0;
  std::uint64_t underruns = 0;
  std::uint64_t update_drops = 0;  // FrameUpdates displaced before the audio thread took them
  std::uint64_t audio_drops = 0;   // rendered blocks that could not be forwarded
  std::uint64_t events_applied = 0;
  std::uint64_t poses = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t connections = 0;
  std::uint64_t config_patches = 0;
  bool realtime_audio = false;
  double worst_underrun_ms = 0.0;  // how far playback overtook rendering
};

namespace detail {

struct AudioMsg {
  std::uint64_t ring_seq = 0;
  std::uint32_t index = 0;
  std::vector<float> samples;
};

inline void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK); }

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) reset(std::exchange(o.fd_, -1));
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }

 private:
  int fd_ = -1;
};

inline Fd listen_tcp(const std::string& host, int port) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd) throw IoError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw IoError("invalid listen address '" + host + "'");
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw IoError("cannot bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  if (::listen(fd.get(), 4) != 0) throw IoError(std::string("listen: ") + std::strerror(errno));
  set_nonblocking(fd.get());
  return fd;
}

inline int bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

}  // namespace detail

class LiveSession {
 public:
  struct Options {
    bool record_audio = false;
    std::size_t max_reports = 1u << 20;
  };

  explicit LiveSession(SessionConfig cfg) : LiveSession(std::move(cfg), Options{}) {}
  LiveSession(SessionConfig cfg, Options opt)
      : cfg_(std::move(cfg)),
        opt_(opt),
        updates_(cfg_.live.queue_capacity),
        recycled_(4 * cfg_.live.queue_capacity + SynthesisEngine::kMaxLive),
        free_audio_(cfg_.live.queue_capacity),
        out_audio_(cfg_.live.queue_capacity),
        pickup_gain_(cfg_.render.pickup_gain) {
    cfg_.validate();
    for (int i = 0; i < cfg_.live.queue_capacity; ++i) {
      auto m = std::make_unique<detail::AudioMsg>();
      m->samples.resize(static_cast<std::size_t>(cfg_.block_size));
      free_audio_.push(std::move(m));
    }
  }
  ~LiveSession() { stop(); }
  LiveSession(const LiveSession&) = delete;
  LiveSession& operator=(const LiveSession&) = delete;

  /// Binds the listeners and starts the threads. Throws IoError when a port is taken.
  void start() {
    if (running_) return;
    raw_listen_ = detail::listen_tcp(cfg_.live.host, cfg_.live.port);
    if (cfg_.live.ws_port >= 0) ws_listen_ = detail::listen_tcp(cfg_.live.host, cfg_.live.ws_port);
    running_ = true;
    audio_thread_ = std::thread([this] { audio_loop(); });
    analysis_thread_ = std::thread([this] { analysis_loop(); });
    control_thread_ = std::thread([this] { control_loop(); });
  }

  /// Joins all threads. Safe to call repeatedly.
  void stop() {
    running_ = false;
    for (auto* t : {&analysis_thread_, &audio_thread_, &control_thread_})
      if (t->joinable()) t->join();
    client_.reset();
    raw_listen_.reset();
    ws_listen_.reset();
  }

  bool running() const { return running_; }
  int port() const { return raw_listen_ ? detail::bound_port(raw_listen_.get()) : -1; }
  int ws_port() const { return ws_listen_ ? detail::bound_port(ws_listen_.get()) : -1; }

  LiveStats stats() const {
    LiveStats s;
    s.frames = frames_.load();
    s.analysis_overruns = overruns_.load();
    s.blocks = blocks_.load();
    s.underruns = underruns_.load();
    s.update_drops = updates_.dropped();
    s.audio_drops = audio_drops_.load();
    s.events_applied = events_applied_.load();
    s.poses = poses_.load();
    s.protocol_errors = protocol_errors_.load();
    s.connections = connections_.load();
    s.config_patches = config_patches_.load();
    s.realtime_audio = realtime_audio_.load();
    s.worst_underrun_ms = worst_underrun_ms_.load();
    return s;
  }

  /// Valid after stop().
  const std::vector<FrameReport>& reports() const { return reports_; }
  const std::vector<float>& recorded_audio() const { return recorded_; }

  /// Writes frames.csv and events.csv (and audio.wav when recording). Call after stop().
  void write_logs(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream frames(dir / "frames.csv"), events(dir / "events.csv");
    if (!frames || !events) throw IoError("cannot write logs into " + dir.string());
    write_frame_log(reports_, frames);
    write_event_log(reports_, events);
    if (opt_.record_audio) render::write_wav(dir / "audio.wav", recorded_);
  }

 private:
  // ---- analysis ----

  void analysis_loop() {
    AnalysisContext analysis(cfg_);
    ingest::PhantomConfig pc = cfg_.phantom;
    pc.seed = cfg_.seed;
    ingest::PhantomState state = ingest::phantom_init(pc);
    const double dt = 1.0 / cfg_.frame_rate;
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(dt));
    const auto heartbeat = std::chrono::duration<double>(1.0 / cfg_.live.heartbeat_hz);
    auto next = std::chrono::steady_clock::now();
    std::size_t k = 0;
    std::optional<ingest::SegFrame> seg0 = ingest::phantom_segmentation(state, pc);
    std::optional<ingest::BScanFrame> img0;
    if (pc.render_image) img0 = ingest::phantom_image(state, pc);

    while (running_) {
      std::this_thread::sleep_until(next);
      next += period;
      const auto tick_start = std::chrono::steady_clock::now();
      if (tick_start > next + period) next = tick_start;  // fell behind: drop the backlog

      drain_recycled();
      apply_pending_excitation(analysis);

      ingest::SegFrame seg;
      std::optional<ingest::BScanFrame> image;
      std::uint32_t marker = 0;
      if (seg0) {
        seg = std::move(*seg0);
        image = std::move(img0);
        seg0.reset();
      } else {
        ingest::PhantomControl control;
        {
          std::lock_guard lock(pose_mu_);
          control.tip_delta = {acc_dx_, acc_dy_};
          acc_dx_ = acc_dy_ = 0.0;
          const bool fresh = last_pose_ && tick_start - *last_pose_ < heartbeat;
          control.inject = fresh && inject_;
          marker = marker_;
        }
        auto step = ingest::phantom_step(std::move(state), control, dt, pc);
        step.state.t = static_cast<double>(k) * dt;
        step.seg.t = step.state.t;
        if (step.image) step.image->t = step.state.t;
        state = std::move(step.state);
        seg = std::move(step.seg);
        image = std::move(step.image);
      }

      FrameReport report;
      auto up = std::make_unique<FrameUpdate>();
      try {
        *up = analysis.process(seg, image ? &*image : nullptr, report);
      } catch (const Error& e) {
        report.warning = std::string("analysis: ") + e.what();
        up->frame = k;
      }
      up->marker = marker;
      const bool tool = std::any_of(report.events.begin(), report.events.end(),
                                    [](const LoggedEvent& e) { return e.source == "tool"; });
      const bool deformation = std::any_of(report.events.begin(), report.events.end(),
                                           [](const LoggedEvent& e) { return e.source == "deformation"; });
      const bool crossing = std::any_of(report.events.begin(), report.events.end(),
                                        [](const LoggedEvent& e) { return e.label.rfind("crossing:", 0) == 0; });
      updates_.push(std::move(up));  // a displaced update is freed here, off the audio thread

      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tick_start).count();
      report.overrun = ms > cfg_.frame_budget_ms;
      if (report.overrun) ++overruns_;
      publish_state(seg, state, report, tool, crossing, deformation, marker);
      if (reports_.size() < opt_.max_reports) reports_.push_back(std::move(report));
      ++frames_;
      ++k;
    }
    drain_recycled();
  }

  void drain_recycled() {
    while (recycled_.pop()) {
    }
  }

  void apply_pending_excitation(AnalysisContext& analysis) {
    std::lock_guard lock(patch_mu_);
    if (pending_excitation_) {
      analysis.set_excitation(*pending_excitation_);
      pending_excitation_.reset();
    }
  }

  void publish_state(const ingest::SegFrame& seg, const ingest::PhantomState& st, const FrameReport& r, bool tool,
                     bool crossing, bool deformation, std::uint32_t marker) {
    using nlohmann::json;
    json j;
    j["frame"] = r.frame;
    j["t"] = r.t;
    j["tip"] = json::array({st.tip.x, st.tip.y});
    json ilm = json::array(), rpe = json::array();
    for (std::size_t x = 0; x < seg.ilm.size(); x += 4) {
      ilm.push_back(seg.ilm[x] ? json(*seg.ilm[x]) : json(nullptr));
      rpe.push_back(seg.rpe[x] ? json(*seg.rpe[x]) : json(nullptr));
    }
    j["curve_stride"] = 4;
    j["ilm"] = std::move(ilm);
    j["rpe"] = std::move(rpe);
    j["f_ilm"] = r.f_ilm;
    j["zone"] = r.zone ? json(baseline::to_string(*r.zone)) : json(nullptr);
    j["conf"] = {{"ilm", r.conf_ilm}, {"rpe", r.conf_rpe}};
    j["events"] = {{"tool", tool},
                   {"crossing", crossing},
                   {"deformation", deformation},
                   {"injecting", st.injecting},
                   {"inject_blocked", st.inject_blocked}};
    j["marker"] = {{"sent", marker}, {"applied", applied_marker_.load()}, {"block", applied_block_.load()}};
    j["method"] = cfg_.method == Method::Proposed ? "proposed" : "baseline";
    j["config_revision"] = config_patches_.load();
    if (!r.warning.empty()) j["warning"] = r.warning;
    std::lock_guard lock(state_mu_);
    state_json_ = j.dump();
    ++state_seq_;
  }

  // ---- audio ----

  void audio_loop() {
    {
      // best effort; unprivileged processes keep the default policy
      sched_param sp{};
      sp.sched_priority = std::max(1, sched_get_priority_max(SCHED_FIFO) / 2);
      realtime_audio_ = pthread_setschedparam(pthread_self(), SCHED_FIFO, &sp) == 0;
    }
    SynthesisEngine engine(cfg_, [this](std::unique_ptr<FrameUpdate> m) { recycle(std::move(m)); });
    const auto block = static_cast<std::int64_t>(cfg_.block_size);
    const std::int64_t lead = cfg_.live.lead_blocks * block;
    std::vector<float> scratch(static_cast<std::size_t>(block));
    if (opt_.record_audio) recorded_.reserve(static_cast<std::size_t>(kSampleRate) * 120);
    using clock = std::chrono::steady_clock;
    auto start = clock::now();
    std::int64_t rendered = 0;
    std::uint32_t index = 0;
    double gain = pickup_gain_.load();
    const auto at = [&](std::int64_t samples) {
      return start + std::chrono::duration_cast<clock::duration>(
                         std::chrono::duration<double>(static_cast<double>(samples) / kSampleRate));
    };

    while (running_) {
      const auto now = clock::now();
      const auto played =
          static_cast<std::int64_t>(std::chrono::duration<double>(now - start).count() * kSampleRate);
      if (played > rendered) {
        ++underruns_;
        const double behind = static_cast<double>(played - rendered) / kSampleRate * 1e3;
        if (behind > worst_underrun_ms_.load(std::memory_order_relaxed))
          worst_underrun_ms_.store(behind, std::memory_order_relaxed);
        start = now - (at(rendered) - start);  // a device would glitch and resume
      }
      const auto played_now =
          static_cast<std::int64_t>(std::chrono::duration<double>(clock::now() - start).count() * kSampleRate);
      while (rendered < played_now + lead && running_) {
        while (auto up = updates_.pop([this](std::unique_ptr<FrameUpdate> s) { recycle(std::move(s)); })) {
          if (up->marker != applied_marker_.load(std::memory_order_relaxed)) {
            applied_marker_.store(up->marker, std::memory_order_relaxed);
            applied_block_.store(index, std::memory_order_relaxed);
          }
          engine.submit(std::move(up));
        }
        if (const double g = pickup_gain_.load(std::memory_order_relaxed); g != gain) {
          gain = g;
          engine.set_pickup_gain(g);
        }
        auto msg = free_audio_.pop();
        std::span<float> out = msg ? std::span<float>(msg->samples) : std::span<float>(scratch);
        engine.render_block(out);
        if (opt_.record_audio && recorded_.size() + out.size() <= recorded_.capacity())
          recorded_.insert(recorded_.end(), out.begin(), out.end());
        if (msg) {
          msg->index = index;
          out_audio_.push(std::move(msg));
        } else {
          ++audio_drops_;
        }
        ++index;
        rendered += block;
        ++blocks_;
        events_applied_.store(engine.telemetry().events_applied, std::memory_order_relaxed);
      }
      std::this_thread::sleep_until(at(rendered - lead + block));
    }
  }

  void recycle(std::unique_ptr<FrameUpdate> m) {
    if (auto displaced = recycled_.push(std::move(m))) stash_.push_back(std::move(displaced));
  }

  // ---- control ----

  struct Client {
    detail::Fd fd;
    bool websocket = false;
    bool handshaken = false;
    std::string http;
    protocol::FrameDecoder frames;
    protocol::ws::Decoder ws{true};
    std::string out;
    bool closing = false;
  };

  static constexpr std::size_t kMaxOutBuffer = 4u << 20;

  void control_loop() {
    std::uint64_t sent_state = 0;
    char buf[65536];
    while (running_) {
      pollfd fds[3];
      nfds_t n = 0;
      fds[n++] = {raw_listen_.get(), POLLIN, 0};
      const bool have_ws = static_cast<bool>(ws_listen_);
      if (have_ws) fds[n++] = {ws_listen_.get(), POLLIN, 0};
      const nfds_t client_slot = n;
      if (client_) {
        short ev = POLLIN;
        if (!client_->out.empty()) ev |= POLLOUT;
        fds[n++] = {client_->fd.get(), ev, 0};
      }
      ::poll(fds, n, 2);

      if (fds[0].revents & POLLIN) accept_client(raw_listen_.get(), false);
      if (have_ws && (fds[1].revents & POLLIN)) accept_client(ws_listen_.get(), true);
      if (client_ && n > client_slot && client_->fd.get() == fds[client_slot].fd) {
        const short re = fds[client_slot].revents;
        if (re & (POLLIN | POLLHUP | POLLERR)) {
          const ssize_t got = ::recv(client_->fd.get(), buf, sizeof buf, 0);
          if (got > 0) on_bytes(std::string_view(buf, static_cast<std::size_t>(got)));
          else if (got == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) drop_client();
        }
      }

      // forward audio
      while (auto msg = out_audio_.pop()) {
        if (streaming())
          send_frame(protocol::MsgType::Audio, protocol::encode_audio(msg->index, msg->samples), true);
        free_audio_.push(std::move(msg));
      }
      // latest state
      {
        std::string state;
        {
          std::lock_guard lock(state_mu_);
          if (state_seq_ != sent_state) {
            sent_state = state_seq_;
            state = state_json_;
          }
        }
        if (!state.empty() && streaming()) send_frame(protocol::MsgType::State, state);
      }
      flush();
    }
  }

  bool streaming() const { return client_ && (!client_->websocket || client_->handshaken) && !client_->closing; }

  void accept_client(int listen_fd, bool websocket) {
    detail::Fd fd(::accept(listen_fd, nullptr, nullptr));
    if (!fd) return;
    detail::set_nonblocking(fd.get());
    const int one = 1;
    ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (client_) {
      if (!websocket) {
        const std::string busy = protocol::encode_frame(protocol::MsgType::Error, R"({"error":"session busy"})");
        ::send(fd.get(), busy.data(), busy.size(), MSG_NOSIGNAL);
      }
      return;
    }
    ++connections_;
    client_ = std::make_unique<Client>();
    client_->fd = std::move(fd);
    client_->websocket = websocket;
    if (!websocket) send_current_state();
  }

  void send_current_state() {
    std::string state;
    {
      std::lock_guard lock(state_mu_);
      state = state_json_;
    }
    if (state.empty()) state = R"({"frame":null})";
    send_frame(protocol::MsgType::State, state);
  }

  void drop_client() { client_.reset(); }

  void send_frame(protocol::MsgType type, std::string_view payload, bool droppable = false) {
    if (!client_) return;
    if (droppable && client_->out.size() > kMaxOutBuffer) {
      ++audio_drops_;
      return;
    }
    std::string wire = protocol::encode_frame(type, payload);
    if (client_->websocket) wire = protocol::ws::encode(protocol::ws::Opcode::Binary, wire);
    client_->out += wire;
  }

  void send_error(const std::string& what) {
    ++protocol_errors_;
    send_frame(protocol::MsgType::Error, nlohmann::json{{"error", what}}.dump());
  }

  void flush() {
    if (!client_) return;
    while (!client_->out.empty()) {
      const ssize_t n = ::send(client_->fd.get(), client_->out.data(), client_->out.size(), MSG_NOSIGNAL);
      if (n > 0) {
        client_->out.erase(0, static_cast<std::size_t>(n));
      } else {
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) return;
        drop_client();
        return;
      }
    }
    if (client_->closing) drop_client();
  }

  void on_bytes(std::string_view bytes) {
    if (!client_->websocket) return on_stream(bytes);
    if (!client_->handshaken) {
      client_->http.append(bytes);
      const auto end = client_->http.find("\r\n\r\n");
      if (end == std::string::npos) {
        if (client_->http.size() > 8192) drop_client();
        return;
      }
      const auto key = protocol::ws::upgrade_key(std::string_view(client_->http).substr(0, end + 4));
      if (!key) {
        client_->out += "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n";
        client_->closing = true;
        return;
      }
      std::string rest = client_->http.substr(end + 4);
      client_->http.clear();
      client_->out += protocol::ws::handshake_response(*key);
      client_->handshaken = true;
      send_current_state();
      if (rest.empty()) return;
      bytes = rest;
      client_->ws.feed(bytes);
    } else {
      client_->ws.feed(bytes);
    }
    try {
      while (client_) {
        auto m = client_->ws.next();
        if (!m) break;
        using protocol::ws::Opcode;
        switch (m->opcode) {
          case Opcode::Binary:
            on_stream(m->payload);
            break;
          case Opcode::Ping:
            client_->out += protocol::ws::encode(Opcode::Pong, m->payload);
            break;
          case Opcode::Close:
            client_->out += protocol::ws::encode(Opcode::Close, {});
            client_->closing = true;
            return;
          case Opcode::Pong:
            break;
          default:
            send_error("websocket messages must be binary");
        }
      }
    } catch (const ProtocolError&) {
      ++protocol_errors_;
      client_->out += protocol::ws::encode(protocol::ws::Opcode::Close, {});
      client_->closing = true;
    }
  }

  void on_stream(std::string_view bytes) {
    client_->frames.feed(bytes);
    for (;;) {
      std::optional<protocol::Frame> f;
      try {
        f = client_->frames.next();
      } catch (const ProtocolError& e) {
        send_error(e.what());
        client_->closing = true;  // the stream cannot be resynchronized
        return;
      }
      if (!f) return;
      on_frame(*f);
    }
  }

  void on_frame(const protocol::Frame& f) {
    using protocol::MsgType;
    if (!protocol::known_type(f.type)) {
      char hex[8];
      std::snprintf(hex, sizeof hex, "0x%02x", f.type);
      return send_error(std::string("unknown message type ") + hex);
    }
    switch (static_cast<MsgType>(f.type)) {
      case MsgType::Pose:
        try {
          const auto p = protocol::decode_pose(f.payload);
          std::lock_guard lock(pose_mu_);
          acc_dx_ += p.dx;
          acc_dy_ += p.dy;
          inject_ = p.inject;
          marker_ = p.marker;
          last_pose_ = std::chrono::steady_clock::now();
          ++poses_;
        } catch (const ProtocolError& e) {
          send_error(e.what());
        }
        return;
      case MsgType::ConfigPatch:
        try {
          apply_patch(f.payload);
        } catch (const Error& e) {
          send_error(std::string("config patch rejected: ") + e.what());
        }
        return;
      default:
        send_error("message type not accepted from clients");
    }
  }

  void apply_patch(std::string_view text) {
    const auto patch = nlohmann::json::parse(text, nullptr, false);
    if (patch.is_discarded() || !patch.is_object()) throw ConfigError("patch must be a JSON object");
    std::vector<std::string> leaves;
    detail::collect_leaves(patch, "", leaves);
    if (leaves.empty()) throw ConfigError("patch is empty");
    for (const auto& key : leaves)
      if (key.rfind("excitation.", 0) != 0 && key != "render.pickup_gain")
        throw ConfigError("'" + key + "' cannot be changed during a live session");
    const SessionConfig next = from_json(patch, cfg_);  // validates
    cfg_.excitation = next.excitation;
    cfg_.render.pickup_gain = next.render.pickup_gain;
    {
      std::lock_guard lock(patch_mu_);
      pending_excitation_ = next.excitation;
    }
    pickup_gain_.store(next.render.pickup_gain);
    ++config_patches_;
  }

  SessionConfig cfg_;
  Options opt_;

  DropOldestRing<FrameUpdate> updates_;   // analysis -> audio
  DropOldestRing<FrameUpdate> recycled_;  // audio -> analysis (freed there)
  DropOldestRing<detail::AudioMsg> free_audio_;  // control -> audio
  DropOldestRing<detail::AudioMsg> out_audio_;   // audio -> control
  std::vector<std::unique_ptr<FrameUpdate>> stash_;

  std::atomic<bool> running_{false};
  std::thread analysis_thread_, audio_thread_, control_thread_;
  detail::Fd raw_listen_, ws_listen_;
  std::unique_ptr<Client> client_;

  std::mutex pose_mu_;
  double acc_dx_ = 0.0, acc_dy_ = 0.0;
  bool inject_ = false;
  std::uint32_t marker_ = 0;
  std::optional<std::chrono::steady_clock::time_point> last_pose_;

  std::mutex patch_mu_;
  std::optional<dynamics::ExcitationConfig> pending_excitation_;
  std::atomic<double> pickup_gain_;

  std::mutex state_mu_;
  std::string state_json_;
  std::uint64_t state_seq_ = 0;

  std::atomic<std::uint32_t> applied_marker_{0};
  std::atomic<std::uint32_t> applied_block_{0};

  std::vector<FrameReport> reports_;
  std::vector<float> recorded_;

  std::atomic<bool> realtime_audio_{false};
  std::atomic<double> worst_underrun_ms_{0.0};
  std::atomic<std::uint64_t> frames_{0}, overruns_{0}, blocks_{0}, underruns_{0}, audio_drops_{0}, events_applied_{0},
      poses_{0}, protocol_errors_{0}, connections_{0}, config_patches_{0};
};

}  // namespace retisonic::runtime
