#pragma once

// Blocking loopback client for the live protocol, raw TCP or WebSocket.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <optional>
#include <string>

#include "retisonic/core.hpp"
#include "retisonic/protocol.hpp"
#include "retisonic/websocket.hpp"

namespace retisonic::protocol {

class Client {
 public:
  Client(const std::string& host, int port, bool websocket = false) : websocket_(websocket) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd_);
      throw IoError("connect " + host + ":" + std::to_string(port) + ": " + err);
    }
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (websocket_) handshake(host, port);
  }
  ~Client() { close(); }
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  /// Sends bytes as-is on a raw connection; wrapped in one binary message on WebSocket.
  void send_raw(std::string_view bytes) {
    if (websocket_) write_all(ws::encode_masked(ws::Opcode::Binary, bytes, mask_++ * 2654435761u));
    else write_all(bytes);
  }
  void send(MsgType type, std::string_view payload) { send_raw(encode_frame(type, payload)); }
  void send_pose(const Pose& p) { send(MsgType::Pose, encode_pose(p)); }

  /// Next frame, or nullopt after `timeout` without one (or on EOF).
  std::optional<Frame> next(std::chrono::milliseconds timeout = std::chrono::milliseconds(1000)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto f = frames_.next()) return f;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() < 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) continue;
      char buf[65536];
      const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n <= 0) return std::nullopt;
      feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
  }

  /// Waits for the next frame of the given type, discarding others.
  std::optional<Frame> next_of(MsgType type, std::chrono::milliseconds timeout = std::chrono::milliseconds(1000)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      auto f = next(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()));
      if (!f) return std::nullopt;
      if (f->type == static_cast<std::uint8_t>(type)) return f;
    }
    return std::nullopt;
  }

 private:
  void write_all(std::string_view bytes) {
    while (!bytes.empty()) {
      const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
      if (n <= 0) throw IoError(std::string("send: ") + std::strerror(errno));
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  void feed(std::string_view bytes) {
    if (!websocket_) return frames_.feed(bytes);
    ws_.feed(bytes);
    while (auto m = ws_.next())
      if (m->opcode == ws::Opcode::Binary) frames_.feed(m->payload);
  }

  void handshake(const std::string& host, int port) {
    const std::string key = ws::base64("retisonic-client!");  // 16 bytes
    write_all("GET / HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
              "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
              "\r\nSec-WebSocket-Version: 13\r\n\r\n");
    std::string resp;
    char c;
    while (resp.find("\r\n\r\n") == std::string::npos) {
      if (::recv(fd_, &c, 1, 0) != 1) throw IoError("websocket handshake: connection closed");
      resp.push_back(c);
      if (resp.size() > 8192) throw ProtocolError("websocket handshake response too long");
    }
    if (resp.rfind("HTTP/1.1 101", 0) != 0 || resp.find(ws::accept_key(key)) == std::string::npos)
      throw ProtocolError("websocket handshake rejected");
  }

  int fd_ = -1;
  bool websocket_;
  std::uint32_t mask_ = 1;
  FrameDecoder frames_;
  ws::Decoder ws_{false};
};

}  // namespace retisonic::protocol
