#pragma once

// Minimal RFC 6455 server side: upgrade handshake and binary message framing.
// Browsers cannot open raw TCP sockets, so the UI stream may be carried
// inside WebSocket binary messages; the payload bytes are the same framed
// protocol stream.

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "retisonic/core.hpp"

namespace retisonic::protocol::ws {

inline constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

inline std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string accept_key(std::string_view client_key) {
  const std::string joined = std::string(client_key) + std::string(kGuid);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(joined.data()), joined.size(), digest);
  return base64(std::string_view(reinterpret_cast<const char*>(digest), SHA_DIGEST_LENGTH));
}

/// Returns the Sec-WebSocket-Key of a complete upgrade request, or nullopt if
/// the request is not an upgrade.
inline std::optional<std::string> upgrade_key(std::string_view request) {
  std::optional<std::string> key;
  bool upgrade = false;
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos && pos + 2 < request.size()) {
    const std::size_t end = request.find("\r\n", pos + 2);
    if (end == std::string_view::npos || end == pos + 2) break;
    const std::string_view line = request.substr(pos + 2, end - pos - 2);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos) {
      std::string name(line.substr(0, colon));
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
      std::string_view value = line.substr(colon + 1);
      while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
      while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
      if (name == "sec-websocket-key") key = std::string(value);
      if (name == "upgrade") {
        std::string v(value);
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        upgrade = v == "websocket";
      }
    }
    pos = end;
  }
  if (!upgrade || !key) return std::nullopt;
  return key;
}

inline std::string handshake_response(std::string_view client_key) {
  return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
         accept_key(client_key) + "\r\n\r\n";
}

enum class Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

/// Unmasked server frame.
inline std::string encode(Opcode op, std::string_view payload) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(n));
  } else if (n <= 0xFFFF) {
    out.push_back(126);
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(127);
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
  }
  out.append(payload);
  return out;
}

/// Masked client frame (used by tests and the loopback client).
inline std::string encode_masked(Opcode op, std::string_view payload, std::uint32_t mask_key) {
  std::string out = encode(op, payload);
  const std::size_t header = out.size() - payload.size();
  out[1] = static_cast<char>(out[1] | 0x80);
  const char mask[4] = {static_cast<char>(mask_key >> 24), static_cast<char>(mask_key >> 16),
                        static_cast<char>(mask_key >> 8), static_cast<char>(mask_key)};
  out.insert(header, mask, 4);
  for (std::size_t i = 0; i < payload.size(); ++i) out[header + 4 + i] = static_cast<char>(payload[i] ^ mask[i % 4]);
  return out;
}

struct Message {
  Opcode opcode = Opcode::Binary;
  std::string payload;
};

/// Reassembles (possibly fragmented) frames into messages. Control frames
/// are returned as they arrive.
class Decoder {
 public:
  explicit Decoder(bool require_mask = true) : require_mask_(require_mask) {}

  void feed(std::string_view bytes) { buf_.append(bytes); }

  std::optional<Message> next() {
    for (;;) {
      if (buf_.size() < 2) return std::nullopt;
      const auto* u = reinterpret_cast<const unsigned char*>(buf_.data());
      const bool fin = u[0] & 0x80;
      const auto op = static_cast<Opcode>(u[0] & 0x0F);
      const bool masked = u[1] & 0x80;
      if (require_mask_ && !masked) throw ProtocolError("client websocket frame is not masked");
      std::uint64_t len = u[1] & 0x7F;
      std::size_t header = 2;
      if (len == 126) {
        if (buf_.size() < 4) return std::nullopt;
        len = std::uint64_t(u[2]) << 8 | u[3];
        header = 4;
      } else if (len == 127) {
        if (buf_.size() < 10) return std::nullopt;
        len = 0;
        for (int i = 0; i < 8; ++i) len = len << 8 | u[2 + i];
        header = 10;
      }
      if (len > (1u << 24)) throw ProtocolError("websocket frame too large");
      const std::size_t mask_off = header;
      if (masked) header += 4;
      if (buf_.size() < header + len) return std::nullopt;
      std::string payload = buf_.substr(header, static_cast<std::size_t>(len));
      if (masked)
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ buf_[mask_off + i % 4]);
      buf_.erase(0, header + static_cast<std::size_t>(len));

      if (static_cast<std::uint8_t>(op) >= 0x8) return Message{op, std::move(payload)};
      if (op == Opcode::Continuation) {
        if (!partial_) throw ProtocolError("continuation frame without a message");
        partial_->payload += payload;
      } else {
        if (partial_) throw ProtocolError("new message before the previous one finished");
        partial_ = Message{op, std::move(payload)};
      }
      if (fin) {
        Message m = std::move(*partial_);
        partial_.reset();
        return m;
      }
    }
  }

 private:
  bool require_mask_;
  std::string buf_;
  std::optional<Message> partial_;
};

}  // namespace retisonic::protocol::ws
