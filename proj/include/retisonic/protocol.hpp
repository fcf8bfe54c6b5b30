#pragma once

// UI stream framing: 1 type byte, u32 little-endian payload length, payload.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "retisonic/core.hpp"
#include "retisonic/render.hpp"

namespace retisonic::protocol {

enum class MsgType : std::uint8_t { Pose = 0x01, Audio = 0x02, State = 0x03, Error = 0x04, ConfigPatch = 0x05 };

inline constexpr std::size_t kHeaderSize = 5;
inline constexpr std::size_t kMaxPayload = 1u << 20;
inline constexpr std::size_t kPosePayload = 13;
inline constexpr std::size_t kPosePayloadNoMarker = 9;

inline bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x05; }

struct Frame {
  std::uint8_t type = 0;
  std::string payload;
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return std::uint32_t(u[0]) | std::uint32_t(u[1]) << 8 | std::uint32_t(u[2]) << 16 | std::uint32_t(u[3]) << 24;
}

}  // namespace detail

inline std::string encode_frame(MsgType type, std::string_view payload) {
  if (payload.size() > kMaxPayload) throw ProtocolError("payload exceeds 1 MiB");
  std::string out;
  out.reserve(kHeaderSize + payload.size());
  out.push_back(static_cast<char>(type));
  detail::put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out.append(payload);
  return out;
}

/// Incremental decoder for a byte stream. Unknown types are still framed
/// (the caller reports them); an oversized length is unrecoverable.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }

  std::optional<Frame> next() {
    if (buf_.size() - pos_ < kHeaderSize) return compact(), std::nullopt;
    const std::uint32_t len = detail::get_u32(buf_.data() + pos_ + 1);
    if (len > kMaxPayload) throw ProtocolError("frame length " + std::to_string(len) + " exceeds 1 MiB");
    if (buf_.size() - pos_ < kHeaderSize + len) return compact(), std::nullopt;
    Frame f;
    f.type = static_cast<std::uint8_t>(buf_[pos_]);
    f.payload.assign(buf_, pos_ + kHeaderSize, len);
    pos_ += kHeaderSize + len;
    return f;
  }

  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  void compact() {
    if (pos_ > 0) {
      buf_.erase(0, pos_);
      pos_ = 0;
    }
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

// ---- pose ----

struct Pose {
  float dx = 0.0f;
  float dy = 0.0f;
  bool inject = false;
  std::uint32_t marker = 0;  // echoed back for latency measurement

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// 13 bytes: dx f32, dy f32, inject u8, marker u32, all little-endian.
inline std::string encode_pose(const Pose& p) {
  std::string s;
  s.reserve(kPosePayload);
  detail::put_u32(s, std::bit_cast<std::uint32_t>(p.dx));
  detail::put_u32(s, std::bit_cast<std::uint32_t>(p.dy));
  s.push_back(static_cast<char>(p.inject ? 1 : 0));
  detail::put_u32(s, p.marker);
  return s;
}

/// Accepts the 13-byte form and the 9-byte form without marker.
inline Pose decode_pose(std::string_view payload) {
  if (payload.size() != kPosePayload && payload.size() != kPosePayloadNoMarker)
    throw ProtocolError("pose payload must be 13 or 9 bytes, got " + std::to_string(payload.size()));
  Pose p;
  p.dx = std::bit_cast<float>(detail::get_u32(payload.data()));
  p.dy = std::bit_cast<float>(detail::get_u32(payload.data() + 4));
  const auto inject = static_cast<unsigned char>(payload[8]);
  if (inject > 1) throw ProtocolError("pose inject flag must be 0 or 1");
  if (!std::isfinite(p.dx) || !std::isfinite(p.dy)) throw ProtocolError("pose delta is not finite");
  p.inject = inject == 1;
  if (payload.size() == kPosePayload) p.marker = detail::get_u32(payload.data() + 9);
  return p;
}

// ---- audio ----

inline std::string encode_audio(std::uint32_t block_index, std::span<const float> samples) {
  std::string s;
  s.reserve(4 + 2 * samples.size());
  detail::put_u32(s, block_index);
  for (float x : samples) {
    const auto q = static_cast<std::uint16_t>(render::to_pcm16(x));
    s.push_back(static_cast<char>(q & 0xFF));
    s.push_back(static_cast<char>(q >> 8));
  }
  return s;
}

struct AudioPayload {
  std::uint32_t block_index = 0;
  std::vector<std::int16_t> pcm;
};

inline AudioPayload decode_audio(std::string_view payload) {
  if (payload.size() < 4 || (payload.size() - 4) % 2 != 0) throw ProtocolError("audio payload has odd length");
  AudioPayload a;
  a.block_index = detail::get_u32(payload.data());
  a.pcm.resize((payload.size() - 4) / 2);
  for (std::size_t i = 0; i < a.pcm.size(); ++i) {
    const auto* u = reinterpret_cast<const unsigned char*>(payload.data() + 4 + 2 * i);
    a.pcm[i] = static_cast<std::int16_t>(u[0] | u[1] << 8);
  }
  return a;
}

}  // namespace retisonic::protocol
