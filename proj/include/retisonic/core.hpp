#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace retisonic {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr int kSampleRate = 44100;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  constexpr Vec2& operator+=(Vec2 b) { x += b.x; y += b.y; return *this; }
  constexpr Vec2& operator-=(Vec2 b) { x -= b.x; y -= b.y; return *this; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }
inline bool is_finite(Vec2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Rigid rotation about a pivot that levels tissue tilted by `theta_deg`.
/// `to_rotated` maps image coordinates into the tissue-aligned frame.
struct FrameRotation {
  double theta_deg = 0.0;
  Vec2 pivot{};

  Vec2 to_rotated(Vec2 p) const {
    const double c = std::cos(deg2rad(theta_deg)), s = std::sin(deg2rad(theta_deg));
    const Vec2 d = p - pivot;
    return Vec2{c * d.x + s * d.y, -s * d.x + c * d.y} + pivot;
  }
  Vec2 to_image(Vec2 p) const {
    const double c = std::cos(deg2rad(theta_deg)), s = std::sin(deg2rad(theta_deg));
    const Vec2 d = p - pivot;
    return Vec2{c * d.x - s * d.y, s * d.x + c * d.y} + pivot;
  }
  Vec2 direction_to_rotated(Vec2 v) const { return to_rotated(v + pivot) - pivot; }
};

enum class TissueLabel : std::uint8_t { Vitreous = 0, Ilm = 1, Retina = 2, Rpe = 3 };
inline constexpr int kTissueLabelCount = 4;

/// Depth order used for tie-breaks: larger is deeper.
constexpr int depth_rank(TissueLabel l) { return static_cast<int>(l); }

constexpr std::string_view to_string(TissueLabel l) {
  switch (l) {
    case TissueLabel::Vitreous: return "vitreous";
    case TissueLabel::Ilm: return "ILM";
    case TissueLabel::Retina: return "retina";
    case TissueLabel::Rpe: return "RPE";
  }
  return "?";
}

inline TissueLabel parse_tissue_label(std::string_view s);

// Error hierarchy. Every failure the library reports derives from Error.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record; `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SequenceError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class InsufficientEvidence : public Error {
 public:
  using Error::Error;
};

class DegenerateOrientation : public Error {
 public:
  using Error::Error;
};

class NumericalFault : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

inline TissueLabel parse_tissue_label(std::string_view s) {
  if (s == "vitreous") return TissueLabel::Vitreous;
  if (s == "ILM" || s == "ilm") return TissueLabel::Ilm;
  if (s == "retina") return TissueLabel::Retina;
  if (s == "RPE" || s == "rpe") return TissueLabel::Rpe;
  throw ConfigError("unknown tissue label '" + std::string(s) + "'");
}

}  // namespace retisonic
