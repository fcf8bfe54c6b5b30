#pragma once

// Recorded segmentation sequences: in-memory frame types, validation,
// the JSON Lines sequence format and 8-bit binary PGM images.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "retisonic/core.hpp"

namespace retisonic::ingest {

inline constexpr int kMinFrameSize = 32;

struct BScanFrame {
  double t = 0.0;
  int height = 0;
  int width = 0;
  std::vector<float> intensity;  // row-major, H*W, values in [0,1]

  float at(int row, int col) const { return intensity[static_cast<std::size_t>(row) * width + col]; }
  float& at(int row, int col) { return intensity[static_cast<std::size_t>(row) * width + col]; }
};

struct NeedleEvidence {
  std::vector<Vec2> pixels;
  std::optional<Vec2> tip;
  double conf = 0.0;

  friend bool operator==(const NeedleEvidence&, const NeedleEvidence&) = default;
};

/// One frame of segmentation evidence. Axial positions are row indices that
/// grow downward, so a defined RPE never lies above the ILM.
struct SegFrame {
  double t = 0.0;
  int width = 0;
  std::vector<std::optional<double>> ilm;
  std::vector<std::optional<double>> rpe;
  std::vector<double> conf_ilm;
  std::vector<double> conf_rpe;
  NeedleEvidence needle;
  std::optional<std::string> image_path;

  friend bool operator==(const SegFrame&, const SegFrame&) = default;
};

struct SequenceFrame {
  SegFrame seg;
  std::optional<BScanFrame> image;
};

namespace detail {

inline std::string where(std::size_t frame_index, std::optional<int> column = std::nullopt) {
  std::string s = "frame " + std::to_string(frame_index);
  if (column) s += " column " + std::to_string(*column);
  return s;
}

}  // namespace detail

/// Checks every SegFrame invariant. `height` bounds row coordinates when known.
inline void validate(const SegFrame& f, std::size_t frame_index = 0,
                     std::optional<int> height = std::nullopt) {
  using detail::where;
  if (f.width < kMinFrameSize)
    throw ValidationError(where(frame_index) + ": width " + std::to_string(f.width) + " below minimum");
  const auto w = static_cast<std::size_t>(f.width);
  if (f.ilm.size() != w || f.rpe.size() != w || f.conf_ilm.size() != w || f.conf_rpe.size() != w)
    throw ValidationError(where(frame_index) + ": per-column array length differs from w");
  if (!std::isfinite(f.t)) throw ValidationError(where(frame_index) + ": non-finite timestamp");

  const auto check_row = [&](double y, int col, const char* what) {
    if (!std::isfinite(y) || y < 0.0 || (height && y > *height - 1))
      throw ValidationError(where(frame_index, col) + ": " + what + " row out of frame bounds");
  };
  for (int x = 0; x < f.width; ++x) {
    const auto i = static_cast<std::size_t>(x);
    for (double c : {f.conf_ilm[i], f.conf_rpe[i]})
      if (!(c >= 0.0 && c <= 1.0))
        throw ValidationError(where(frame_index, x) + ": confidence outside [0,1]");
    if (f.ilm[i]) check_row(*f.ilm[i], x, "ilm");
    if (f.rpe[i]) check_row(*f.rpe[i], x, "rpe");
    if (f.ilm[i] && f.rpe[i] && *f.rpe[i] < *f.ilm[i])
      throw ValidationError(where(frame_index, x) + ": rpe above ilm");
  }
  const auto check_point = [&](Vec2 p, const char* what) {
    if (!is_finite(p) || p.x < 0.0 || p.x > f.width - 1 || p.y < 0.0 || (height && p.y > *height - 1))
      throw ValidationError(where(frame_index) + ": " + what + " outside frame bounds");
  };
  for (const Vec2& p : f.needle.pixels) check_point(p, "needle pixel");
  if (f.needle.tip) check_point(*f.needle.tip, "needle tip");
  if (!(f.needle.conf >= 0.0 && f.needle.conf <= 1.0))
    throw ValidationError(where(frame_index) + ": needle confidence outside [0,1]");
}

inline void validate(const BScanFrame& b) {
  if (b.height < kMinFrameSize || b.width < kMinFrameSize)
    throw ValidationError("B-scan smaller than " + std::to_string(kMinFrameSize) + " px");
  if (b.intensity.size() != static_cast<std::size_t>(b.height) * b.width)
    throw ValidationError("B-scan intensity size mismatch");
  for (float v : b.intensity)
    if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("B-scan intensity outside [0,1]");
}

// ---- PGM (P5, 8-bit) ----

inline void write_pgm(const BScanFrame& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.intensity.size());
  std::transform(img.intensity.begin(), img.intensity.end(), bytes.begin(), [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline BScanFrame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const auto token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
      } else {
        tok.push_back(c);
      }
    }
    return tok;
  };
  if (token() != "P5") throw IoError("'" + path.string() + "' is not a binary PGM");
  BScanFrame img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    if (std::stoi(token()) != 255) throw IoError("'" + path.string() + "': only 8-bit PGM supported");
  } catch (const std::logic_error&) {
    throw IoError("'" + path.string() + "': malformed PGM header");
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("'" + path.string() + "': truncated PGM data");
  img.intensity.resize(bytes.size());
  std::transform(bytes.begin(), bytes.end(), img.intensity.begin(),
                 [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
  return img;
}

// ---- JSON Lines sequence format ----

namespace detail {

inline std::optional<double> nullable_number(const nlohmann::json& v) {
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw std::invalid_argument("expected number or null");
  return v.get<double>();
}

inline Vec2 point(const nlohmann::json& v) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw std::invalid_argument("expected [x,y]");
  return {v[0].get<double>(), v[1].get<double>()};
}

inline SegFrame seg_from_json(const nlohmann::json& j) {
  SegFrame f;
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  for (const char* key : {"t", "w", "ilm", "rpe", "cilm", "crpe", "needle"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing key '") + key + "'");
  if (!j.at("t").is_number()) throw std::invalid_argument("'t' must be a number");
  if (!j.at("w").is_number_integer()) throw std::invalid_argument("'w' must be an integer");
  f.t = j.at("t").get<double>();
  f.width = j.at("w").get<int>();
  const auto w = static_cast<std::size_t>(std::max(f.width, 0));
  const auto array_of = [&](const char* key) -> const nlohmann::json& {
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != w)
      throw std::invalid_argument(std::string("'") + key + "' must be an array of length w");
    return a;
  };
  for (const auto& v : array_of("ilm")) f.ilm.push_back(nullable_number(v));
  for (const auto& v : array_of("rpe")) f.rpe.push_back(nullable_number(v));
  for (const auto& v : array_of("cilm")) {
    if (!v.is_number()) throw std::invalid_argument("'cilm' entries must be numbers");
    f.conf_ilm.push_back(v.get<double>());
  }
  for (const auto& v : array_of("crpe")) {
    if (!v.is_number()) throw std::invalid_argument("'crpe' entries must be numbers");
    f.conf_rpe.push_back(v.get<double>());
  }
  const auto& n = j.at("needle");
  if (!n.is_object() || !n.contains("pts") || !n.contains("conf"))
    throw std::invalid_argument("'needle' must carry 'pts' and 'conf'");
  if (!n.at("pts").is_array()) throw std::invalid_argument("'needle.pts' must be an array");
  for (const auto& p : n.at("pts")) f.needle.pixels.push_back(point(p));
  if (n.contains("tip") && !n.at("tip").is_null()) f.needle.tip = point(n.at("tip"));
  if (!n.at("conf").is_number()) throw std::invalid_argument("'needle.conf' must be a number");
  f.needle.conf = n.at("conf").get<double>();
  if (j.contains("img") && !j.at("img").is_null()) {
    if (!j.at("img").is_string()) throw std::invalid_argument("'img' must be a string or null");
    f.image_path = j.at("img").get<std::string>();
  }
  return f;
}

}  // namespace detail

/// Serializes one frame as a single JSON object with the canonical key order.
inline std::string to_json_line(const SegFrame& f) {
  using ojson = nlohmann::ordered_json;
  const auto nullable = [](const std::vector<std::optional<double>>& v) {
    ojson a = ojson::array();
    for (const auto& x : v) a.push_back(x ? ojson(*x) : ojson(nullptr));
    return a;
  };
  const auto pt = [](Vec2 p) { return ojson::array({p.x, p.y}); };
  ojson j;
  j["t"] = f.t;
  j["w"] = f.width;
  j["ilm"] = nullable(f.ilm);
  j["rpe"] = nullable(f.rpe);
  j["cilm"] = f.conf_ilm;
  j["crpe"] = f.conf_rpe;
  ojson needle;
  needle["pts"] = ojson::array();
  for (Vec2 p : f.needle.pixels) needle["pts"].push_back(pt(p));
  needle["tip"] = f.needle.tip ? pt(*f.needle.tip) : ojson(nullptr);
  needle["conf"] = f.needle.conf;
  j["needle"] = std::move(needle);
  j["img"] = f.image_path ? ojson(*f.image_path) : ojson(nullptr);
  return j.dump();
}

/// Streaming reader: frames come out in file order, validated, with timestamps
/// checked to be strictly increasing. Missing columns stay missing.
class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& path, bool load_images = true)
      : path_(path), in_(path), load_images_(load_images) {
    if (!std::filesystem::exists(path)) throw IoError("sequence '" + path.string() + "' does not exist");
    if (!in_) throw IoError("cannot open sequence '" + path.string() + "'");
  }

  std::optional<SequenceFrame> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      SequenceFrame out;
      try {
        out.seg = detail::seg_from_json(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(line_no_, e.what());
      } catch (const std::invalid_argument& e) {
        throw ParseError(line_no_, e.what());
      }
      if (out.seg.image_path && load_images_) {
        out.image = read_pgm(path_.parent_path() / *out.seg.image_path);
        out.image->t = out.seg.t;
        validate(*out.image);
      }
      validate(out.seg, frame_index_, out.image ? std::optional<int>(out.image->height) : std::nullopt);
      if (out.image && out.image->width != out.seg.width)
        throw ValidationError(detail::where(frame_index_) + ": image width differs from w");
      if (last_t_ && !(out.seg.t > *last_t_))
        throw SequenceError(detail::where(frame_index_) + " (line " + std::to_string(line_no_) +
                            "): timestamp not strictly increasing");
      last_t_ = out.seg.t;
      ++frame_index_;
      return out;
    }
    return std::nullopt;
  }

  std::size_t frames_read() const { return frame_index_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  bool load_images_;
  std::size_t line_no_ = 0;
  std::size_t frame_index_ = 0;
  std::optional<double> last_t_;
};

inline std::vector<SequenceFrame> load_sequence(const std::filesystem::path& path, bool load_images = true) {
  SequenceReader reader(path, load_images);
  std::vector<SequenceFrame> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

/// Writes frames as JSON Lines. Frames carrying an image get a PGM written to
/// `<stem>_img/NNNNNN.pgm` next to the sequence file (unless `img` already names one).
inline void write_sequence(const std::vector<SequenceFrame>& frames, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string img_dir = path.stem().string() + "_img";
  std::size_t index = 0;
  for (const auto& frame : frames) {
    SegFrame seg = frame.seg;
    if (frame.image) {
      if (!seg.image_path) {
        std::ostringstream name;
        name << img_dir << '/' << std::setw(6) << std::setfill('0') << index << ".pgm";
        seg.image_path = name.str();
      }
      const auto img_path = path.parent_path() / *seg.image_path;
      std::filesystem::create_directories(img_path.parent_path());
      write_pgm(*frame.image, img_path);
    }
    out << to_json_line(seg) << '\n';
    ++index;
  }
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_sequence(const std::vector<SegFrame>& frames, const std::filesystem::path& path) {
  std::vector<SequenceFrame> wrapped;
  wrapped.reserve(frames.size());
  for (const auto& f : frames) wrapped.push_back({f, std::nullopt});
  write_sequence(wrapped, path);
}

}  // namespace retisonic::ingest
