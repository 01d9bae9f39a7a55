#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "laserforge/calibration.hpp"
#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"
#include "laserforge/image.hpp"
#include "laserforge/laser.hpp"
#include "laserforge/reconstruction.hpp"
#include "laserforge/simulator.hpp"

namespace laserforge {

// ---------------------------------------------------------------------------
// Raw files

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(errc::io_error, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  if (!f.good() && !f.eof()) fail(errc::io_error, "read failed for " + path);
  return ss.str();
}

/// Write via a temp file in the same directory, then rename into place, so a
/// crash never leaves a half-written artifact.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(errc::io_error, "cannot open " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f.good()) fail(errc::io_error, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(errc::io_error, "cannot rename " + tmp + " to " + path);
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyFormat { ascii, binary_little_endian };

/// Serialize a cloud to PLY. The header is fixed verbatim (comment included);
/// ascii bodies print six decimals, binary bodies are 32-bit little-endian
/// floats, both with plain linefeeds.
inline std::string write_ply(const PointCloud& cloud, PlyFormat format = PlyFormat::ascii) {
  if (!cloud.colors.empty() && cloud.colors.size() != cloud.points.size())
    fail(errc::dimension_error, "write_ply: color/point count mismatch");
  for (const Point3& p : cloud.points)
    if (!finite(p)) fail(errc::non_finite, "write_ply: non-finite point");
  const bool colored = !cloud.colors.empty();

  std::string out;
  out += "ply\n";
  out += format == PlyFormat::ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n";
  out += "comment laserforge\n";
  out += "element vertex " + std::to_string(cloud.points.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  if (colored) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";

  if (format == PlyFormat::ascii) {
    char line[128];
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      const Point3& p = cloud.points[i];
      int n = std::snprintf(line, sizeof line, "%.6f %.6f %.6f", p.x, p.y, p.z);
      out.append(line, n);
      if (colored) {
        n = std::snprintf(line, sizeof line, " %u %u %u", cloud.colors[i][0], cloud.colors[i][1],
                          cloud.colors[i][2]);
        out.append(line, n);
      }
      out += '\n';
    }
  } else {
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      const float xyz[3] = {static_cast<float>(cloud.points[i].x),
                            static_cast<float>(cloud.points[i].y),
                            static_cast<float>(cloud.points[i].z)};
      char buf[12];
      std::memcpy(buf, xyz, 12);
      out.append(buf, 12);
      if (colored) out.append(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
    }
  }
  return out;
}

/// Parse PLY produced by write_ply (xyz floats, optional uchar rgb, ascii or
/// binary little-endian).
inline PointCloud read_ply(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line) || line != "ply") fail(errc::bad_magic, "not a PLY file");

  bool binary = false;
  bool saw_format = false;
  std::size_t count = 0;
  bool saw_vertex = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") continue;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        fail(errc::parse_error, "unsupported PLY format: " + fmt);
      saw_format = true;
    } else if (word == "element") {
      std::string what;
      ls >> what >> count;
      if (what != "vertex") fail(errc::parse_error, "unsupported PLY element: " + what);
      saw_vertex = true;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    } else {
      fail(errc::parse_error, "unexpected PLY header line: " + line);
    }
  }
  if (line != "end_header" || !saw_format || !saw_vertex)
    fail(errc::truncated, "PLY header incomplete");

  bool colored = false;
  if (props == std::vector<std::string>{"float x", "float y", "float z"})
    colored = false;
  else if (props == std::vector<std::string>{"float x", "float y", "float z", "uchar red",
                                             "uchar green", "uchar blue"})
    colored = true;
  else
    fail(errc::parse_error, "unsupported PLY property layout");

  PointCloud cloud;
  cloud.points.reserve(count);
  if (colored) cloud.colors.reserve(count);
  if (!binary) {
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line)) fail(errc::truncated, "PLY body ends early");
      std::istringstream ls(line);
      Point3 p;
      if (!(ls >> p.x >> p.y >> p.z)) fail(errc::parse_error, "bad PLY vertex line: " + line);
      cloud.points.push_back(p);
      if (colored) {
        unsigned r, g, b;
        if (!(ls >> r >> g >> b)) fail(errc::parse_error, "bad PLY color on line: " + line);
        cloud.colors.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                static_cast<std::uint8_t>(b)});
      }
    }
  } else {
    const std::size_t body = static_cast<std::size_t>(in.tellg());
    const std::size_t stride = colored ? 15 : 12;
    if (bytes.size() < body + count * stride) fail(errc::truncated, "PLY body ends early");
    const char* ptr = bytes.data() + body;
    for (std::size_t i = 0; i < count; ++i) {
      float xyz[3];
      std::memcpy(xyz, ptr, 12);
      ptr += 12;
      cloud.points.push_back({xyz[0], xyz[1], xyz[2]});
      if (colored) {
        cloud.colors.push_back({static_cast<std::uint8_t>(ptr[0]), static_cast<std::uint8_t>(ptr[1]),
                                static_cast<std::uint8_t>(ptr[2])});
        ptr += 3;
      }
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// PGM

inline std::string write_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

namespace detail {

// Next header token, skipping whitespace and '#' comments.
inline std::string pgm_token(const std::string& bytes, std::size_t* pos) {
  std::size_t i = *pos;
  while (i < bytes.size()) {
    if (bytes[i] == '#') {
      while (i < bytes.size() && bytes[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(bytes[i]))) {
      ++i;
    } else {
      break;
    }
  }
  const std::size_t start = i;
  while (i < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[i])) &&
         bytes[i] != '#')
    ++i;
  *pos = i;
  if (start == i) fail(errc::truncated, "PGM header ends early");
  return bytes.substr(start, i - start);
}

inline int pgm_int(const std::string& bytes, std::size_t* pos) {
  const std::string tok = pgm_token(bytes, pos);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(errc::bad_dimensions, "bad PGM header token: " + tok);
  }
}

}  // namespace detail

/// Parse a binary (P5) PGM with maxval 255; '#' comments allowed anywhere in
/// the header.
inline GrayImage read_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || detail::pgm_token(bytes, &pos) != "P5")
    fail(errc::bad_magic, "not a binary PGM file");
  const int w = detail::pgm_int(bytes, &pos);
  const int h = detail::pgm_int(bytes, &pos);
  if (w < 1 || h < 1) fail(errc::bad_dimensions, "PGM dimensions must be positive");
  const int maxval = detail::pgm_int(bytes, &pos);
  if (maxval != 255) fail(errc::unsupported_maxval, "PGM maxval must be 255");
  ++pos;  // exactly one whitespace byte separates the header from the raster
  const std::size_t need = static_cast<std::size_t>(w) * h;
  if (pos + need > bytes.size()) fail(errc::truncated, "PGM pixel data ends early");
  GrayImage img(w, h);
  std::memcpy(img.pixels.data(), bytes.data() + pos, need);
  return img;
}

// ---------------------------------------------------------------------------
// JSON artifacts

namespace detail {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

inline std::string fmt_vec3(const Vec3& v) {
  return "[" + fmt_num(v.x) + ", " + fmt_num(v.y) + ", " + fmt_num(v.z) + "]";
}

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& name) {
  const auto it = j.find(name);
  if (it == j.end()) fail(errc::missing_field, name);
  return *it;
}

inline Vec3 vec3_of(const nlohmann::json& j, const std::string& name) {
  const nlohmann::json& a = field(j, name);
  if (!a.is_array() || a.size() != 3)
    fail(errc::parse_error, name + " must be a 3-element array");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

inline nlohmann::json parse_json(const std::string& bytes, const std::string& what) {
  try {
    return nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    fail(errc::parse_error, what + ": " + e.what());
  }
}

}  // namespace detail

inline std::string calibration_to_json(const CalibrationResult& r) {
  std::string out = "{\n";
  out += "  \"fx\": " + detail::fmt_num(r.intrinsics.fx) + ",\n";
  out += "  \"fy\": " + detail::fmt_num(r.intrinsics.fy) + ",\n";
  out += "  \"cx\": " + detail::fmt_num(r.intrinsics.cx) + ",\n";
  out += "  \"cy\": " + detail::fmt_num(r.intrinsics.cy) + ",\n";
  out += "  \"k1\": " + detail::fmt_num(r.intrinsics.k1) + ",\n";
  out += "  \"k2\": " + detail::fmt_num(r.intrinsics.k2) + ",\n";
  out += "  \"rms_px\": " + detail::fmt_num(r.rms_reprojection) + ",\n";
  out += "  \"poses\": [";
  for (std::size_t i = 0; i < r.poses.size(); ++i) {
    const Vec3 rvec = rvec_from_rotation(r.poses[i].rotation);
    out += i == 0 ? "\n" : ",\n";
    out += "    {\"axis_angle\": " + detail::fmt_vec3(rvec) +
           ", \"t\": " + detail::fmt_vec3(r.poses[i].translation) + "}";
  }
  out += r.poses.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

inline CalibrationResult calibration_from_json(const std::string& bytes) {
  const nlohmann::json j = detail::parse_json(bytes, "calibration");
  CalibrationResult r;
  r.intrinsics.fx = detail::field(j, "fx").get<double>();
  r.intrinsics.fy = detail::field(j, "fy").get<double>();
  r.intrinsics.cx = detail::field(j, "cx").get<double>();
  r.intrinsics.cy = detail::field(j, "cy").get<double>();
  r.intrinsics.k1 = detail::field(j, "k1").get<double>();
  r.intrinsics.k2 = detail::field(j, "k2").get<double>();
  r.rms_reprojection = detail::field(j, "rms_px").get<double>();
  for (const nlohmann::json& p : detail::field(j, "poses")) {
    RigidTransform pose;
    pose.rotation = rotation_from_rvec(detail::vec3_of(p, "axis_angle"));
    pose.translation = detail::vec3_of(p, "t");
    r.poses.push_back(pose);
  }
  return r;
}

inline std::string plane_to_json(const PlaneFit& fit) {
  return "{\n  \"normal\": " + detail::fmt_vec3(fit.plane.normal) +
         ",\n  \"offset\": " + detail::fmt_num(fit.plane.offset) +
         ",\n  \"rms_mm\": " + detail::fmt_num(fit.rms) + "\n}\n";
}

inline PlaneFit plane_from_json(const std::string& bytes) {
  const nlohmann::json j = detail::parse_json(bytes, "laser plane");
  PlaneFit fit;
  fit.plane.normal = detail::vec3_of(j, "normal");
  fit.plane.offset = detail::field(j, "offset").get<double>();
  fit.rms = detail::field(j, "rms_mm").get<double>();
  return fit;
}

inline std::string axis_to_json(const LineFit& fit) {
  return "{\n  \"point\": " + detail::fmt_vec3(fit.line.point) +
         ",\n  \"direction\": " + detail::fmt_vec3(fit.line.direction) +
         ",\n  \"rms_mm\": " + detail::fmt_num(fit.rms) + "\n}\n";
}

inline LineFit axis_from_json(const std::string& bytes) {
  const nlohmann::json j = detail::parse_json(bytes, "axis");
  LineFit fit;
  fit.line.point = detail::vec3_of(j, "point");
  fit.line.direction = detail::vec3_of(j, "direction");
  fit.rms = detail::field(j, "rms_mm").get<double>();
  return fit;
}

inline std::string ground_truth_to_json(const ScanGroundTruth& truth) {
  std::string surface;
  switch (truth.surface.kind) {
    case SurfaceKind::cylinder:
      surface = "{\"kind\": \"cylinder\", \"radius\": " + detail::fmt_num(truth.surface.radius) +
                ", \"height\": " + detail::fmt_num(truth.surface.height) + "}";
      break;
    case SurfaceKind::sphere:
      surface = "{\"kind\": \"sphere\", \"radius\": " + detail::fmt_num(truth.surface.radius) +
                ", \"center_offset\": " + detail::fmt_num(truth.surface.center_offset) + "}";
      break;
    case SurfaceKind::board:
      fail(errc::dimension_error, "ground truth for board surfaces is not serialized");
  }
  std::string out = "{\n";
  out += "  \"intrinsics\": {\"fx\": " + detail::fmt_num(truth.intrinsics.fx) +
         ", \"fy\": " + detail::fmt_num(truth.intrinsics.fy) +
         ", \"cx\": " + detail::fmt_num(truth.intrinsics.cx) +
         ", \"cy\": " + detail::fmt_num(truth.intrinsics.cy) +
         ", \"k1\": " + detail::fmt_num(truth.intrinsics.k1) +
         ", \"k2\": " + detail::fmt_num(truth.intrinsics.k2) + "},\n";
  out += "  \"plane\": {\"normal\": " + detail::fmt_vec3(truth.plane.normal) +
         ", \"offset\": " + detail::fmt_num(truth.plane.offset) + "},\n";
  out += "  \"axis\": {\"point\": " + detail::fmt_vec3(truth.axis.point) +
         ", \"direction\": " + detail::fmt_vec3(truth.axis.direction) + "},\n";
  out += "  \"surface\": " + surface + "\n}\n";
  return out;
}

inline ScanGroundTruth ground_truth_from_json(const std::string& bytes) {
  const nlohmann::json j = detail::parse_json(bytes, "ground truth");
  ScanGroundTruth truth;
  const nlohmann::json& k = detail::field(j, "intrinsics");
  truth.intrinsics.fx = detail::field(k, "fx").get<double>();
  truth.intrinsics.fy = detail::field(k, "fy").get<double>();
  truth.intrinsics.cx = detail::field(k, "cx").get<double>();
  truth.intrinsics.cy = detail::field(k, "cy").get<double>();
  truth.intrinsics.k1 = detail::field(k, "k1").get<double>();
  truth.intrinsics.k2 = detail::field(k, "k2").get<double>();
  const nlohmann::json& pl = detail::field(j, "plane");
  truth.plane.normal = detail::vec3_of(pl, "normal");
  truth.plane.offset = detail::field(pl, "offset").get<double>();
  const nlohmann::json& ax = detail::field(j, "axis");
  truth.axis.point = detail::vec3_of(ax, "point");
  truth.axis.direction = detail::vec3_of(ax, "direction");
  const nlohmann::json& s = detail::field(j, "surface");
  const std::string kind = detail::field(s, "kind").get<std::string>();
  if (kind == "cylinder") {
    truth.surface = SceneSurface::make_cylinder(detail::field(s, "radius").get<double>(),
                                                detail::field(s, "height").get<double>());
  } else if (kind == "sphere") {
    truth.surface = SceneSurface::make_sphere(detail::field(s, "radius").get<double>(),
                                              detail::field(s, "center_offset").get<double>());
  } else {
    fail(errc::parse_error, "unknown surface kind: " + kind);
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Scan session

struct SessionFrame {
  double angle = 0.0;  // radians in memory, degrees on disk
  std::string image_path;
};

struct ScanSession {
  std::string intrinsics_path;
  std::string laser_plane_path;
  std::string axis_path;
  std::vector<SessionFrame> frames;
  int threshold = 128;
  ScanDirection scan_direction = ScanDirection::rows;
};

/// Serialize the session. Paths are written as given (normally relative to
/// the session file); angles in degrees.
inline std::string session_to_json(const ScanSession& session) {
  nlohmann::json j;
  j["intrinsics_path"] = session.intrinsics_path;
  j["laser_plane_path"] = session.laser_plane_path;
  j["axis_path"] = session.axis_path;
  j["threshold"] = session.threshold;
  j["scan_direction"] = session.scan_direction == ScanDirection::rows ? "rows" : "columns";
  j["frames"] = nlohmann::json::array();
  for (const SessionFrame& f : session.frames)
    j["frames"].push_back({{"angle_deg", f.angle * 180.0 / std::numbers::pi},
                           {"image_path", f.image_path}});
  return j.dump(2) + "\n";
}

/// Load and validate a session file. Relative paths resolve against the
/// session file's directory and must exist; angles must increase strictly.
inline ScanSession load_session(const std::string& path) {
  const nlohmann::json j = detail::parse_json(read_file(path), "session");
  ScanSession s;

  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.string();
    return (std::filesystem::path(path).parent_path() / fp).string();
  };
  const auto require_exists = [&](const std::string& p) {
    if (!std::filesystem::exists(p)) fail(errc::io_error, "referenced file missing: " + p);
    return p;
  };

  s.intrinsics_path =
      require_exists(resolve(detail::field(j, "intrinsics_path").get<std::string>()));
  s.laser_plane_path =
      require_exists(resolve(detail::field(j, "laser_plane_path").get<std::string>()));
  s.axis_path = require_exists(resolve(detail::field(j, "axis_path").get<std::string>()));
  s.threshold = detail::field(j, "threshold").get<int>();
  const std::string dir = detail::field(j, "scan_direction").get<std::string>();
  if (dir == "rows")
    s.scan_direction = ScanDirection::rows;
  else if (dir == "columns")
    s.scan_direction = ScanDirection::columns;
  else
    fail(errc::parse_error, "scan_direction must be rows or columns");

  const nlohmann::json& frames = detail::field(j, "frames");
  if (!frames.is_array() || frames.empty())
    fail(errc::parse_error, "frames must be a nonempty array");
  double prev = -1e300;
  for (const nlohmann::json& f : frames) {
    const double deg = detail::field(f, "angle_deg").get<double>();
    if (deg <= prev) fail(errc::bad_angles, "frame angles must increase strictly");
    prev = deg;
    s.frames.push_back({deg * std::numbers::pi / 180.0,
                        require_exists(resolve(detail::field(f, "image_path").get<std::string>()))});
  }
  return s;
}

}  // namespace laserforge
