#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "laserforge/calibration.hpp"
#include "laserforge/camera.hpp"
#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"
#include "laserforge/image.hpp"

namespace laserforge {

enum class SurfaceKind { cylinder, sphere, board };

/// Analytic scan target on the virtual turntable. Cylinders and spheres are
/// bodies of revolution about the turntable axis (the cylinder spans
/// [-height/2, height/2] along it; the sphere center sits center_offset along
/// it); a board is a posed chessboard plane patch.
struct SceneSurface {
  SurfaceKind kind = SurfaceKind::cylinder;
  double radius = 30.0;        // mm (cylinder, sphere)
  double height = 80.0;        // mm (cylinder)
  double center_offset = 0.0;  // mm along the axis (sphere)
  ChessboardSpec board;        // board only
  RigidTransform board_pose;   // board -> camera, board only

  static SceneSurface make_cylinder(double radius, double height) {
    if (!(radius > 0.0) || !(height > 0.0))
      fail(errc::dimension_error, "cylinder needs positive radius and height");
    SceneSurface s;
    s.kind = SurfaceKind::cylinder;
    s.radius = radius;
    s.height = height;
    return s;
  }

  static SceneSurface make_sphere(double radius, double center_offset = 0.0) {
    if (!(radius > 0.0)) fail(errc::dimension_error, "sphere needs positive radius");
    SceneSurface s;
    s.kind = SurfaceKind::sphere;
    s.radius = radius;
    s.center_offset = center_offset;
    return s;
  }

  static SceneSurface make_board(const ChessboardSpec& spec, const RigidTransform& pose) {
    if (!spec.valid()) fail(errc::dimension_error, "board surface needs a valid spec");
    SceneSurface s;
    s.kind = SurfaceKind::board;
    s.board = spec;
    s.board_pose = pose;
    return s;
  }
};

/// Ground-truth description of the virtual rig: camera, laser sheet and
/// turntable axis in camera coordinates, plus the noise/seed policy every
/// renderer draws from.
struct RigConfig {
  CameraIntrinsics intrinsics;
  Plane laser_plane;
  Line3 axis;
  int image_width = 640;
  int image_height = 480;
  double noise_sigma_px = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (image_width < 16 || image_height < 16)
      fail(errc::bad_dimensions, "rig image size must be at least 16x16");
    if (!(noise_sigma_px >= 0.0)) fail(errc::dimension_error, "noise sigma must be >= 0");
    if (!intrinsics.valid()) fail(errc::dimension_error, "rig intrinsics invalid");
  }
};

struct ScanFrame {
  std::size_t index = 0;
  double angle = 0.0;  // radians, relative to frame 0
  GrayImage image;
};

struct ScanGroundTruth {
  SceneSurface surface;
  Plane plane;
  Line3 axis;
  CameraIntrinsics intrinsics;
};

struct SimulatedScan {
  std::vector<ScanFrame> frames;
  ScanGroundTruth truth;
};

struct RenderParams {
  int samples = 400;            // points per laser curve
  double stripe_sigma_px = 1.5; // cross-section of the rendered stripe
  int peak = 255;               // stripe peak intensity
};

/// The desk-scale rig all closed-loop scenarios use: 640x480 camera at
/// fx = fy = 800, turntable axis vertical 400 mm out, laser sheet containing
/// the axis and tilted 30 degrees about it.
inline RigConfig reference_rig(double noise_sigma_px = 0.0, std::uint64_t seed = 0) {
  RigConfig rig;
  rig.intrinsics = {800.0, 800.0, 320.0, 240.0, 0.0, 0.0};
  const double c30 = std::cos(std::numbers::pi / 6.0);
  const double s30 = std::sin(std::numbers::pi / 6.0);
  rig.laser_plane = Plane::from_normal_offset({c30, 0.0, s30}, s30 * 400.0);
  rig.axis = Line3{{0.0, 0.0, 400.0}, {0.0, 1.0, 0.0}};
  rig.noise_sigma_px = noise_sigma_px;
  rig.seed = seed;
  return rig;
}

/// Deterministic spread of board poses for calibration views: varied tilts,
/// spins and depths, scaled with the board so the target roughly fills the
/// reference camera's frame.
inline std::vector<RigidTransform> synthetic_board_poses(int count, const ChessboardSpec& spec) {
  if (count < 1) fail(errc::dimension_error, "synthetic_board_poses: count must be >= 1");
  const double unit = spec.square_size / 3.0;
  const Vec3 center{(spec.inner_cols - 1) * spec.square_size / 2.0,
                    (spec.inner_rows - 1) * spec.square_size / 2.0, 0.0};
  std::vector<RigidTransform> poses;
  poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double rx = 0.35 * std::sin(2.4 * i + 0.8);
    const double ry = 0.35 * std::cos(1.7 * i + 0.4);
    const double rz = 0.6 * i;
    const Mat3 r = axis_angle_matrix({1.0, 0.0, 0.0}, rx) *
                   axis_angle_matrix({0.0, 1.0, 0.0}, ry) *
                   axis_angle_matrix({0.0, 0.0, 1.0}, rz);
    const Vec3 target{2.0 * std::sin(1.3 * i) * unit, 1.5 * std::cos(0.9 * i) * unit,
                      (55.0 + 7.0 * (i % 5)) * unit};
    poses.push_back({r, target - r * center});
  }
  return poses;
}

/// Board pose whose plane contains the turntable axis, with the board's
/// vertical edge along it: the laser sheet then paints the axis itself onto
/// the board, which is exactly the axis-calibration setup.
inline RigidTransform axis_board_pose(const ChessboardSpec& spec, const Line3& axis,
                                      double tilt = 0.3) {
  const Vec3 r2 = axis.direction;
  // r3 lies in the plane orthogonal to the axis, tilted off the viewing
  // direction so the board is neither edge-on nor parallel to the sheet.
  Vec3 view{0.0, 0.0, 1.0};
  if (norm(cross(r2, view)) < 1e-6) view = {1.0, 0.0, 0.0};
  const Vec3 toward = normalized(cross(cross(r2, view), r2));
  const Vec3 side = cross(r2, toward);
  const Vec3 r3 = normalized(std::cos(tilt) * toward + std::sin(tilt) * side);
  const Vec3 r1 = cross(r2, r3);
  Mat3 r;
  r(0, 0) = r1.x;
  r(1, 0) = r1.y;
  r(2, 0) = r1.z;
  r(0, 1) = r2.x;
  r(1, 1) = r2.y;
  r(2, 1) = r2.z;
  r(0, 2) = r3.x;
  r(1, 2) = r3.y;
  r(2, 2) = r3.z;
  const Vec3 center{(spec.inner_cols - 1) * spec.square_size / 2.0,
                    (spec.inner_rows - 1) * spec.square_size / 2.0, 0.0};
  return {r, axis.point - r * center};
}

/// Frontal-ish board at depth z tilted about the camera's y axis; used in
/// pairs at different depths for laser-plane calibration.
inline RigidTransform laser_board_pose(const ChessboardSpec& spec, double z, double tilt_y) {
  const Mat3 r = axis_angle_matrix({0.0, 1.0, 0.0}, tilt_y);
  const Vec3 center{(spec.inner_cols - 1) * spec.square_size / 2.0,
                    (spec.inner_rows - 1) * spec.square_size / 2.0, 0.0};
  return {r, Vec3{0.0, 0.0, z} - r * center};
}

/// Project the board corners under each pose and add per-coordinate Gaussian
/// noise of rig.noise_sigma_px (seeded; zero sigma draws nothing). The true
/// projections must land inside the image.
inline std::vector<ViewObservation> render_corner_observations(
    const RigConfig& rig, const ChessboardSpec& spec, std::span<const RigidTransform> poses) {
  rig.validate();
  const std::vector<Point3> object = board_object_points(spec);
  std::mt19937_64 rng(rig.seed);
  std::normal_distribution<double> gauss(0.0, rig.noise_sigma_px > 0.0 ? rig.noise_sigma_px : 1.0);

  std::vector<ViewObservation> views;
  views.reserve(poses.size());
  for (std::size_t v = 0; v < poses.size(); ++v) {
    ViewObservation view;
    view.corners.reserve(object.size());
    for (std::size_t c = 0; c < object.size(); ++c) {
      PixelPoint px = project_point(rig.intrinsics, poses[v].apply(object[c]));
      if (px.u < 0.0 || px.u > rig.image_width - 1.0 || px.v < 0.0 ||
          px.v > rig.image_height - 1.0)
        fail(errc::out_of_frame, "corner " + std::to_string(c) + " of view " +
                                     std::to_string(v) + " projects outside the image");
      if (rig.noise_sigma_px > 0.0) {
        px.u += gauss(rng);
        px.v += gauss(rng);
      }
      view.corners.push_back(px);
    }
    views.push_back(std::move(view));
  }
  return views;
}

namespace detail {

inline Vec3 orthonormal_to(const Vec3& d) {
  const Vec3 ref = std::fabs(d.x) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  return normalized(cross(ref, d));
}

// Thin out `kept` to at most `samples` evenly spaced entries, preserving order.
inline std::vector<Point3> downselect(std::vector<Point3> kept, int samples) {
  if (static_cast<int>(kept.size()) <= samples) return kept;
  std::vector<Point3> out;
  out.reserve(samples);
  if (samples == 1) {
    out.push_back(kept[kept.size() / 2]);
    return out;
  }
  const double step = static_cast<double>(kept.size() - 1) / (samples - 1);
  for (int i = 0; i < samples; ++i)
    out.push_back(kept[static_cast<std::size_t>(std::lround(i * step))]);
  return out;
}

}  // namespace detail

/// Points of (surface rotated by theta about the axis) ∩ laser plane, camera
/// facing side only, ordered by coordinate along the axis. Empty when the
/// sheet misses the surface. When the sheet is parallel to a cylinder's axis
/// the section degenerates to straight lines; if both lines face the camera
/// only the better-facing one is emitted.
inline std::vector<Point3> surface_laser_curve(const SceneSurface& surface, double theta,
                                               const Plane& plane, const Line3& axis,
                                               int samples = 400) {
  if (samples < 1) fail(errc::dimension_error, "surface_laser_curve: samples must be >= 1");
  const Vec3 d = axis.direction;
  const Point3 a = axis.point;
  const Vec3 n = plane.normal;
  const double delta = plane.offset;

  if (surface.kind == SurfaceKind::cylinder) {
    const Vec3 e1 = detail::orthonormal_to(d);
    const Vec3 e2 = cross(d, e1);
    const double nd = dot(n, d);
    const double va = dot(n, e1), vb = dot(n, e2);
    const double c0 = delta - dot(n, a);
    const double r = surface.radius;
    const double h2 = surface.height / 2.0;

    if (std::fabs(nd) <= 1e-9) {
      // Sheet parallel to the axis: the section is up to two vertical lines.
      const double amp = r * std::hypot(va, vb);
      if (amp < 1e-12 || std::fabs(c0) > amp) return {};
      const double phi0 = std::atan2(vb, va);
      const double dphi = std::acos(std::clamp(c0 / amp, -1.0, 1.0));
      double best_facing = 0.0;
      Vec3 best_radial{};
      bool found = false;
      for (const double phi : {phi0 + dphi, phi0 - dphi}) {
        const Vec3 radial = std::cos(phi) * e1 + std::sin(phi) * e2;
        const double facing = dot(radial, a) + r;  // <0 iff the line faces the camera
        if (facing < 0.0 && (!found || facing < best_facing)) {
          best_facing = facing;
          best_radial = radial;
          found = true;
        }
      }
      if (!found) return {};
      std::vector<Point3> out;
      out.reserve(samples);
      for (int i = 0; i < samples; ++i) {
        const double s = samples == 1 ? 0.0 : -h2 + surface.height * i / (samples - 1.0);
        out.push_back(a + s * d + r * best_radial);
      }
      return out;
    }

    // Oblique sheet: ellipse parameterized by the angle around the axis.
    const int grid = std::max(16 * samples, 2048);
    std::vector<Point3> kept;
    for (int i = 0; i < grid; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / grid;
      const Vec3 radial = std::cos(phi) * e1 + std::sin(phi) * e2;
      const double s = (c0 - r * (va * std::cos(phi) + vb * std::sin(phi))) / nd;
      if (std::fabs(s) > h2) continue;
      if (dot(radial, a + s * d) + r >= 0.0) continue;  // back side
      kept.push_back(a + s * d + r * radial);
    }
    std::stable_sort(kept.begin(), kept.end(), [&](const Point3& p, const Point3& q) {
      return dot(p - a, d) < dot(q - a, d);
    });
    return detail::downselect(std::move(kept), samples);
  }

  if (surface.kind == SurfaceKind::sphere) {
    const Point3 c = a + surface.center_offset * d;
    const double h0 = dot(n, c) - delta;
    const double r = surface.radius;
    if (std::fabs(h0) > r) return {};
    const Point3 cc = c - h0 * n;
    const double rc = std::sqrt(std::max(0.0, r * r - h0 * h0));
    const Vec3 f1 = detail::orthonormal_to(n);
    const Vec3 f2 = cross(n, f1);
    const int grid = std::max(16 * samples, 2048);
    std::vector<Point3> kept;
    for (int i = 0; i < grid; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / grid;
      const Point3 p = cc + rc * std::cos(phi) * f1 + rc * std::sin(phi) * f2;
      const Vec3 outward = (p - c) / r;
      if (dot(outward, p) >= 0.0) continue;
      kept.push_back(p);
    }
    std::stable_sort(kept.begin(), kept.end(), [&](const Point3& p, const Point3& q) {
      return dot(p - a, d) < dot(q - a, d);
    });
    return detail::downselect(std::move(kept), samples);
  }

  // Board: rotate the posed plane patch about the turntable axis, then cut it
  // with the sheet; the section is a clipped straight segment.
  const RigidTransform turn{axis_angle_matrix(d, theta),
                            a - axis_angle_matrix(d, theta) * a};
  const RigidTransform pose = compose(turn, surface.board_pose);
  const Plane bp = board_plane(pose);
  const Vec3 u = cross(bp.normal, n);
  if (norm(u) < 1e-9) return {};  // board parallel to the sheet
  const Vec3 dir = normalized(u);
  const Point3 p0 =
      (bp.offset * cross(n, u) + delta * cross(u, bp.normal)) / dot(u, u);

  // Clip against the physical board: corners plus a one-square margin.
  const RigidTransform inv = pose.inverse();
  const Point3 q0 = inv.apply(p0);
  const Vec3 qd = inv.rotation * dir;
  const double s = surface.board.square_size;
  double tmin = -1e300, tmax = 1e300;
  const auto clip = [&](double origin, double step, double lo, double hi) {
    if (std::fabs(step) < 1e-12) {
      if (origin < lo || origin > hi) tmin = 1.0, tmax = 0.0;
      return;
    }
    double t0 = (lo - origin) / step, t1 = (hi - origin) / step;
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  };
  clip(q0.x, qd.x, -s, surface.board.inner_cols * s);
  clip(q0.y, qd.y, -s, surface.board.inner_rows * s);
  if (tmin > tmax) return {};

  std::vector<Point3> out;
  out.reserve(samples);
  for (int i = 0; i < samples; ++i) {
    const double t =
        samples == 1 ? (tmin + tmax) / 2.0 : tmin + (tmax - tmin) * i / (samples - 1.0);
    out.push_back(p0 + t * dir);
  }
  if (out.size() > 1 && dot(out.back() - a, d) < dot(out.front() - a, d))
    std::reverse(out.begin(), out.end());
  return out;
}

namespace detail {

// Drop a Gaussian cross-section onto one image row, keeping the max where
// profiles overlap.
inline void splat_row(std::vector<double>& level, int width, int row, double u, double sigma,
                      int peak) {
  const int lo = std::max(0, static_cast<int>(std::ceil(u - 5.0 * sigma)));
  const int hi = std::min(width - 1, static_cast<int>(std::floor(u + 5.0 * sigma)));
  for (int x = lo; x <= hi; ++x) {
    const double dx = x - u;
    const double val = peak * std::exp(-dx * dx / (2.0 * sigma * sigma));
    double& cell = level[static_cast<std::size_t>(row) * width + x];
    cell = std::max(cell, val);
  }
}

}  // namespace detail

/// Subpixel row centers of the projected curve: consecutive projected points
/// are joined by straight segments and evaluated at every integer row they
/// cross. A single-point curve lights its nearest row. Also the analytic
/// stand-in for rendering: these (u, row) pairs are what a perfect extractor
/// would recover.
inline std::vector<PixelPoint> project_curve_rows(const CameraIntrinsics& k,
                                                  std::span<const Point3> curve) {
  std::vector<PixelPoint> projected;
  projected.reserve(curve.size());
  for (const Point3& p : curve) projected.push_back(project_point(k, p));

  std::vector<PixelPoint> rows;
  if (projected.size() == 1) {
    rows.push_back({projected[0].u, static_cast<double>(std::lround(projected[0].v))});
    return rows;
  }
  bool have_last = false;
  int last_row = 0;
  for (std::size_t i = 0; i + 1 < projected.size(); ++i) {
    const double va = projected[i].v, vb = projected[i + 1].v;
    if (va == vb) continue;
    const int rlo = static_cast<int>(std::ceil(std::min(va, vb)));
    const int rhi = static_cast<int>(std::floor(std::max(va, vb)));
    const bool ascending = vb > va;
    for (int row = ascending ? rlo : rhi; ascending ? row <= rhi : row >= rlo;
         ascending ? ++row : --row) {
      if (have_last && row == last_row) continue;  // joint shared by both segments
      const double alpha = (row - va) / (vb - va);
      rows.push_back({projected[i].u + alpha * (projected[i + 1].u - projected[i].u),
                      static_cast<double>(row)});
      last_row = row;
      have_last = true;
    }
  }
  return rows;
}

/// Render the laser curve into a dark frame: each integer image row crossed
/// by the projected curve gets a Gaussian stripe cross-section (std dev
/// stripe_sigma_px, height `peak`), then optional additive Gaussian pixel
/// noise of 4 * rig.noise_sigma_px intensity levels, seeded from rig.seed.
inline GrayImage render_laser_image(const RigConfig& rig, std::span<const Point3> curve,
                                    double stripe_sigma_px = 1.5, int peak = 255) {
  rig.validate();
  if (!(stripe_sigma_px >= 0.5 && stripe_sigma_px <= 3.0))
    fail(errc::dimension_error, "render_laser_image: stripe sigma must be in [0.5, 3]");
  if (peak < 1 || peak > 255)
    fail(errc::dimension_error, "render_laser_image: peak must be in [1, 255]");

  GrayImage img(rig.image_width, rig.image_height, 0);
  if (curve.empty()) return img;

  for (const Point3& p : curve) {
    const PixelPoint px = project_point(rig.intrinsics, p);
    if (px.u < 0.0 || px.u > rig.image_width - 1.0 || px.v < 0.0 ||
        px.v > rig.image_height - 1.0)
      fail(errc::out_of_frame, "render_laser_image: curve leaves the image");
  }

  const std::vector<PixelPoint> rows = project_curve_rows(rig.intrinsics, curve);
  std::vector<double> level(static_cast<std::size_t>(rig.image_width) * rig.image_height, 0.0);
  for (const PixelPoint& p : rows)
    detail::splat_row(level, rig.image_width, static_cast<int>(p.v), p.u, stripe_sigma_px, peak);

  for (std::size_t i = 0; i < level.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(level[i]), 0, 255));

  if (rig.noise_sigma_px > 0.0) {
    std::mt19937_64 rng(rig.seed);
    std::normal_distribution<double> gauss(0.0, 4.0 * rig.noise_sigma_px);
    for (std::uint8_t& px : img.pixels)
      px = static_cast<std::uint8_t>(std::clamp<long>(std::lround(px + gauss(rng)), 0, 255));
  }
  return img;
}

/// Full turntable scan: frame i rotates the object by i * 2pi / n about the
/// axis, computes its laser section and renders it. Each frame's pixel noise
/// uses the substream seed + i, so frames are independent and the whole scan
/// is reproducible.
inline SimulatedScan simulate_scan(const RigConfig& rig, const SceneSurface& surface,
                                   int n_frames, const RenderParams& params = {}) {
  rig.validate();
  if (n_frames < 1) fail(errc::dimension_error, "simulate_scan: needs at least one frame");

  SimulatedScan scan;
  scan.frames.reserve(n_frames);
  for (int i = 0; i < n_frames; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / n_frames;
    const std::vector<Point3> curve =
        surface_laser_curve(surface, theta, rig.laser_plane, rig.axis, params.samples);
    RigConfig frame_rig = rig;
    frame_rig.seed = rig.seed + static_cast<std::uint64_t>(i);
    scan.frames.push_back(
        {static_cast<std::size_t>(i), theta,
         render_laser_image(frame_rig, curve, params.stripe_sigma_px, params.peak)});
  }
  scan.truth = {surface, rig.laser_plane, rig.axis, rig.intrinsics};
  return scan;
}

}  // namespace laserforge
