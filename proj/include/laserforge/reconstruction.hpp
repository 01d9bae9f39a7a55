#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "laserforge/camera.hpp"
#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"
#include "laserforge/laser.hpp"
#include "laserforge/simulator.hpp"

namespace laserforge {

/// Merged scan result in the turntable frame at angle zero (camera-aligned
/// coordinates anchored at the axis). Colors are an optional passthrough for
/// external tooling.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<std::array<std::uint8_t, 3>> colors;

  bool valid() const {
    if (!colors.empty() && colors.size() != points.size()) return false;
    for (const Point3& p : points)
      if (!finite(p)) return false;
    return true;
  }
};

/// Stripe of one scan frame, still in pixel coordinates.
struct FrameMeasurements {
  std::size_t index = 0;
  double angle = 0.0;  // radians
  StripeExtraction stripe;
};

/// Camera-frame points of one frame plus how many pixels failed to
/// triangulate.
struct TriangulatedFrame {
  std::size_t index = 0;
  double angle = 0.0;
  std::vector<Point3> points;
  std::size_t dropped = 0;
};

/// Intersect each stripe pixel's camera ray with the calibrated laser sheet.
/// Scan data is noisy, so pixels whose ray misses the sheet (parallel or
/// behind the camera) are dropped and counted rather than failing the frame;
/// the stripe must already be distortion-free (undistort_stripe).
inline TriangulatedFrame triangulate_frame(const StripeExtraction& stripe,
                                           const CameraIntrinsics& k, const Plane& laser_plane) {
  TriangulatedFrame out;
  out.points.reserve(stripe.points.size());
  for (const PixelPoint& p : stripe.points) {
    const Line3 ray = pixel_to_ray(k, p);
    try {
      out.points.push_back(ray_plane_intersect(ray.point, ray.direction, laser_plane));
    } catch (const Error& e) {
      if (e.code() == errc::parallel_ray || e.code() == errc::behind_origin)
        ++out.dropped;
      else
        throw;
    }
  }
  return out;
}

/// Undo each frame's turntable rotation (the table turned the object by
/// +angle, so points rotate back by -angle) and concatenate in frame order,
/// row order within a frame.
inline PointCloud merge_frames(std::span<const TriangulatedFrame> frames, const Line3& axis) {
  PointCloud cloud;
  std::size_t total = 0;
  for (const TriangulatedFrame& f : frames) total += f.points.size();
  cloud.points.reserve(total);
  for (const TriangulatedFrame& f : frames)
    for (const Point3& p : f.points)
      cloud.points.push_back(rotate_about_axis(p, axis, -f.angle));
  return cloud;
}

struct CloudStats {
  double rms_mm = 0.0;
  double max_mm = 0.0;
  std::size_t n = 0;
};

/// Unsigned distance from a point to an analytic surface of revolution.
/// Cylinder: radial error on the side wall within the height span, cap/rim
/// distance beyond it. Sphere: radial error about the center.
inline double surface_distance(const SceneSurface& surface, const Line3& axis, const Point3& p) {
  switch (surface.kind) {
    case SurfaceKind::cylinder: {
      const double s = axis.coordinate_of(p);
      const double rho = axis.distance_to(p);
      const double h2 = surface.height / 2.0;
      if (std::fabs(s) <= h2) return std::fabs(rho - surface.radius);
      const double ds = std::fabs(s) - h2;
      if (rho <= surface.radius) return ds;
      return std::hypot(ds, rho - surface.radius);
    }
    case SurfaceKind::sphere: {
      const Point3 c = axis.point + surface.center_offset * axis.direction;
      return std::fabs(norm(p - c) - surface.radius);
    }
    case SurfaceKind::board:
      break;
  }
  fail(errc::dimension_error, "surface_distance: no analytic distance for this surface");
}

/// Accuracy of a cloud against the ground-truth surface: RMS and max of
/// per-point unsigned distances.
inline CloudStats evaluate_cloud(const PointCloud& cloud, const SceneSurface& truth_surface,
                                 const Line3& truth_axis) {
  if (cloud.points.empty()) fail(errc::empty_cloud, "evaluate_cloud: cloud is empty");
  CloudStats stats;
  stats.n = cloud.points.size();
  double ss = 0.0;
  for (const Point3& p : cloud.points) {
    const double d = surface_distance(truth_surface, truth_axis, p);
    ss += d * d;
    stats.max_mm = std::max(stats.max_mm, d);
  }
  stats.rms_mm = std::sqrt(ss / static_cast<double>(stats.n));
  return stats;
}

}  // namespace laserforge
