#pragma once

#include <cmath>

#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"

namespace laserforge {

/// Pinhole parameters with two-term radial distortion and zero skew.
/// u = fx * x' + cx, v = fy * y' + cy on distorted normalized coordinates.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && std::isfinite(cx) && std::isfinite(cy) &&
           std::isfinite(k1) && std::isfinite(k2);
  }
};

/// Subpixel image location; u rightward, v downward.
struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

/// Project a camera-frame point to a pixel, applying radial distortion.
inline PixelPoint project_point(const CameraIntrinsics& k, const Point3& p) {
  if (p.z <= 1e-9) fail(errc::behind_camera, "project_point: point at or behind the camera");
  const double x = p.x / p.z;
  const double y = p.y / p.z;
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
  return {k.fx * x * radial + k.cx, k.fy * y * radial + k.cy};
}

/// Invert the radial model on normalized coordinates. The distorted radius is
/// refined iteratively (10 iterations, Newton updates on the scalar radius);
/// with k1 = k2 = 0 the pixel passes through unchanged.
inline PixelPoint undistort_pixel(const CameraIntrinsics& k, const PixelPoint& p) {
  if (k.k1 == 0.0 && k.k2 == 0.0) return p;
  const double xd = (p.u - k.cx) / k.fx;
  const double yd = (p.v - k.cy) / k.fy;
  const double rd = std::sqrt(xd * xd + yd * yd);
  if (rd == 0.0) return p;  // the principal point is a fixed point

  const double bound = 10.0 * std::max(1.0, std::sqrt(k.cx * k.cx + k.cy * k.cy) /
                                                std::min(k.fx, k.fy));
  // Solve rd = r * (1 + k1 r^2 + k2 r^4) for the undistorted radius r.
  double r = rd;
  for (int i = 0; i < 10; ++i) {
    const double r2 = r * r;
    const double f = r * (1.0 + k.k1 * r2 + k.k2 * r2 * r2) - rd;
    const double df = 1.0 + 3.0 * k.k1 * r2 + 5.0 * k.k2 * r2 * r2;
    if (std::fabs(df) < 1e-12) break;
    r -= f / df;
    if (!std::isfinite(r) || std::fabs(r) > bound)
      fail(errc::diverged, "undistort_pixel: iteration diverged");
  }
  const double scale = r / rd;
  return {k.cx + k.fx * xd * scale, k.cy + k.fy * yd * scale};
}

/// Cast the camera ray through an undistorted pixel. The ray is anchored at
/// the camera center with a forward (z > 0) unit direction.
inline Line3 pixel_to_ray(const CameraIntrinsics& k, const PixelPoint& p) {
  const Vec3 dir{(p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0};
  return Line3{Point3{0.0, 0.0, 0.0}, normalized(dir)};
}

}  // namespace laserforge
