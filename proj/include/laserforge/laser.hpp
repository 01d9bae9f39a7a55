#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "laserforge/camera.hpp"
#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"
#include "laserforge/image.hpp"

namespace laserforge {

/// Scan orientation for stripe extraction: per-row for predominantly
/// vertical stripes (the default rig geometry), per-column for horizontal.
enum class ScanDirection { rows, columns };

/// Subpixel stripe samples: one point per scan line that carries signal.
/// Row scans emit (u = centroid, v = row); column scans emit
/// (u = column, v = centroid). Scan-line indices are strictly increasing.
struct StripeExtraction {
  std::vector<PixelPoint> points;
  int threshold_used = 0;
};

namespace detail {

// Weighted centroid of the brightest run of at-or-above-threshold pixels
// along one scan line; returns false when the line is all background.
template <typename At>
bool scan_line_centroid(At at, int length, int threshold, double* centroid) {
  long best_total = -1;
  int best_begin = 0, best_end = 0;
  int i = 0;
  while (i < length) {
    if (at(i) < threshold) {
      ++i;
      continue;
    }
    const int begin = i;
    long total = 0;
    while (i < length && at(i) >= threshold) {
      total += at(i);
      ++i;
    }
    if (total > best_total) {  // exact tie keeps the earlier (leftmost) run
      best_total = total;
      best_begin = begin;
      best_end = i;
    }
  }
  if (best_total < 0) return false;

  double wsum = 0.0, wxsum = 0.0;
  for (int x = best_begin; x < best_end; ++x) {
    const double w = at(x) - threshold + 1.0;  // >= 1, so the run never cancels
    wsum += w;
    wxsum += w * x;
  }
  *centroid = wxsum / wsum;
  return true;
}

}  // namespace detail

/// Locate the laser stripe with subpixel precision: per scan line, pixels at
/// or above the threshold form candidate runs, the run with the greatest
/// total intensity wins, and its intensity-weighted centroid (weights =
/// intensity - threshold + 1) is the stripe coordinate. Lines without
/// candidates are omitted; an empty extraction is a valid result.
inline StripeExtraction extract_laser_points(const GrayImage& img, int threshold,
                                             ScanDirection direction = ScanDirection::rows) {
  if (threshold <= 0 || threshold >= 255)
    fail(errc::dimension_error, "extract_laser_points: threshold must be in (0, 255)");

  StripeExtraction out;
  out.threshold_used = threshold;
  double c = 0.0;
  if (direction == ScanDirection::rows) {
    for (int v = 0; v < img.height; ++v) {
      if (detail::scan_line_centroid([&](int x) { return img.at(x, v); }, img.width, threshold,
                                     &c))
        out.points.push_back({c, static_cast<double>(v)});
    }
  } else {
    for (int u = 0; u < img.width; ++u) {
      if (detail::scan_line_centroid([&](int y) { return img.at(u, y); }, img.height, threshold,
                                     &c))
        out.points.push_back({static_cast<double>(u), c});
    }
  }
  return out;
}

/// Undo radial distortion on every stripe sample.
inline StripeExtraction undistort_stripe(const CameraIntrinsics& k, const StripeExtraction& s) {
  StripeExtraction out;
  out.threshold_used = s.threshold_used;
  out.points.reserve(s.points.size());
  for (const PixelPoint& p : s.points) out.points.push_back(undistort_pixel(k, p));
  return out;
}

/// Cast each stripe pixel through the camera and intersect with a known
/// reference plane (a calibration board). Pixels must already be
/// distortion-free. Any Parallel/BehindOrigin ray fails the whole lift:
/// calibration inputs must be clean.
inline std::vector<Point3> lift_stripe_to_plane(const StripeExtraction& stripe,
                                                const CameraIntrinsics& k,
                                                const Plane& reference) {
  std::vector<Point3> out;
  out.reserve(stripe.points.size());
  for (const PixelPoint& p : stripe.points) {
    const Line3 ray = pixel_to_ray(k, p);
    out.push_back(ray_plane_intersect(ray.point, ray.direction, reference));
  }
  return out;
}

/// Fit the laser sheet to stripe points lifted from two or more board poses.
/// A single pose is rejected up front: one stripe is a 3D line, which can
/// never pin down a plane.
inline PlaneFit calibrate_laser_plane(std::span<const std::vector<Point3>> lifted_sets) {
  if (lifted_sets.size() < 2)
    fail(errc::insufficient_views, "calibrate_laser_plane: needs stripes from >= 2 board poses");
  std::vector<Point3> all;
  for (const auto& set : lifted_sets) all.insert(all.end(), set.begin(), set.end());
  return fit_plane(all);
}

/// Fit the turntable axis to lifted points of the vertical beam observed on
/// a board through the turntable center.
inline LineFit calibrate_rotation_axis(std::span<const Point3> lifted_axis_points) {
  return fit_line(lifted_axis_points);
}

}  // namespace laserforge
