#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "laserforge/error.hpp"
#include "laserforge/numerics.hpp"

namespace laserforge {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

/// A 3D position in millimeters; camera frame unless stated otherwise.
using Point3 = Vec3;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
inline Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
inline Vec3 operator*(const Vec3& v, double s) { return s * v; }
inline Vec3 operator/(const Vec3& v, double s) { return {v.x / s, v.y / s, v.z / s}; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }
inline bool finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

struct Mat3 {
  // Row-major.
  std::array<double, 9> a{};

  static Mat3 identity() {
    Mat3 m;
    m(0, 0) = m(1, 1) = m(2, 2) = 1.0;
    return m;
  }

  double& operator()(int r, int c) { return a[3 * r + c]; }
  double operator()(int r, int c) const { return a[3 * r + c]; }
};

inline Mat3 operator*(const Mat3& m, const Mat3& n) {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m(r, k) * n(k, c);
      out(r, c) = s;
    }
  return out;
}

inline Vec3 operator*(const Mat3& m, const Vec3& v) {
  return {m(0, 0) * v.x + m(0, 1) * v.y + m(0, 2) * v.z,
          m(1, 0) * v.x + m(1, 1) * v.y + m(1, 2) * v.z,
          m(2, 0) * v.x + m(2, 1) * v.y + m(2, 2) * v.z};
}

inline Mat3 transpose(const Mat3& m) {
  Mat3 t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t(r, c) = m(c, r);
  return t;
}

inline double det(const Mat3& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

/// Plane {p : normal . p = offset} with unit normal and offset >= 0 (mm).
struct Plane {
  Vec3 normal{0.0, 0.0, 1.0};
  double offset = 0.0;

  /// Normalizes and flips so the stored offset is nonnegative.
  static Plane from_normal_offset(const Vec3& n, double d) {
    const double len = norm(n);
    Plane p{n / len, d / len};
    if (p.offset < 0.0) {
      p.normal = -p.normal;
      p.offset = -p.offset;
    }
    return p;
  }

  double signed_distance(const Point3& p) const { return dot(normal, p) - offset; }
};

/// Line anchored at its point closest to the origin, with unit direction.
/// Fits canonicalize the direction sign (first component above 1e-9 in
/// magnitude is positive); camera rays keep their forward direction instead.
struct Line3 {
  Point3 point{};
  Vec3 direction{0.0, 0.0, 1.0};

  static Line3 canonical(const Point3& any_point, const Vec3& dir) {
    Vec3 d = normalized(dir);
    if ((std::fabs(d.x) > 1e-9 && d.x < 0.0) ||
        (std::fabs(d.x) <= 1e-9 && std::fabs(d.y) > 1e-9 && d.y < 0.0) ||
        (std::fabs(d.x) <= 1e-9 && std::fabs(d.y) <= 1e-9 && d.z < 0.0)) {
      d = -d;
    }
    const Point3 anchor = any_point - dot(any_point, d) * d;
    return {anchor, d};
  }

  double distance_to(const Point3& p) const { return norm(cross(p - point, direction)); }
  /// Coordinate of p along the line, measured from the anchor.
  double coordinate_of(const Point3& p) const { return dot(p - point, direction); }
};

/// Rigid transform p -> rotation * p + translation (board to camera, etc).
struct RigidTransform {
  Mat3 rotation = Mat3::identity();
  Vec3 translation{};

  Point3 apply(const Point3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    const Mat3 rt = transpose(rotation);
    return {rt, -(rt * translation)};
  }
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

/// Intersect the ray origin + t * direction (t > 0) with a plane.
inline Point3 ray_plane_intersect(const Point3& origin, const Vec3& direction, const Plane& plane) {
  const double denom = dot(plane.normal, direction);
  if (std::fabs(denom) < 1e-9) fail(errc::parallel_ray, "ray is parallel to the plane");
  const double t = (plane.offset - dot(plane.normal, origin)) / denom;
  if (t <= 0.0) fail(errc::behind_origin, "intersection behind the ray origin");
  return origin + t * direction;
}

struct PlaneFit {
  Plane plane;
  double rms = 0.0;  // mm
};

struct LineFit {
  Line3 line;
  double rms = 0.0;  // mm
};

namespace detail {

struct CenteredSvd {
  Point3 centroid;
  SvdResult svd;
};

inline CenteredSvd centered_point_svd(std::span<const Point3> points) {
  const int n = static_cast<int>(points.size());
  Point3 centroid{};
  for (const Point3& p : points) centroid = centroid + p;
  centroid = centroid / static_cast<double>(n);
  Matrix centered(n, 3);
  for (int i = 0; i < n; ++i) {
    centered(i, 0) = points[i].x - centroid.x;
    centered(i, 1) = points[i].y - centroid.y;
    centered(i, 2) = points[i].z - centroid.z;
  }
  return {centroid, svd_small(centered)};
}

inline Vec3 v_column(const SvdResult& svd, int col) {
  return {svd.v(0, col), svd.v(1, col), svd.v(2, col)};
}

}  // namespace detail

/// Total least-squares plane through n >= 3 non-collinear points: the plane
/// passes through the centroid and its normal is the right-singular vector of
/// the smallest singular value of the centered point matrix.
inline PlaneFit fit_plane(std::span<const Point3> points) {
  if (points.size() < 3) fail(errc::degenerate, "fit_plane: needs at least 3 points");
  const auto [centroid, svd] = detail::centered_point_svd(points);
  if (svd.sigma[1] <= 1e-9 * svd.sigma[0])
    fail(errc::degenerate, "fit_plane: points are collinear");

  PlaneFit fit;
  fit.plane = Plane::from_normal_offset(detail::v_column(svd, 2),
                                        dot(detail::v_column(svd, 2), centroid));
  double ss = 0.0;
  for (const Point3& p : points) {
    const double d = fit.plane.signed_distance(p);
    ss += d * d;
  }
  fit.rms = std::sqrt(ss / static_cast<double>(points.size()));
  return fit;
}

/// Total least-squares line through n >= 2 points: through the centroid along
/// the right-singular vector of the largest singular value.
inline LineFit fit_line(std::span<const Point3> points) {
  if (points.size() < 2) fail(errc::degenerate, "fit_line: needs at least 2 points");
  const auto [centroid, svd] = detail::centered_point_svd(points);
  if (svd.sigma[0] <= 1e-9) fail(errc::degenerate, "fit_line: points are coincident");

  LineFit fit;
  fit.line = Line3::canonical(centroid, detail::v_column(svd, 0));
  double ss = 0.0;
  for (const Point3& p : points) {
    const double d = fit.line.distance_to(p);
    ss += d * d;
  }
  fit.rms = std::sqrt(ss / static_cast<double>(points.size()));
  return fit;
}

/// Rodrigues rotation about a unit axis.
inline Mat3 axis_angle_matrix(const Vec3& axis_direction, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double cc = 1.0 - c;
  const double ax = axis_direction.x, ay = axis_direction.y, az = axis_direction.z;
  Mat3 r;
  r(0, 0) = c + ax * ax * cc;
  r(0, 1) = ax * ay * cc - az * s;
  r(0, 2) = ax * az * cc + ay * s;
  r(1, 0) = ay * ax * cc + az * s;
  r(1, 1) = c + ay * ay * cc;
  r(1, 2) = ay * az * cc - ax * s;
  r(2, 0) = az * ax * cc - ay * s;
  r(2, 1) = az * ay * cc + ax * s;
  r(2, 2) = c + az * az * cc;
  return r;
}

/// exp of an axis-angle vector (direction * angle). Small angles fall back to
/// the first-order map so finite-difference probes stay smooth near zero.
inline Mat3 rotation_from_rvec(const Vec3& rvec) {
  const double angle = norm(rvec);
  if (angle < 1e-12) {
    Mat3 r = Mat3::identity();
    r(0, 1) = -rvec.z;
    r(0, 2) = rvec.y;
    r(1, 0) = rvec.z;
    r(1, 2) = -rvec.x;
    r(2, 0) = -rvec.y;
    r(2, 1) = rvec.x;
    return r;
  }
  return axis_angle_matrix(rvec / angle, angle);
}

inline Vec3 rvec_from_rotation(const Mat3& r) {
  double cos_angle = (r(0, 0) + r(1, 1) + r(2, 2) - 1.0) * 0.5;
  cos_angle = std::clamp(cos_angle, -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  Vec3 axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  if (angle < 1e-9) return 0.5 * axis;
  const double s = std::sin(angle);
  if (s > 1e-6) return (angle / (2.0 * s)) * axis;
  // Near pi: recover the axis from the symmetric part.
  Vec3 sq{std::sqrt(std::max(0.0, (r(0, 0) + 1.0) * 0.5)),
          std::sqrt(std::max(0.0, (r(1, 1) + 1.0) * 0.5)),
          std::sqrt(std::max(0.0, (r(2, 2) + 1.0) * 0.5))};
  if (sq.x >= sq.y && sq.x >= sq.z) {
    sq.y = std::copysign(sq.y, r(0, 1));
    sq.z = std::copysign(sq.z, r(0, 2));
  } else if (sq.y >= sq.z) {
    sq.x = std::copysign(sq.x, r(0, 1));
    sq.z = std::copysign(sq.z, r(1, 2));
  } else {
    sq.x = std::copysign(sq.x, r(0, 2));
    sq.y = std::copysign(sq.y, r(1, 2));
  }
  return angle * normalized(sq);
}

/// Rotate p about an arbitrary axis line by the given angle.
inline Point3 rotate_about_axis(const Point3& p, const Line3& axis, double angle) {
  const Mat3 r = axis_angle_matrix(axis.direction, angle);
  return axis.point + r * (p - axis.point);
}

}  // namespace laserforge
