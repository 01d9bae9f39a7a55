#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "laserforge/camera.hpp"
#include "laserforge/error.hpp"
#include "laserforge/geometry.hpp"
#include "laserforge/numerics.hpp"

namespace laserforge {

/// Planar calibration target: a grid of inner corners, row-major, with the
/// first corner at the board origin.
struct ChessboardSpec {
  int inner_cols = 8;
  int inner_rows = 6;
  double square_size = 3.0;  // mm

  bool valid() const { return inner_cols >= 3 && inner_rows >= 3 && square_size > 0.0; }
  int corner_count() const { return inner_cols * inner_rows; }
};

/// Subpixel corner locations for one view, in board row-major order.
struct ViewObservation {
  std::vector<PixelPoint> corners;
};

struct CalibrationResult {
  CameraIntrinsics intrinsics;
  std::vector<RigidTransform> poses;  // board -> camera, one per view
  double rms_reprojection = 0.0;      // pixels
};

/// Board-frame corner coordinates: point(i, j) = (j * s, i * s, 0).
inline std::vector<Point3> board_object_points(const ChessboardSpec& spec) {
  std::vector<Point3> points;
  points.reserve(spec.corner_count());
  for (int i = 0; i < spec.inner_rows; ++i)
    for (int j = 0; j < spec.inner_cols; ++j)
      points.push_back({j * spec.square_size, i * spec.square_size, 0.0});
  return points;
}

using Homography = Mat3;

namespace detail {

struct Normalization {
  double scale = 1.0;
  double mx = 0.0;
  double my = 0.0;
};

template <typename GetXY>
Normalization isotropic_normalization(std::size_t n, GetXY get) {
  Normalization nrm;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = get(i);
    nrm.mx += x;
    nrm.my += y;
  }
  nrm.mx /= static_cast<double>(n);
  nrm.my /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto [x, y] = get(i);
    mean_dist += std::hypot(x - nrm.mx, y - nrm.my);
  }
  mean_dist /= static_cast<double>(n);
  nrm.scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  return nrm;
}

inline Matrix mat3_to_matrix(const Mat3& m) {
  Matrix out(3, 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
  return out;
}

inline Vec3 apply_kinv(const CameraIntrinsics& k, const Vec3& v) {
  return {(v.x - k.cx * v.z) / k.fx, (v.y - k.cy * v.z) / k.fy, v.z};
}

}  // namespace detail

/// Direct linear transform for the plane-to-image homography, n >= 4
/// correspondences. Both point sets are normalized to mean distance sqrt(2)
/// from their centroid first; the result is scaled so H(2,2) = 1.
inline Homography estimate_homography(std::span<const Point3> object_xy,
                                      std::span<const PixelPoint> image) {
  const std::size_t n = object_xy.size();
  if (n != image.size()) fail(errc::dimension_error, "estimate_homography: size mismatch");
  if (n < 4) fail(errc::degenerate, "estimate_homography: needs at least 4 correspondences");

  const auto no = detail::isotropic_normalization(
      n, [&](std::size_t i) { return std::pair{object_xy[i].x, object_xy[i].y}; });
  const auto ni = detail::isotropic_normalization(
      n, [&](std::size_t i) { return std::pair{image[i].u, image[i].v}; });

  // Inhomogeneous DLT with h33 fixed to 1 in normalized coordinates.
  Matrix a(static_cast<int>(2 * n), 8);
  std::vector<double> b(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = no.scale * (object_xy[i].x - no.mx);
    const double y = no.scale * (object_xy[i].y - no.my);
    const double u = ni.scale * (image[i].u - ni.mx);
    const double v = ni.scale * (image[i].v - ni.my);
    const int r = static_cast<int>(2 * i);
    a(r, 0) = x;
    a(r, 1) = y;
    a(r, 2) = 1.0;
    a(r, 6) = -u * x;
    a(r, 7) = -u * y;
    b[r] = u;
    a(r + 1, 3) = x;
    a(r + 1, 4) = y;
    a(r + 1, 5) = 1.0;
    a(r + 1, 6) = -v * x;
    a(r + 1, 7) = -v * y;
    b[r + 1] = v;
  }

  std::vector<double> h;
  try {
    h = solve_least_squares(a, b);
  } catch (const Error& e) {
    if (e.code() == errc::rank_deficient)
      fail(errc::degenerate, "estimate_homography: correspondences are degenerate");
    throw;
  }

  Mat3 hn;
  hn(0, 0) = h[0];
  hn(0, 1) = h[1];
  hn(0, 2) = h[2];
  hn(1, 0) = h[3];
  hn(1, 1) = h[4];
  hn(1, 2) = h[5];
  hn(2, 0) = h[6];
  hn(2, 1) = h[7];
  hn(2, 2) = 1.0;

  Mat3 t_obj;
  t_obj(0, 0) = no.scale;
  t_obj(0, 2) = -no.scale * no.mx;
  t_obj(1, 1) = no.scale;
  t_obj(1, 2) = -no.scale * no.my;
  t_obj(2, 2) = 1.0;
  Mat3 t_img_inv;
  t_img_inv(0, 0) = 1.0 / ni.scale;
  t_img_inv(0, 2) = ni.mx;
  t_img_inv(1, 1) = 1.0 / ni.scale;
  t_img_inv(1, 2) = ni.my;
  t_img_inv(2, 2) = 1.0;

  Mat3 result = t_img_inv * hn * t_obj;
  if (std::fabs(result(2, 2)) < 1e-15)
    fail(errc::degenerate, "estimate_homography: vanishing scale");
  const double h22 = result(2, 2);
  for (double& v : result.a) v /= h22;
  return result;
}

inline PixelPoint apply_homography(const Homography& h, double x, double y) {
  const double w = h(2, 0) * x + h(2, 1) * y + h(2, 2);
  return {(h(0, 0) * x + h(0, 1) * y + h(0, 2)) / w,
          (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / w};
}

/// Closed-form intrinsics from >= 3 homographies of a planar target with zero
/// skew: the orthogonality constraints on the image of the absolute conic
/// give a homogeneous system in five conic entries; its null vector yields
/// fx, fy, cx, cy.
inline CameraIntrinsics intrinsics_from_homographies(std::span<const Homography> hs) {
  const int n = static_cast<int>(hs.size());
  if (n < 3) fail(errc::insufficient_views, "intrinsics_from_homographies: needs >= 3 views");

  // Unknowns b = (B11, B22, B13, B23, B33) of the conic, with B12 = 0.
  Matrix constraints(2 * n, 5);
  for (int view = 0; view < n; ++view) {
    Mat3 h = hs[view];
    double fn = 0.0;
    for (double v : h.a) fn += v * v;
    fn = std::sqrt(fn);
    for (double& v : h.a) v /= fn;

    const auto row_for = [&](int i, int j, double* out) {
      const double ai = h(0, i), bi = h(1, i), ci = h(2, i);
      const double aj = h(0, j), bj = h(1, j), cj = h(2, j);
      out[0] = ai * aj;
      out[1] = bi * bj;
      out[2] = ai * cj + ci * aj;
      out[3] = bi * cj + ci * bj;
      out[4] = ci * cj;
    };
    double v01[5], v00[5], v11[5];
    row_for(0, 1, v01);
    row_for(0, 0, v00);
    row_for(1, 1, v11);
    for (int c = 0; c < 5; ++c) {
      constraints(2 * view, c) = v01[c];
      constraints(2 * view + 1, c) = v00[c] - v11[c];
    }
  }

  // The conic is the null direction, so sigma[4] ~ 0 even for perfect data;
  // motion is degenerate when the null space widens, i.e. sigma[3] collapses
  // too and the conic is no longer unique.
  const SvdResult svd = svd_small(constraints);
  if (svd.sigma[3] <= 1e-10 * svd.sigma[0])
    fail(errc::degenerate_motion, "intrinsics_from_homographies: board orientations degenerate");

  double b11 = svd.v(0, 4), b22 = svd.v(1, 4), b13 = svd.v(2, 4), b23 = svd.v(3, 4),
         b33 = svd.v(4, 4);
  if (b11 < 0.0) {
    b11 = -b11;
    b22 = -b22;
    b13 = -b13;
    b23 = -b23;
    b33 = -b33;
  }
  if (!(b11 > 0.0) || !(b22 > 0.0))
    fail(errc::degenerate_motion, "intrinsics_from_homographies: conic not definite");

  const double cx = -b13 / b11;
  const double cy = -b23 / b22;
  const double lambda = b33 - (b13 * b13 / b11 + b23 * b23 / b22);
  if (!(lambda > 0.0))
    fail(errc::degenerate_motion, "intrinsics_from_homographies: conic not definite");

  CameraIntrinsics k;
  k.fx = std::sqrt(lambda / b11);
  k.fy = std::sqrt(lambda / b22);
  k.cx = cx;
  k.cy = cy;
  return k;
}

/// Board-to-camera pose from one homography and known intrinsics. The first
/// two rotation columns come from K^-1 h scaled by 1/|K^-1 h1|, the third
/// from their cross product; the result is snapped to the nearest orthonormal
/// matrix and flipped if the board origin lands behind the camera.
inline RigidTransform extrinsics_from_homography(const CameraIntrinsics& k, const Homography& h) {
  double hf = 0.0;
  for (double v : h.a) hf += v * v;
  hf = std::sqrt(hf);
  if (std::fabs(det(h)) < 1e-12 * std::max(1.0, hf * hf * hf))
    fail(errc::singular, "extrinsics_from_homography: homography not invertible");

  const Vec3 m1 = detail::apply_kinv(k, {h(0, 0), h(1, 0), h(2, 0)});
  const Vec3 m2 = detail::apply_kinv(k, {h(0, 1), h(1, 1), h(2, 1)});
  const Vec3 m3 = detail::apply_kinv(k, {h(0, 2), h(1, 2), h(2, 2)});
  double scale = 1.0 / norm(m1);

  Vec3 r1 = scale * m1;
  Vec3 r2 = scale * m2;
  Vec3 t = scale * m3;
  if (t.z < 0.0) {
    r1 = -r1;
    r2 = -r2;
    t = -t;
  }
  const Vec3 r3 = cross(r1, r2);

  // Columns are r1, r2, r3.
  Mat3 approx;
  approx(0, 0) = r1.x;
  approx(1, 0) = r1.y;
  approx(2, 0) = r1.z;
  approx(0, 1) = r2.x;
  approx(1, 1) = r2.y;
  approx(2, 1) = r2.z;
  approx(0, 2) = r3.x;
  approx(1, 2) = r3.y;
  approx(2, 2) = r3.z;

  // Nearest rotation: U V^T from the SVD, with the determinant corrected.
  const SvdResult svd = svd_small(detail::mat3_to_matrix(approx));
  Mat3 u, v;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      u(r, c) = svd.u(r, c);
      v(r, c) = svd.v(r, c);
    }
  Mat3 rot = u * transpose(v);
  if (det(rot) < 0.0) {
    for (int r = 0; r < 3; ++r) u(r, 2) = -u(r, 2);
    rot = u * transpose(v);
  }
  return {rot, t};
}

/// RMS over all corners of the pixel distance between projection and
/// observation.
inline double reprojection_rms(const CalibrationResult& result, const ChessboardSpec& spec,
                               std::span<const ViewObservation> views) {
  if (result.poses.size() != views.size())
    fail(errc::dimension_error, "reprojection_rms: pose/view count mismatch");
  const std::vector<Point3> object = board_object_points(spec);
  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].corners.size() != object.size())
      fail(errc::dimension_error, "reprojection_rms: corner count mismatch");
    for (std::size_t c = 0; c < object.size(); ++c) {
      const PixelPoint proj = project_point(result.intrinsics, result.poses[v].apply(object[c]));
      const double du = proj.u - views[v].corners[c].u;
      const double dv = proj.v - views[v].corners[c].v;
      ss += du * du + dv * dv;
      ++count;
    }
  }
  return std::sqrt(ss / static_cast<double>(count));
}

namespace detail {

inline std::vector<double> pack_calibration(const CameraIntrinsics& k,
                                            std::span<const RigidTransform> poses) {
  std::vector<double> x{k.fx, k.fy, k.cx, k.cy, k.k1, k.k2};
  for (const RigidTransform& pose : poses) {
    const Vec3 r = rvec_from_rotation(pose.rotation);
    x.insert(x.end(), {r.x, r.y, r.z, pose.translation.x, pose.translation.y, pose.translation.z});
  }
  return x;
}

inline void unpack_calibration(const std::vector<double>& x, CameraIntrinsics& k,
                               std::vector<RigidTransform>& poses) {
  k.fx = x[0];
  k.fy = x[1];
  k.cx = x[2];
  k.cy = x[3];
  k.k1 = x[4];
  k.k2 = x[5];
  poses.resize((x.size() - 6) / 6);
  for (std::size_t v = 0; v < poses.size(); ++v) {
    const std::size_t o = 6 + 6 * v;
    poses[v].rotation = rotation_from_rvec({x[o], x[o + 1], x[o + 2]});
    poses[v].translation = {x[o + 3], x[o + 4], x[o + 5]};
  }
}

}  // namespace detail

/// Full planar calibration: per-view homographies, closed-form intrinsics,
/// per-view extrinsics, then a joint Gauss-Newton refinement of
/// {fx, fy, cx, cy, k1, k2} and all poses (axis-angle + translation) against
/// the reprojection error. Refinement never raises the RMS above the
/// closed-form initializer's.
inline CalibrationResult calibrate_camera(const ChessboardSpec& spec,
                                          std::span<const ViewObservation> views) {
  if (!spec.valid()) fail(errc::dimension_error, "calibrate_camera: invalid board spec");
  if (views.size() < 3) fail(errc::insufficient_views, "calibrate_camera: needs >= 3 views");
  const std::vector<Point3> object = board_object_points(spec);
  for (const ViewObservation& view : views)
    if (view.corners.size() != object.size())
      fail(errc::dimension_error, "calibrate_camera: incomplete view");

  std::vector<Homography> hs;
  hs.reserve(views.size());
  for (const ViewObservation& view : views)
    hs.push_back(estimate_homography(object, view.corners));

  CameraIntrinsics k0 = intrinsics_from_homographies(hs);
  std::vector<RigidTransform> poses0;
  poses0.reserve(hs.size());
  for (const Homography& h : hs) poses0.push_back(extrinsics_from_homography(k0, h));

  const std::size_t n_views = views.size();
  const std::size_t n_corners = object.size();
  const ResidualFn residual = [&](const std::vector<double>& x) {
    CameraIntrinsics k;
    std::vector<RigidTransform> poses;
    detail::unpack_calibration(x, k, poses);
    std::vector<double> r(2 * n_views * n_corners);
    std::size_t idx = 0;
    for (std::size_t v = 0; v < n_views; ++v) {
      for (std::size_t c = 0; c < n_corners; ++c) {
        const Point3 pc = poses[v].apply(object[c]);
        if (pc.z <= 1e-9) {
          r[idx++] = 1e6;
          r[idx++] = 1e6;
          continue;
        }
        const PixelPoint proj = project_point(k, pc);
        r[idx++] = proj.u - views[v].corners[c].u;
        r[idx++] = proj.v - views[v].corners[c].v;
      }
    }
    return r;
  };

  GaussNewtonOptions opts;
  opts.max_iters = 60;
  opts.step_tol = 1e-14;
  opts.residual_tol = 1e-13;
  const GaussNewtonResult refined =
      gauss_newton(residual, detail::pack_calibration(k0, poses0), opts);

  CalibrationResult result;
  detail::unpack_calibration(refined.x, result.intrinsics, result.poses);
  result.rms_reprojection = reprojection_rms(result, spec, views);
  return result;
}

/// Plane of the board (its z = 0 face) in camera coordinates under a pose.
inline Plane board_plane(const RigidTransform& pose) {
  const Vec3 n{pose.rotation(0, 2), pose.rotation(1, 2), pose.rotation(2, 2)};
  return Plane::from_normal_offset(n, dot(n, pose.translation));
}

}  // namespace laserforge
