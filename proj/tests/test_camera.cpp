#include "laserforge/camera.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

using laserforge::CameraIntrinsics;
using laserforge::PixelPoint;
using laserforge::Point3;
using laserforge::Vec3;
using laserforge::errc;

namespace {

const CameraIntrinsics kUnitK{1.0, 1.0, 0.0, 0.0, 0.0, 0.0};
const CameraIntrinsics kPlainK{800.0, 800.0, 320.0, 240.0, 0.0, 0.0};

}  // namespace

// ---------------------------------------------------------------------------
// project_point

TEST(Project, UnitCameraOnAxis) {
  const PixelPoint p = laserforge::project_point(kUnitK, {0.0, 0.0, 1.0});
  EXPECT_NEAR(p.u, 0.0, 1e-12);
  EXPECT_NEAR(p.v, 0.0, 1e-12);
}

TEST(Project, OffAxisPoint) {
  const PixelPoint p = laserforge::project_point(kPlainK, {0.1, 0.0, 1.0});
  EXPECT_NEAR(p.u, 400.0, 1e-12);
  EXPECT_NEAR(p.v, 240.0, 1e-12);
}

TEST(Project, RadialDistortionShiftsInward) {
  CameraIntrinsics k = kPlainK;
  k.k1 = -0.1;
  const PixelPoint p = laserforge::project_point(k, {0.2, 0.0, 1.0});
  EXPECT_NEAR(p.u, 479.36, 1e-9);
  EXPECT_NEAR(p.v, 240.0, 1e-9);
}

TEST(Project, PointBehindCameraRejected) {
  EXPECT_LF_ERROR(laserforge::project_point(kPlainK, {0.0, 0.0, -1.0}), errc::behind_camera);
  EXPECT_LF_ERROR(laserforge::project_point(kPlainK, {0.1, 0.1, 0.0}), errc::behind_camera);
}

// ---------------------------------------------------------------------------
// undistort_pixel

TEST(Undistort, NoDistortionIsIdentity) {
  const PixelPoint p = laserforge::undistort_pixel(kPlainK, {123.4, 456.7});
  EXPECT_NEAR(p.u, 123.4, 1e-12);
  EXPECT_NEAR(p.v, 456.7, 1e-12);
}

TEST(Undistort, RoundTripSinglePixel) {
  CameraIntrinsics k = kPlainK;
  k.k1 = -0.1;
  // Distort the ideal pixel (500, 100) by hand, then undistort it back.
  const double x = (500.0 - k.cx) / k.fx, y = (100.0 - k.cy) / k.fy;
  const double r2 = x * x + y * y;
  const double f = 1.0 + k.k1 * r2;
  const PixelPoint distorted{k.cx + k.fx * x * f, k.cy + k.fy * y * f};
  const PixelPoint back = laserforge::undistort_pixel(k, distorted);
  EXPECT_NEAR(back.u, 500.0, 1e-6);
  EXPECT_NEAR(back.v, 100.0, 1e-6);
}

TEST(Undistort, PrincipalPointFixed) {
  CameraIntrinsics k = kPlainK;
  k.k1 = -0.2;
  k.k2 = 0.05;
  const PixelPoint p = laserforge::undistort_pixel(k, {320.0, 240.0});
  EXPECT_NEAR(p.u, 320.0, 1e-12);
  EXPECT_NEAR(p.v, 240.0, 1e-12);
}

TEST(Undistort, RoundTripAcrossCoefficientRange) {
  // Ideal pixels out to 1.2x the half-diagonal (480 px from the principal
  // point) must round-trip through distort + undistort.
  const double k1s[] = {-0.3, -0.1, 0.0, 0.1, 0.3};
  for (double k1 : k1s) {
    CameraIntrinsics k = kPlainK;
    k.k1 = k1;
    for (int ring = 1; ring <= 4; ++ring) {
      const double radius_px = 120.0 * ring;
      for (int step = 0; step < 8; ++step) {
        const double ang = step * 0.785398163397448;
        const double u = k.cx + radius_px * std::cos(ang);
        const double v = k.cy + radius_px * std::sin(ang);
        const double x = (u - k.cx) / k.fx, y = (v - k.cy) / k.fy;
        const double r2 = x * x + y * y;
        const double f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
        const PixelPoint distorted{k.cx + k.fx * x * f, k.cy + k.fy * y * f};
        const PixelPoint back = laserforge::undistort_pixel(k, distorted);
        EXPECT_NEAR(back.u, u, 1e-6) << "k1=" << k1 << " radius=" << radius_px;
        EXPECT_NEAR(back.v, v, 1e-6) << "k1=" << k1 << " radius=" << radius_px;
      }
    }
  }
}

TEST(Undistort, TwoCoefficientRoundTrip) {
  CameraIntrinsics k = kPlainK;
  k.k1 = -0.1;
  k.k2 = 0.02;
  const double x = 0.4, y = -0.25;
  const double r2 = x * x + y * y;
  const double f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
  const PixelPoint distorted{k.cx + k.fx * x * f, k.cy + k.fy * y * f};
  const PixelPoint back = laserforge::undistort_pixel(k, distorted);
  EXPECT_NEAR(back.u, k.cx + k.fx * x, 1e-6);
  EXPECT_NEAR(back.v, k.cy + k.fy * y, 1e-6);
}

TEST(Undistort, RunawayIterationRejected) {
  // Strong negative distortion folds this pixel outside the trust region.
  const CameraIntrinsics k{100.0, 100.0, 0.0, 0.0, -0.5, 0.0};
  EXPECT_LF_ERROR(laserforge::undistort_pixel(k, {90.0, 0.0}), errc::diverged);
}

// ---------------------------------------------------------------------------
// pixel_to_ray

TEST(PixelToRay, UnitCameraCenterPixel) {
  const auto ray = laserforge::pixel_to_ray(kUnitK, {0.0, 0.0});
  EXPECT_NEAR(laserforge::norm(ray.point), 0.0, 1e-15);
  EXPECT_NEAR(ray.direction.x, 0.0, 1e-12);
  EXPECT_NEAR(ray.direction.y, 0.0, 1e-12);
  EXPECT_NEAR(ray.direction.z, 1.0, 1e-12);
}

TEST(PixelToRay, PrincipalPointLooksForward) {
  const auto ray = laserforge::pixel_to_ray(kPlainK, {320.0, 240.0});
  EXPECT_NEAR(ray.direction.x, 0.0, 1e-12);
  EXPECT_NEAR(ray.direction.y, 0.0, 1e-12);
  EXPECT_NEAR(ray.direction.z, 1.0, 1e-12);
}

TEST(PixelToRay, OffsetPixelDirection) {
  const auto ray = laserforge::pixel_to_ray(kPlainK, {400.0, 240.0});
  const Vec3 expected = laserforge::normalized(Vec3{0.1, 0.0, 1.0});
  EXPECT_NEAR(ray.direction.x, expected.x, 1e-12);
  EXPECT_NEAR(ray.direction.y, expected.y, 1e-12);
  EXPECT_NEAR(ray.direction.z, expected.z, 1e-12);
  EXPECT_NEAR(laserforge::norm(ray.direction), 1.0, 1e-12);
}

TEST(PixelToRay, ProjectInvertsRayLookup) {
  // pixel_to_ray expects distortion-free pixels, so the round trip is
  // undistort -> ray -> point on ray -> project (which re-applies distortion).
  CameraIntrinsics k = kPlainK;
  k.k1 = -0.05;
  k.k2 = 0.01;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> du(40.0, 600.0), dv(40.0, 440.0), dz(0.5, 5.0);
  for (int rep = 0; rep < 50; ++rep) {
    const PixelPoint px{du(rng), dv(rng)};
    const auto ray = laserforge::pixel_to_ray(k, laserforge::undistort_pixel(k, px));
    const Point3 p = ray.point + dz(rng) * ray.direction;
    const PixelPoint proj = laserforge::project_point(k, p);
    EXPECT_NEAR(proj.u, px.u, 1e-6);
    EXPECT_NEAR(proj.v, px.v, 1e-6);
  }
}

TEST(Intrinsics, ValidityChecks) {
  EXPECT_TRUE(kPlainK.valid());
  CameraIntrinsics bad = kPlainK;
  bad.fx = 0.0;
  EXPECT_FALSE(bad.valid());
  bad = kPlainK;
  bad.cy = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(bad.valid());
}
