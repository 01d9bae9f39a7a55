#include "laserforge/io.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "oracles.hpp"

using laserforge::CalibrationResult;
using laserforge::GrayImage;
using laserforge::LineFit;
using laserforge::PlaneFit;
using laserforge::PlyFormat;
using laserforge::PointCloud;
using laserforge::Point3;
using laserforge::ScanDirection;
using laserforge::ScanGroundTruth;
using laserforge::ScanSession;
using laserforge::SceneSurface;
using laserforge::errc;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("laserforge_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void expect_error_mentions(const std::function<void()>& fn, errc code, const std::string& text) {
  bool caught = false;
  try {
    fn();
  } catch (const laserforge::Error& e) {
    caught = true;
    EXPECT_EQ(e.code(), code) << e.what();
    EXPECT_NE(std::string(e.what()).find(text), std::string::npos) << e.what();
  }
  EXPECT_TRUE(caught);
}

}  // namespace

// ---------------------------------------------------------------------------
// files

TEST(Files, AtomicWriteRoundTrip) {
  TempDir dir;
  const std::string path = dir.file("blob.bin");
  const std::string bytes = std::string("abc\0def\n", 8);
  laserforge::write_file_atomic(path, bytes);
  EXPECT_EQ(laserforge::read_file(path), bytes);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST(Files, MissingFileIsIoError) {
  TempDir dir;
  expect_error_mentions([&] { laserforge::read_file(dir.file("absent.json")); }, errc::io_error,
                        "absent.json");
}

// ---------------------------------------------------------------------------
// PLY

TEST(Ply, AsciiGoldenBytes) {
  PointCloud cloud;
  cloud.points.push_back({1.0, 2.5, -3.0});
  const std::string expected =
      "ply\n"
      "format ascii 1.0\n"
      "comment laserforge\n"
      "element vertex 1\n"
      "property float x\n"
      "property float y\n"
      "property float z\n"
      "end_header\n"
      "1.000000 2.500000 -3.000000\n";
  EXPECT_EQ(laserforge::write_ply(cloud, PlyFormat::ascii), expected);
}

TEST(Ply, BinaryGoldenBytes) {
  PointCloud cloud;
  cloud.points.push_back({1.0, 2.5, -3.0});
  const std::string out = laserforge::write_ply(cloud, PlyFormat::binary_little_endian);
  const std::string header =
      "ply\n"
      "format binary_little_endian 1.0\n"
      "comment laserforge\n"
      "element vertex 1\n"
      "property float x\n"
      "property float y\n"
      "property float z\n"
      "end_header\n";
  ASSERT_EQ(out.size(), header.size() + 12);
  EXPECT_EQ(out.substr(0, header.size()), header);
  const unsigned char expected[12] = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00,
                                      0x20, 0x40, 0x00, 0x00, 0x40, 0xC0};
  for (int i = 0; i < 12; ++i)
    EXPECT_EQ(static_cast<unsigned char>(out[header.size() + i]), expected[i]) << "byte " << i;
}

TEST(Ply, EmptyCloudHasNoBody) {
  const std::string out = laserforge::write_ply(PointCloud{}, PlyFormat::ascii);
  EXPECT_NE(out.find("element vertex 0\n"), std::string::npos);
  EXPECT_EQ(out.substr(out.size() - 11), "end_header\n");
}

TEST(Ply, WriteIsDeterministic) {
  PointCloud cloud;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) cloud.points.push_back(oracle::random_point(rng, 100.0));
  EXPECT_EQ(laserforge::write_ply(cloud, PlyFormat::ascii),
            laserforge::write_ply(cloud, PlyFormat::ascii));
  EXPECT_EQ(laserforge::write_ply(cloud, PlyFormat::binary_little_endian),
            laserforge::write_ply(cloud, PlyFormat::binary_little_endian));
}

TEST(Ply, AsciiRoundTrip) {
  PointCloud cloud;
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) cloud.points.push_back(oracle::random_point(rng, 250.0));
  const PointCloud back = laserforge::read_ply(laserforge::write_ply(cloud, PlyFormat::ascii));
  ASSERT_EQ(back.points.size(), cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    EXPECT_NEAR(back.points[i].x, cloud.points[i].x, 1e-5);
    EXPECT_NEAR(back.points[i].y, cloud.points[i].y, 1e-5);
    EXPECT_NEAR(back.points[i].z, cloud.points[i].z, 1e-5);
  }
}

TEST(Ply, BinaryRoundTripIsFloatExact) {
  PointCloud cloud;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) cloud.points.push_back(oracle::random_point(rng, 250.0));
  const PointCloud back =
      laserforge::read_ply(laserforge::write_ply(cloud, PlyFormat::binary_little_endian));
  ASSERT_EQ(back.points.size(), cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    EXPECT_EQ(static_cast<float>(back.points[i].x), static_cast<float>(cloud.points[i].x));
    EXPECT_EQ(static_cast<float>(back.points[i].y), static_cast<float>(cloud.points[i].y));
    EXPECT_EQ(static_cast<float>(back.points[i].z), static_cast<float>(cloud.points[i].z));
  }
}

TEST(Ply, ColorRoundTripBothFormats) {
  PointCloud cloud;
  cloud.points = {{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
  cloud.colors = {{10, 20, 30}, {200, 150, 100}};
  for (PlyFormat fmt : {PlyFormat::ascii, PlyFormat::binary_little_endian}) {
    const std::string bytes = laserforge::write_ply(cloud, fmt);
    EXPECT_NE(bytes.find("property uchar red\nproperty uchar green\nproperty uchar blue\n"),
              std::string::npos);
    const PointCloud back = laserforge::read_ply(bytes);
    ASSERT_EQ(back.colors.size(), 2u);
    EXPECT_EQ(back.colors, cloud.colors);
  }
}

TEST(Ply, WriterRejectsBadClouds) {
  PointCloud mismatched;
  mismatched.points = {{0.0, 0.0, 1.0}, {0.0, 0.0, 2.0}};
  mismatched.colors = {{1, 2, 3}};
  EXPECT_LF_ERROR(laserforge::write_ply(mismatched), errc::dimension_error);

  PointCloud invalid;
  invalid.points = {{std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0}};
  EXPECT_LF_ERROR(laserforge::write_ply(invalid), errc::non_finite);
}

TEST(Ply, ReaderRejectsMalformedInput) {
  EXPECT_LF_ERROR(laserforge::read_ply("solid cube\n"), errc::bad_magic);
  EXPECT_LF_ERROR(laserforge::read_ply("ply\nformat ascii 1.0\nelement vertex 1\n"),
                  errc::truncated);

  PointCloud cloud;
  cloud.points.push_back({1.0, 2.0, 3.0});
  std::string ascii = laserforge::write_ply(cloud, PlyFormat::ascii);
  std::string reordered = ascii;
  const auto at = reordered.find("property float x");
  reordered.replace(at, 16, "property float w");
  EXPECT_LF_ERROR(laserforge::read_ply(reordered), errc::parse_error);

  // header promises one vertex but the body is gone entirely
  const std::string headless = ascii.substr(0, ascii.find("end_header\n") + 11);
  EXPECT_LF_ERROR(laserforge::read_ply(headless), errc::truncated);

  std::string binary = laserforge::write_ply(cloud, PlyFormat::binary_little_endian);
  EXPECT_LF_ERROR(laserforge::read_ply(binary.substr(0, binary.size() - 4)), errc::truncated);
}

// ---------------------------------------------------------------------------
// PGM

TEST(Pgm, GoldenOnePixel) {
  const GrayImage img(1, 1);
  const std::string out = laserforge::write_pgm(img);
  ASSERT_EQ(out.size(), 12u);
  EXPECT_EQ(out.substr(0, 11), "P5\n1 1\n255\n");
  EXPECT_EQ(out[11], '\0');
}

TEST(Pgm, SeededRoundTripIsExact) {
  GrayImage img(640, 480);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> level(0, 255);
  for (auto& px : img.pixels) px = static_cast<std::uint8_t>(level(rng));
  const std::string bytes = laserforge::write_pgm(img);
  const GrayImage back = laserforge::read_pgm(bytes);
  EXPECT_EQ(back.width, 640);
  EXPECT_EQ(back.height, 480);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_EQ(laserforge::write_pgm(back), bytes);
}

TEST(Pgm, HeaderCommentsAllowed) {
  const std::string bytes = std::string("P5\n# rendered frame\n2 1 # two wide\n255\n") +
                            std::string("\x0A\x7F", 2);
  const GrayImage img = laserforge::read_pgm(bytes);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 1);
  EXPECT_EQ(img.at(0, 0), 0x0A);
  EXPECT_EQ(img.at(1, 0), 0x7F);
}

TEST(Pgm, RasterMayStartWithWhitespaceByte) {
  // exactly one separator byte follows the maxval; a raster beginning with
  // 0x0A must not be eaten as header whitespace
  const std::string bytes = std::string("P5\n1 1\n255\n") + '\x0A';
  const GrayImage img = laserforge::read_pgm(bytes);
  EXPECT_EQ(img.at(0, 0), 0x0A);
}

TEST(Pgm, MalformedInputsRejected) {
  EXPECT_LF_ERROR(laserforge::read_pgm("P6\n1 1\n255\nx"), errc::bad_magic);
  EXPECT_LF_ERROR(laserforge::read_pgm("P5\n0 5\n255\n"), errc::bad_dimensions);
  EXPECT_LF_ERROR(laserforge::read_pgm("P5\nab 5\n255\nxxxxx"), errc::bad_dimensions);
  EXPECT_LF_ERROR(laserforge::read_pgm(std::string("P5\n2 2\n65535\n") + std::string(4, 'x')),
                  errc::unsupported_maxval);
  EXPECT_LF_ERROR(laserforge::read_pgm("P5\n4 4\n255\nxx"), errc::truncated);
  EXPECT_LF_ERROR(laserforge::read_pgm("P5\n4 4\n"), errc::truncated);
}

// ---------------------------------------------------------------------------
// JSON artifacts

TEST(JsonArtifacts, CalibrationRoundTripIsExact) {
  CalibrationResult r;
  r.intrinsics = {803.1234567890123, 1.0 / 3.0 + 800.0, 320.25, 239.75, -0.1, 0.02};
  r.rms_reprojection = std::numbers::pi / 17.0;
  for (int i = 0; i < 3; ++i) {
    laserforge::RigidTransform pose;
    pose.rotation = laserforge::rotation_from_rvec({0.1 * i, -0.2, 0.05 + 0.01 * i});
    pose.translation = {1.0 / 7.0 + i, -2.0 / 3.0, 60.0 + i};
    r.poses.push_back(pose);
  }
  const CalibrationResult back = laserforge::calibration_from_json(laserforge::calibration_to_json(r));
  EXPECT_EQ(back.intrinsics.fx, r.intrinsics.fx);
  EXPECT_EQ(back.intrinsics.fy, r.intrinsics.fy);
  EXPECT_EQ(back.intrinsics.cx, r.intrinsics.cx);
  EXPECT_EQ(back.intrinsics.cy, r.intrinsics.cy);
  EXPECT_EQ(back.intrinsics.k1, r.intrinsics.k1);
  EXPECT_EQ(back.intrinsics.k2, r.intrinsics.k2);
  EXPECT_EQ(back.rms_reprojection, r.rms_reprojection);
  ASSERT_EQ(back.poses.size(), r.poses.size());
  for (std::size_t i = 0; i < r.poses.size(); ++i) {
    EXPECT_LE(oracle::mat3_max_abs_diff(back.poses[i].rotation, r.poses[i].rotation), 1e-12);
    EXPECT_EQ(back.poses[i].translation.x, r.poses[i].translation.x);
    EXPECT_EQ(back.poses[i].translation.y, r.poses[i].translation.y);
    EXPECT_EQ(back.poses[i].translation.z, r.poses[i].translation.z);
  }
}

TEST(JsonArtifacts, PlaneAndAxisRoundTripExactly) {
  PlaneFit pf;
  pf.plane = laserforge::Plane::from_normal_offset({std::cos(0.5), 0.1, std::sin(0.5)}, 200.1);
  pf.rms = 0.012345678901234567;
  const PlaneFit pback = laserforge::plane_from_json(laserforge::plane_to_json(pf));
  EXPECT_EQ(pback.plane.normal.x, pf.plane.normal.x);
  EXPECT_EQ(pback.plane.normal.y, pf.plane.normal.y);
  EXPECT_EQ(pback.plane.normal.z, pf.plane.normal.z);
  EXPECT_EQ(pback.plane.offset, pf.plane.offset);
  EXPECT_EQ(pback.rms, pf.rms);

  LineFit lf;
  lf.line = laserforge::Line3::canonical({10.0 / 3.0, 0.0, 400.0}, {0.001, 1.0, -0.002});
  lf.rms = 1e-7;
  const LineFit lback = laserforge::axis_from_json(laserforge::axis_to_json(lf));
  EXPECT_EQ(lback.line.point.x, lf.line.point.x);
  EXPECT_EQ(lback.line.point.y, lf.line.point.y);
  EXPECT_EQ(lback.line.point.z, lf.line.point.z);
  EXPECT_EQ(lback.line.direction.x, lf.line.direction.x);
  EXPECT_EQ(lback.line.direction.y, lf.line.direction.y);
  EXPECT_EQ(lback.line.direction.z, lf.line.direction.z);
  EXPECT_EQ(lback.rms, lf.rms);
}

TEST(JsonArtifacts, MissingFieldNamesTheField) {
  expect_error_mentions(
      [] {
        laserforge::plane_from_json("{\"normal\": [0.0, 0.0, 1.0], \"rms_mm\": 0.0}");
      },
      errc::missing_field, "offset");
  EXPECT_LF_ERROR(laserforge::plane_from_json("this is not json"), errc::parse_error);
  EXPECT_LF_ERROR(
      laserforge::plane_from_json("{\"normal\": [0.0, 1.0], \"offset\": 1.0, \"rms_mm\": 0.0}"),
      errc::parse_error);
}

TEST(JsonArtifacts, GroundTruthRoundTrip) {
  const laserforge::RigConfig rig = laserforge::reference_rig();
  for (const SceneSurface& surface :
       {SceneSurface::make_cylinder(30.0, 80.0), SceneSurface::make_sphere(20.0, 5.0)}) {
    ScanGroundTruth truth{surface, rig.laser_plane, rig.axis, rig.intrinsics};
    const ScanGroundTruth back =
        laserforge::ground_truth_from_json(laserforge::ground_truth_to_json(truth));
    EXPECT_EQ(back.surface.kind, surface.kind);
    EXPECT_EQ(back.surface.radius, surface.radius);
    EXPECT_EQ(back.surface.height, surface.height);
    EXPECT_EQ(back.surface.center_offset, surface.center_offset);
    EXPECT_EQ(back.plane.offset, rig.laser_plane.offset);
    EXPECT_EQ(back.axis.point.z, rig.axis.point.z);
    EXPECT_EQ(back.intrinsics.fx, rig.intrinsics.fx);
  }
}

TEST(JsonArtifacts, BoardGroundTruthNotSerializable) {
  const laserforge::RigConfig rig = laserforge::reference_rig();
  const ScanGroundTruth truth{
      SceneSurface::make_board({8, 6, 3.0}, laserforge::RigidTransform{}), rig.laser_plane,
      rig.axis, rig.intrinsics};
  EXPECT_LF_ERROR(laserforge::ground_truth_to_json(truth), errc::dimension_error);

  expect_error_mentions(
      [] {
        laserforge::ground_truth_from_json(
            "{\"intrinsics\": {\"fx\": 800.0, \"fy\": 800.0, \"cx\": 320.0, \"cy\": 240.0, "
            "\"k1\": 0.0, \"k2\": 0.0}, \"plane\": {\"normal\": [1.0, 0.0, 0.0], \"offset\": "
            "200.0}, \"axis\": {\"point\": [0.0, 0.0, 400.0], \"direction\": [0.0, 1.0, 0.0]}, "
            "\"surface\": {\"kind\": \"torus\"}}");
      },
      errc::parse_error, "torus");
}

// ---------------------------------------------------------------------------
// sessions

namespace {

// Writes a minimal consistent artifact set and returns a ready session.
ScanSession write_session_artifacts(const TempDir& dir, int n_frames) {
  CalibrationResult calib;
  calib.intrinsics = {800.0, 800.0, 320.0, 240.0, 0.0, 0.0};
  laserforge::write_file_atomic(dir.file("calibration.json"),
                                laserforge::calibration_to_json(calib));
  PlaneFit pf;
  pf.plane = laserforge::Plane::from_normal_offset({1.0, 0.0, 0.5}, 200.0);
  laserforge::write_file_atomic(dir.file("laser_plane.json"), laserforge::plane_to_json(pf));
  LineFit lf;
  lf.line = {{0.0, 0.0, 400.0}, {0.0, 1.0, 0.0}};
  laserforge::write_file_atomic(dir.file("axis.json"), laserforge::axis_to_json(lf));

  ScanSession session;
  session.intrinsics_path = "calibration.json";
  session.laser_plane_path = "laser_plane.json";
  session.axis_path = "axis.json";
  session.threshold = 100;
  for (int i = 0; i < n_frames; ++i) {
    const std::string name = "frame_" + std::to_string(i) + ".pgm";
    laserforge::write_file_atomic(dir.file(name), laserforge::write_pgm(GrayImage(16, 16)));
    session.frames.push_back(
        {i * 10.0 * std::numbers::pi / 180.0, name});
  }
  return session;
}

}  // namespace

TEST(Session, RoundTripResolvesPathsAndAngles) {
  TempDir dir;
  const ScanSession session = write_session_artifacts(dir, 3);
  laserforge::write_file_atomic(dir.file("session.json"), laserforge::session_to_json(session));
  const ScanSession loaded = laserforge::load_session(dir.file("session.json"));

  EXPECT_EQ(loaded.intrinsics_path, dir.file("calibration.json"));
  EXPECT_EQ(loaded.laser_plane_path, dir.file("laser_plane.json"));
  EXPECT_EQ(loaded.axis_path, dir.file("axis.json"));
  EXPECT_EQ(loaded.threshold, 100);
  EXPECT_EQ(loaded.scan_direction, ScanDirection::rows);
  ASSERT_EQ(loaded.frames.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(loaded.frames[i].angle, i * 10.0 * std::numbers::pi / 180.0, 1e-12);
    EXPECT_EQ(loaded.frames[i].image_path, dir.file("frame_" + std::to_string(i) + ".pgm"));
  }
}

TEST(Session, AnglesMustIncreaseStrictly) {
  TempDir dir;
  ScanSession session = write_session_artifacts(dir, 3);
  session.frames[2].angle = session.frames[1].angle;  // 0, 10, 10 degrees
  laserforge::write_file_atomic(dir.file("session.json"), laserforge::session_to_json(session));
  EXPECT_LF_ERROR(laserforge::load_session(dir.file("session.json")), errc::bad_angles);
}

TEST(Session, MissingThresholdNamed) {
  TempDir dir;
  const ScanSession session = write_session_artifacts(dir, 1);
  nlohmann::json j = nlohmann::json::parse(laserforge::session_to_json(session));
  j.erase("threshold");
  laserforge::write_file_atomic(dir.file("session.json"), j.dump(2));
  expect_error_mentions([&] { laserforge::load_session(dir.file("session.json")); },
                        errc::missing_field, "threshold");
}

TEST(Session, MissingReferencedFileNamed) {
  TempDir dir;
  ScanSession session = write_session_artifacts(dir, 2);
  session.frames[1].image_path = "nope.pgm";
  laserforge::write_file_atomic(dir.file("session.json"), laserforge::session_to_json(session));
  expect_error_mentions([&] { laserforge::load_session(dir.file("session.json")); },
                        errc::io_error, "nope.pgm");
}

TEST(Session, MalformedFieldsRejected) {
  TempDir dir;
  const ScanSession session = write_session_artifacts(dir, 1);
  const nlohmann::json base = nlohmann::json::parse(laserforge::session_to_json(session));

  nlohmann::json bad_dir = base;
  bad_dir["scan_direction"] = "diagonal";
  laserforge::write_file_atomic(dir.file("bad_dir.json"), bad_dir.dump(2));
  EXPECT_LF_ERROR(laserforge::load_session(dir.file("bad_dir.json")), errc::parse_error);

  nlohmann::json no_frames = base;
  no_frames["frames"] = nlohmann::json::array();
  laserforge::write_file_atomic(dir.file("no_frames.json"), no_frames.dump(2));
  EXPECT_LF_ERROR(laserforge::load_session(dir.file("no_frames.json")), errc::parse_error);
}

TEST(Session, ColumnsDirectionParsed) {
  TempDir dir;
  ScanSession session = write_session_artifacts(dir, 1);
  session.scan_direction = ScanDirection::columns;
  laserforge::write_file_atomic(dir.file("session.json"), laserforge::session_to_json(session));
  EXPECT_EQ(laserforge::load_session(dir.file("session.json")).scan_direction,
            ScanDirection::columns);
}
