// Command-line front end for the laserforge scanning pipeline. Subcommands
// mirror the rig workflow: simulate a scan, calibrate the camera, fit the
// laser plane and turntable axis, reconstruct the cloud, evaluate it against
// ground truth — or run the whole chain with `pipeline`.
//
// Exit codes: 0 success, 1 validation/input error, 2 numerical failure.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "laserforge/laserforge.hpp"

namespace lf = laserforge;
namespace fs = std::filesystem;

namespace {

struct SimulateOptions {
  std::string out_dir;
  int frames = 360;
  std::uint64_t seed = 0;
  double noise_px = 0.0;
  std::string surface = "cylinder";
  double radius = 30.0;
  double height = 80.0;
  int threshold = 128;
};

lf::SceneSurface surface_from_options(const SimulateOptions& opt) {
  if (opt.surface == "cylinder") return lf::SceneSurface::make_cylinder(opt.radius, opt.height);
  if (opt.surface == "sphere") return lf::SceneSurface::make_sphere(opt.radius);
  lf::fail(lf::errc::dimension_error, "unknown surface: " + opt.surface);
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.pgm", i);
  return buf;
}

nlohmann::json board_to_json(const lf::ChessboardSpec& spec) {
  return {{"inner_cols", spec.inner_cols},
          {"inner_rows", spec.inner_rows},
          {"square_size", spec.square_size}};
}

lf::ChessboardSpec board_from_json(const nlohmann::json& j) {
  lf::ChessboardSpec spec;
  spec.inner_cols = lf::detail::field(j, "inner_cols").get<int>();
  spec.inner_rows = lf::detail::field(j, "inner_rows").get<int>();
  spec.square_size = lf::detail::field(j, "square_size").get<double>();
  return spec;
}

nlohmann::json corners_to_json(const lf::ViewObservation& view) {
  nlohmann::json corners = nlohmann::json::array();
  for (const lf::PixelPoint& p : view.corners) corners.push_back({p.u, p.v});
  return corners;
}

std::vector<lf::PixelPoint> corners_from_json(const nlohmann::json& j) {
  std::vector<lf::PixelPoint> corners;
  for (const nlohmann::json& c : j) corners.push_back({c[0].get<double>(), c[1].get<double>()});
  return corners;
}

std::string resolve_near(const std::string& anchor_file, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(anchor_file).parent_path() / p).string();
}

lf::RigidTransform pose_from_corners(const lf::CameraIntrinsics& k,
                                     const lf::ChessboardSpec& spec,
                                     const std::vector<lf::PixelPoint>& corners) {
  const std::vector<lf::Point3> object = lf::board_object_points(spec);
  return lf::extrinsics_from_homography(k, lf::estimate_homography(object, corners));
}

// The board used for laser-plane and axis calibration: same 8x6 grid, scaled
// ten-fold so it spans the scan volume at the turntable's depth.
lf::ChessboardSpec laser_board_spec() { return {8, 6, 30.0}; }

// Board stripes are rendered wider and extracted lower than scan stripes:
// the broader support averages out intensity quantization, which otherwise
// biases the calibration planes by a few hundredths of a millimetre.
constexpr double kBoardStripeSigma = 2.0;
constexpr int kBoardThreshold = 60;

int cmd_simulate(const SimulateOptions& opt) {
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);

  const lf::RigConfig rig = lf::reference_rig(opt.noise_px, opt.seed);
  const lf::SceneSurface surface = surface_from_options(opt);

  // Scan frames plus the session that ties them to the (future) artifacts.
  const lf::SimulatedScan scan = lf::simulate_scan(rig, surface, opt.frames);
  lf::ScanSession session;
  session.intrinsics_path = "calibration.json";
  session.laser_plane_path = "laser_plane.json";
  session.axis_path = "axis.json";
  session.threshold = opt.threshold;
  for (const lf::ScanFrame& frame : scan.frames) {
    const std::string name = frame_name(static_cast<int>(frame.index));
    lf::write_file_atomic((dir / name).string(), lf::write_pgm(frame.image));
    session.frames.push_back({frame.angle, name});
  }
  lf::write_file_atomic((dir / "session.json").string(), lf::session_to_json(session));
  lf::write_file_atomic((dir / "ground_truth.json").string(),
                        lf::ground_truth_to_json(scan.truth));

  // Calibration fixtures: 20 views of the small printed board.
  const lf::ChessboardSpec calib_board{8, 6, 3.0};
  const std::vector<lf::RigidTransform> poses = lf::synthetic_board_poses(20, calib_board);
  const std::vector<lf::ViewObservation> views =
      lf::render_corner_observations(rig, calib_board, poses);
  nlohmann::json calib{{"board", board_to_json(calib_board)},
                       {"views", nlohmann::json::array()}};
  for (const lf::ViewObservation& view : views)
    calib["views"].push_back({{"corners", corners_to_json(view)}});
  lf::write_file_atomic((dir / "calib_corners.json").string(), calib.dump(2) + "\n");

  // Laser-plane fixtures: two large boards at different depths and tilts,
  // each with its stripe image and its corner observations for the pose.
  const lf::ChessboardSpec big = laser_board_spec();
  const lf::RigidTransform laser_poses[2] = {lf::laser_board_pose(big, 420.0, 0.26),
                                             lf::laser_board_pose(big, 560.0, -0.26)};
  nlohmann::json laser{{"board", board_to_json(big)}, {"views", nlohmann::json::array()}};
  for (int i = 0; i < 2; ++i) {
    lf::RigConfig board_rig = rig;
    board_rig.seed = rig.seed + 1000 + i;
    const lf::SceneSurface board = lf::SceneSurface::make_board(big, laser_poses[i]);
    const std::vector<lf::Point3> curve =
        lf::surface_laser_curve(board, 0.0, rig.laser_plane, rig.axis);
    const lf::GrayImage img = lf::render_laser_image(board_rig, curve, kBoardStripeSigma);
    const std::string name = "laser_board_" + std::to_string(i) + ".pgm";
    lf::write_file_atomic((dir / name).string(), lf::write_pgm(img));
    const std::vector<lf::ViewObservation> obs =
        lf::render_corner_observations(board_rig, big, {&laser_poses[i], 1});
    laser["views"].push_back({{"image_path", name}, {"corners", corners_to_json(obs[0])}});
  }
  lf::write_file_atomic((dir / "laser_calib.json").string(), laser.dump(2) + "\n");

  // Axis fixture: a board whose plane contains the axis, so the stripe on it
  // is the axis itself.
  const lf::RigidTransform axis_pose = lf::axis_board_pose(big, rig.axis);
  lf::RigConfig axis_rig = rig;
  axis_rig.seed = rig.seed + 2000;
  const lf::SceneSurface axis_board = lf::SceneSurface::make_board(big, axis_pose);
  const std::vector<lf::Point3> axis_curve =
      lf::surface_laser_curve(axis_board, 0.0, rig.laser_plane, rig.axis);
  const lf::GrayImage axis_img = lf::render_laser_image(axis_rig, axis_curve, kBoardStripeSigma);
  lf::write_file_atomic((dir / "axis_board.pgm").string(), lf::write_pgm(axis_img));
  const std::vector<lf::ViewObservation> axis_obs =
      lf::render_corner_observations(axis_rig, big, {&axis_pose, 1});
  nlohmann::json axis{{"board", board_to_json(big)},
                      {"views", nlohmann::json::array(
                                    {{{"image_path", "axis_board.pgm"},
                                      {"corners", corners_to_json(axis_obs[0])}}})}};
  lf::write_file_atomic((dir / "axis_calib.json").string(), axis.dump(2) + "\n");

  std::printf("simulated %d frame(s) into %s\n", opt.frames, opt.out_dir.c_str());
  return 0;
}

int cmd_calibrate(const std::string& input, const std::string& out) {
  const nlohmann::json j = lf::detail::parse_json(lf::read_file(input), "corner fixture");
  const lf::ChessboardSpec spec = board_from_json(lf::detail::field(j, "board"));
  std::vector<lf::ViewObservation> views;
  for (const nlohmann::json& v : lf::detail::field(j, "views"))
    views.push_back({corners_from_json(lf::detail::field(v, "corners"))});

  const lf::CalibrationResult result = lf::calibrate_camera(spec, views);
  lf::write_file_atomic(out, lf::calibration_to_json(result));
  std::printf("calibrated %zu view(s), rms_px=%.3e\n", views.size(), result.rms_reprojection);
  return 0;
}

// Shared by fit-laser and fit-axis: per view, recover the board pose from its
// corners, extract the stripe from its image, and lift it onto the board.
std::vector<std::vector<lf::Point3>> lift_board_stripes(const std::string& input,
                                                        const lf::CameraIntrinsics& k,
                                                        int threshold) {
  const nlohmann::json j = lf::detail::parse_json(lf::read_file(input), "stripe fixture");
  const lf::ChessboardSpec spec = board_from_json(lf::detail::field(j, "board"));
  std::vector<std::vector<lf::Point3>> lifted;
  for (const nlohmann::json& v : lf::detail::field(j, "views")) {
    const lf::RigidTransform pose =
        pose_from_corners(k, spec, corners_from_json(lf::detail::field(v, "corners")));
    const std::string image_path =
        resolve_near(input, lf::detail::field(v, "image_path").get<std::string>());
    const lf::GrayImage img = lf::read_pgm(lf::read_file(image_path));
    const lf::StripeExtraction stripe =
        lf::undistort_stripe(k, lf::extract_laser_points(img, threshold));
    lifted.push_back(lf::lift_stripe_to_plane(stripe, k, lf::board_plane(pose)));
  }
  return lifted;
}

int cmd_fit_laser(const std::string& input, const std::string& calibration,
                  const std::string& out, int threshold) {
  const lf::CameraIntrinsics k =
      lf::calibration_from_json(lf::read_file(calibration)).intrinsics;
  const std::vector<std::vector<lf::Point3>> lifted =
      lift_board_stripes(input, k, threshold);
  const lf::PlaneFit fit = lf::calibrate_laser_plane(lifted);
  lf::write_file_atomic(out, lf::plane_to_json(fit));
  std::printf("laser plane normal (%.6f %.6f %.6f) offset %.4f rms_mm=%.3e\n",
              fit.plane.normal.x, fit.plane.normal.y, fit.plane.normal.z, fit.plane.offset,
              fit.rms);
  return 0;
}

int cmd_fit_axis(const std::string& input, const std::string& calibration,
                 const std::string& out, int threshold) {
  const lf::CameraIntrinsics k =
      lf::calibration_from_json(lf::read_file(calibration)).intrinsics;
  const std::vector<std::vector<lf::Point3>> lifted =
      lift_board_stripes(input, k, threshold);
  std::vector<lf::Point3> all;
  for (const auto& set : lifted) all.insert(all.end(), set.begin(), set.end());
  const lf::LineFit fit = lf::calibrate_rotation_axis(all);
  lf::write_file_atomic(out, lf::axis_to_json(fit));
  std::printf("axis point (%.4f %.4f %.4f) direction (%.6f %.6f %.6f) rms_mm=%.3e\n",
              fit.line.point.x, fit.line.point.y, fit.line.point.z, fit.line.direction.x,
              fit.line.direction.y, fit.line.direction.z, fit.rms);
  return 0;
}

int cmd_reconstruct(const std::string& session_path, const std::string& out,
                    const std::string& format) {
  const lf::ScanSession session = lf::load_session(session_path);
  const lf::CameraIntrinsics k =
      lf::calibration_from_json(lf::read_file(session.intrinsics_path)).intrinsics;
  const lf::Plane plane = lf::plane_from_json(lf::read_file(session.laser_plane_path)).plane;
  const lf::Line3 axis = lf::axis_from_json(lf::read_file(session.axis_path)).line;

  std::vector<lf::TriangulatedFrame> frames;
  frames.reserve(session.frames.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < session.frames.size(); ++i) {
    const lf::GrayImage img = lf::read_pgm(lf::read_file(session.frames[i].image_path));
    const lf::StripeExtraction stripe = lf::undistort_stripe(
        k, lf::extract_laser_points(img, session.threshold, session.scan_direction));
    lf::TriangulatedFrame frame = lf::triangulate_frame(stripe, k, plane);
    frame.index = i;
    frame.angle = session.frames[i].angle;
    dropped += frame.dropped;
    frames.push_back(std::move(frame));
  }
  const lf::PointCloud cloud = lf::merge_frames(frames, axis);
  const lf::PlyFormat ply_format =
      format == "binary" ? lf::PlyFormat::binary_little_endian : lf::PlyFormat::ascii;
  lf::write_file_atomic(out, lf::write_ply(cloud, ply_format));
  std::printf("reconstructed %zu point(s) from %zu frame(s), %zu pixel(s) dropped\n",
              cloud.points.size(), frames.size(), dropped);
  return 0;
}

int cmd_evaluate(const std::string& cloud_path, const std::string& truth_path, double max_rms) {
  const lf::PointCloud cloud = lf::read_ply(lf::read_file(cloud_path));
  const lf::ScanGroundTruth truth = lf::ground_truth_from_json(lf::read_file(truth_path));
  const lf::CloudStats stats = lf::evaluate_cloud(cloud, truth.surface, truth.axis);
  std::printf("rms_mm=%.6f max_mm=%.6f n=%zu\n", stats.rms_mm, stats.max_mm, stats.n);
  if (max_rms >= 0.0 && stats.rms_mm > max_rms) {
    std::fprintf(stderr, "error: cloud rms %.6f mm exceeds --max-rms %.6f mm\n", stats.rms_mm,
                 max_rms);
    return 2;
  }
  return 0;
}

double angle_between_deg(const lf::Vec3& a, const lf::Vec3& b) {
  const double c = std::fabs(lf::dot(lf::normalized(a), lf::normalized(b)));
  return std::acos(std::min(1.0, c)) * 180.0 / std::numbers::pi;
}

int cmd_pipeline(const SimulateOptions& opt, const std::string& format) {
  const fs::path dir(opt.out_dir);
  int rc = cmd_simulate(opt);
  if (rc != 0) return rc;
  rc = cmd_calibrate((dir / "calib_corners.json").string(), (dir / "calibration.json").string());
  if (rc != 0) return rc;
  rc = cmd_fit_laser((dir / "laser_calib.json").string(), (dir / "calibration.json").string(),
                     (dir / "laser_plane.json").string(), kBoardThreshold);
  if (rc != 0) return rc;
  rc = cmd_fit_axis((dir / "axis_calib.json").string(), (dir / "calibration.json").string(),
                    (dir / "axis.json").string(), kBoardThreshold);
  if (rc != 0) return rc;
  rc = cmd_reconstruct((dir / "session.json").string(), (dir / "cloud.ply").string(), format);
  if (rc != 0) return rc;

  // Recovery summary against the simulator's ground truth.
  const lf::ScanGroundTruth truth =
      lf::ground_truth_from_json(lf::read_file((dir / "ground_truth.json").string()));
  const lf::CalibrationResult calib =
      lf::calibration_from_json(lf::read_file((dir / "calibration.json").string()));
  const lf::PlaneFit plane = lf::plane_from_json(lf::read_file((dir / "laser_plane.json").string()));
  const lf::LineFit axis = lf::axis_from_json(lf::read_file((dir / "axis.json").string()));
  const lf::PointCloud cloud = lf::read_ply(lf::read_file((dir / "cloud.ply").string()));
  const lf::CloudStats stats = lf::evaluate_cloud(cloud, truth.surface, truth.axis);

  const double k_err = std::max(
      {std::fabs(calib.intrinsics.fx - truth.intrinsics.fx) / truth.intrinsics.fx,
       std::fabs(calib.intrinsics.fy - truth.intrinsics.fy) / truth.intrinsics.fy,
       std::fabs(calib.intrinsics.cx - truth.intrinsics.cx) / truth.intrinsics.cx,
       std::fabs(calib.intrinsics.cy - truth.intrinsics.cy) / truth.intrinsics.cy});
  std::printf("\n%-14s %-28s %s\n", "stage", "metric", "value");
  std::printf("%-14s %-28s %.3e\n", "calibration", "intrinsics max rel error", k_err);
  std::printf("%-14s %-28s %.3e\n", "calibration", "reprojection rms (px)", calib.rms_reprojection);
  std::printf("%-14s %-28s %.3e\n", "laser plane", "normal error (deg)",
              angle_between_deg(plane.plane.normal, truth.plane.normal));
  std::printf("%-14s %-28s %.3e\n", "laser plane", "offset error (mm)",
              std::fabs(plane.plane.offset - truth.plane.offset));
  std::printf("%-14s %-28s %.3e\n", "axis", "direction error (deg)",
              angle_between_deg(axis.line.direction, truth.axis.direction));
  std::printf("%-14s %-28s %.3e\n", "axis", "anchor error (mm)",
              lf::norm(axis.line.point - truth.axis.point));
  std::printf("%-14s %-28s %.6f\n", "cloud", "rms (mm)", stats.rms_mm);
  std::printf("%-14s %-28s %.6f\n", "cloud", "max (mm)", stats.max_mm);
  std::printf("%-14s %-28s %zu\n", "cloud", "points", stats.n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laserforge: line-laser turntable scanning pipeline"};
  app.require_subcommand(1);

  SimulateOptions sim_opt;
  CLI::App* sim = app.add_subcommand("simulate", "render a synthetic scan with ground truth");
  sim->add_option("--out", sim_opt.out_dir, "output directory")->required();
  sim->add_option("--frames", sim_opt.frames, "number of turntable steps");
  sim->add_option("--seed", sim_opt.seed, "RNG seed");
  sim->add_option("--noise-px", sim_opt.noise_px, "corner/pixel noise sigma");
  sim->add_option("--surface", sim_opt.surface, "cylinder or sphere");
  sim->add_option("--radius", sim_opt.radius, "surface radius (mm)");
  sim->add_option("--height", sim_opt.height, "cylinder height (mm)");
  sim->add_option("--threshold", sim_opt.threshold, "stripe threshold stored in the session");

  std::string cal_input, cal_out = "calibration.json";
  CLI::App* cal = app.add_subcommand("calibrate", "camera calibration from corner views");
  cal->add_option("--input", cal_input, "corner fixture JSON")->required();
  cal->add_option("--out", cal_out, "calibration artifact path");

  std::string laser_input, laser_calibration, laser_out = "laser_plane.json";
  int laser_threshold = kBoardThreshold;
  CLI::App* laser = app.add_subcommand("fit-laser", "laser-plane calibration from board stripes");
  laser->add_option("--input", laser_input, "stripe fixture JSON")->required();
  laser->add_option("--calibration", laser_calibration, "calibration artifact")->required();
  laser->add_option("--out", laser_out, "laser plane artifact path");
  laser->add_option("--threshold", laser_threshold, "stripe threshold");

  std::string axis_input, axis_calibration, axis_out = "axis.json";
  int axis_threshold = kBoardThreshold;
  CLI::App* axis = app.add_subcommand("fit-axis", "turntable axis calibration");
  axis->add_option("--input", axis_input, "stripe fixture JSON")->required();
  axis->add_option("--calibration", axis_calibration, "calibration artifact")->required();
  axis->add_option("--out", axis_out, "axis artifact path");
  axis->add_option("--threshold", axis_threshold, "stripe threshold");

  std::string rec_session, rec_out = "cloud.ply", rec_format = "ascii";
  CLI::App* rec = app.add_subcommand("reconstruct", "triangulate and merge a scan session");
  rec->add_option("--session", rec_session, "session JSON")->required();
  rec->add_option("--out", rec_out, "output PLY path");
  rec->add_option("--format", rec_format, "ascii or binary")
      ->check(CLI::IsMember({"ascii", "binary"}));

  std::string eval_cloud, eval_truth;
  double eval_max_rms = -1.0;
  CLI::App* eval = app.add_subcommand("evaluate", "measure a cloud against ground truth");
  eval->add_option("--cloud", eval_cloud, "PLY cloud path")->required();
  eval->add_option("--truth", eval_truth, "ground truth JSON")->required();
  eval->add_option("--max-rms", eval_max_rms, "fail (exit 2) above this rms in mm");

  SimulateOptions pipe_opt;
  std::string pipe_format = "ascii";
  CLI::App* pipe = app.add_subcommand("pipeline", "simulate, calibrate, reconstruct, evaluate");
  pipe->add_option("--out", pipe_opt.out_dir, "working directory")->required();
  pipe->add_option("--frames", pipe_opt.frames, "number of turntable steps");
  pipe->add_option("--seed", pipe_opt.seed, "RNG seed");
  pipe->add_option("--noise-px", pipe_opt.noise_px, "corner/pixel noise sigma");
  pipe->add_option("--surface", pipe_opt.surface, "cylinder or sphere");
  pipe->add_option("--radius", pipe_opt.radius, "surface radius (mm)");
  pipe->add_option("--height", pipe_opt.height, "cylinder height (mm)");
  pipe->add_option("--threshold", pipe_opt.threshold, "stripe threshold");
  pipe->add_option("--format", pipe_format, "ascii or binary")
      ->check(CLI::IsMember({"ascii", "binary"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_opt);
    if (cal->parsed()) return cmd_calibrate(cal_input, cal_out);
    if (laser->parsed())
      return cmd_fit_laser(laser_input, laser_calibration, laser_out, laser_threshold);
    if (axis->parsed()) return cmd_fit_axis(axis_input, axis_calibration, axis_out, axis_threshold);
    if (rec->parsed()) return cmd_reconstruct(rec_session, rec_out, rec_format);
    if (eval->parsed()) return cmd_evaluate(eval_cloud, eval_truth, eval_max_rms);
    if (pipe->parsed()) return cmd_pipeline(pipe_opt, pipe_format);
  } catch (const lf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return lf::is_numerical_failure(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
