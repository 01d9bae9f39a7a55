#pragma once

#include <stdexcept>
#include <string>

namespace laserforge {

/// Failure categories used across the library. The CLI maps these to exit
/// codes: validation errors exit 1, numerical failures exit 2.
enum class errc {
  // input validation / file format
  dimension_error,
  insufficient_views,
  empty_cloud,
  bad_magic,
  bad_dimensions,
  truncated,
  unsupported_maxval,
  parse_error,
  missing_field,
  bad_angles,
  io_error,
  // numerical
  non_finite,
  rank_deficient,
  singular_normal_equations,
  parallel_ray,
  behind_origin,
  behind_camera,
  degenerate,
  degenerate_motion,
  singular,
  diverged,
  out_of_frame,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

/// True for failures of the numerics rather than of the inputs.
inline bool is_numerical_failure(errc code) noexcept {
  switch (code) {
    case errc::non_finite:
    case errc::rank_deficient:
    case errc::singular_normal_equations:
    case errc::parallel_ray:
    case errc::behind_origin:
    case errc::behind_camera:
    case errc::degenerate:
    case errc::degenerate_motion:
    case errc::singular:
    case errc::diverged:
    case errc::out_of_frame:
      return true;
    default:
      return false;
  }
}

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace laserforge
