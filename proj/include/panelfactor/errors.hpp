#pragma once

#include <stdexcept>
#include <string>

namespace panelfactor {

// Every failure the library reports carries one of these codes. Input-side
// codes map to CLI exit 2, numerical codes to exit 3.
enum class errc {
  missing_column,
  unbalanced_panel,
  duplicate_cell,
  non_finite_value,
  time_varying_column_violation,
  index_out_of_range,
  dimension_mismatch,
  degenerate_scale,
  grid_outside_hull,
  invalid_argument,
  io_error,
  insufficient_local_data,
  singular_design,
  zero_variance,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::missing_column: return "MissingColumn";
    case errc::unbalanced_panel: return "UnbalancedPanel";
    case errc::duplicate_cell: return "DuplicateCell";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::time_varying_column_violation: return "TimeVaryingColumnViolation";
    case errc::index_out_of_range: return "IndexOutOfRange";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::degenerate_scale: return "DegenerateScale";
    case errc::grid_outside_hull: return "GridOutsideHull";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::io_error: return "IoError";
    case errc::insufficient_local_data: return "InsufficientLocalData";
    case errc::singular_design: return "SingularDesign";
    case errc::zero_variance: return "ZeroVariance";
  }
  return "UnknownError";
}

// Numerical failures (exit 3) are the ones that arise from the data's
// conditioning rather than from malformed input.
inline bool is_input_error(errc c) {
  switch (c) {
    case errc::insufficient_local_data:
    case errc::singular_design:
    case errc::zero_variance:
      return false;
    default:
      return true;
  }
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) raise(code, msg);
}

}  // namespace panelfactor
