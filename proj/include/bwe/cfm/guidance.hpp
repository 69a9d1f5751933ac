#pragma once

#include <string>

#include "../error.hpp"
#include "../grid.hpp"

namespace bwe::cfm {

enum class ScaleMode { Fixed, Projected };

inline const char* to_string(ScaleMode m) { return m == ScaleMode::Fixed ? "fixed" : "projected"; }

inline ScaleMode scale_mode_from_string(const std::string& s) {
  if (s == "fixed") return ScaleMode::Fixed;
  if (s == "projected") return ScaleMode::Projected;
  throw Error(ErrorKind::InvalidArgument, "unknown scale mode '" + s + "'");
}

struct GuidanceConfig {
  double w = 1.0;
  ScaleMode s_mode = ScaleMode::Projected;
  int zero_init_steps = 0;
  double cond_dropout_p = 0.1;
};

inline void validate(const GuidanceConfig& g) {
  require(g.w >= 0.0, "guidance: w must be >= 0");
  require(g.zero_init_steps >= 0, "guidance: zero_init_steps must be >= 0");
  require(g.cond_dropout_p >= 0.0 && g.cond_dropout_p < 1.0, "guidance: cond_dropout_p must lie in [0, 1)");
}

inline constexpr double kProjectionGuard = 1e-12;

/// s* = <v_cond, v_uncond> / ||v_uncond||^2 over all entries; 1 when the
/// unconditional field is (numerically) zero.
inline double projection_scale(const Grid& v_cond, const Grid& v_uncond) {
  require(same_shape(v_cond, v_uncond), ErrorKind::ShapeMismatch, "projection_scale: shape mismatch");
  const double den = (v_uncond.array() * v_uncond.array()).sum();
  if (den < kProjectionGuard) return 1.0;
  return (v_cond.array() * v_uncond.array()).sum() / den;
}

/// Guided velocity (1 - w) s v_uncond + w v_cond.
inline Grid cfg_zero_star(const Grid& v_cond, const Grid& v_uncond, double w, ScaleMode mode) {
  require(same_shape(v_cond, v_uncond), ErrorKind::ShapeMismatch, "cfg_zero_star: shape mismatch");
  const double s = mode == ScaleMode::Projected ? projection_scale(v_cond, v_uncond) : 1.0;
  return ((1.0 - w) * s) * v_uncond + w * v_cond;
}

} // namespace bwe::cfm
