#pragma once

#include <utility>

#include "../error.hpp"
#include "../grid.hpp"

namespace bwe::cfm {

enum class PathKind { Adaptive, Mixed };

inline const char* to_string(PathKind k) { return k == PathKind::Adaptive ? "adaptive" : "mixed"; }

inline PathKind path_kind_from_string(const std::string& s) {
  if (s == "adaptive") return PathKind::Adaptive;
  if (s == "mixed") return PathKind::Mixed;
  throw Error(ErrorKind::InvalidArgument, "unknown path kind '" + s + "'");
}

/// Probability path between the narrowband mel (source) and the fullband
/// mel (target). For Mixed, bands >= mixed_boundary start from noise.
struct PathConfig {
  PathKind kind = PathKind::Mixed;
  double sigma_min = 1e-4;
  int mixed_boundary = 0;
};

inline void validate(const PathConfig& p, Eigen::Index bands) {
  require(p.sigma_min >= 0.0 && p.sigma_min <= 0.5, "path: sigma_min must lie in [0, 0.5]");
  require(p.mixed_boundary >= 0 && p.mixed_boundary <= bands, "path: mixed boundary out of range");
}

struct PathSample {
  Grid x_t;
  Grid u_t;
};

/// Point on the path at time t and its target velocity.
///
/// Adaptive: x_t = (1-t) x_lr + t x_hr + sigma_min (1-t) noise,
///           u_t = x_hr - x_lr - sigma_min noise.
/// Mixed, bands >= b: x_t = (1 - (1-sigma_min) t) noise + t x_hr,
///                    u_t = x_hr - (1-sigma_min) noise.
inline PathSample sample_path(const Grid& x_lr, const Grid& x_hr, double t, const PathConfig& path, const Grid& noise) {
  require(same_shape(x_lr, x_hr) && same_shape(x_lr, noise), ErrorKind::ShapeMismatch, "sample_path: shape mismatch");
  require(t >= 0.0 && t <= 1.0, "sample_path: t must lie in [0, 1]");
  validate(path, x_lr.cols());

  const double s = path.sigma_min;
  const Eigen::Index b = path.kind == PathKind::Mixed ? path.mixed_boundary : x_lr.cols();
  PathSample out{Grid(x_lr.rows(), x_lr.cols()), Grid(x_lr.rows(), x_lr.cols())};
  for (Eigen::Index f = 0; f < x_lr.rows(); ++f) {
    for (Eigen::Index m = 0; m < x_lr.cols(); ++m) {
      const double lo = x_lr(f, m), hi = x_hr(f, m), z = noise(f, m);
      if (m < b) {
        out.x_t(f, m) = (1.0 - t) * lo + t * hi + s * (1.0 - t) * z;
        out.u_t(f, m) = hi - lo - s * z;
      } else {
        out.x_t(f, m) = (1.0 - (1.0 - s) * t) * z + t * hi;
        out.u_t(f, m) = hi - (1.0 - s) * z;
      }
    }
  }
  return out;
}

/// Path state at t = 0.
inline Grid path_source(const Grid& x_lr, const PathConfig& path, const Grid& noise) {
  return sample_path(x_lr, x_lr, 0.0, path, noise).x_t;
}

} // namespace bwe::cfm
