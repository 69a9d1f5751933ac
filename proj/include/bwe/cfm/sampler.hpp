#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "../error.hpp"
#include "../grid.hpp"
#include "estimator.hpp"
#include "guidance.hpp"
#include "path.hpp"

namespace bwe::cfm {

struct SamplerConfig {
  int steps = 1;
  std::uint64_t seed = 0;
};

inline void validate(const SamplerConfig& s) { require(s.steps >= 1, "sampler: steps must be >= 1"); }

inline Grid standard_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Grid g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
  return g;
}

/// Guided velocity at (x, t). With w == 1 the unconditional branch is skipped.
template <VelocityField V>
Grid guided_velocity(const V& model, const Grid& x, double t, const Grid& x_lr, const Grid* control,
                     const GuidanceConfig& g, int noise_from = std::numeric_limits<int>::max()) {
  const Grid v_cond = model.velocity(FlowQuery{x, t, x_lr, control, noise_from});
  if (g.w == 1.0 || control == nullptr) return v_cond;
  const Grid v_uncond = model.velocity(FlowQuery{x, t, x_lr, nullptr, noise_from});
  return cfg_zero_star(v_cond, v_uncond, g.w, g.s_mode);
}

/// Euler integration from the path source at t = 0 to t = 1.
template <VelocityField V>
Grid restore(const V& model, const Grid& x_lr, const Grid* control, const PathConfig& path,
             const GuidanceConfig& guidance, const SamplerConfig& sampler) {
  validate(path, x_lr.cols());
  validate(guidance);
  validate(sampler);
  if (control != nullptr)
    require(control->rows() == x_lr.rows(), ErrorKind::ShapeMismatch,
            "restore: control has " + std::to_string(control->rows()) + " frames, input has " +
                std::to_string(x_lr.rows()));

  const Grid noise = standard_normal(x_lr.rows(), x_lr.cols(), sampler.seed);
  Grid x = path_source(x_lr, path, noise);
  const int noise_from = path.kind == PathKind::Mixed ? path.mixed_boundary : static_cast<int>(x_lr.cols());
  const double dt = 1.0 / sampler.steps;
  for (int k = 0; k < sampler.steps; ++k) {
    if (k < guidance.zero_init_steps) continue;
    const double t = static_cast<double>(k) / sampler.steps;
    x += dt * guided_velocity(model, x, t, x_lr, control, guidance, noise_from);
  }
  return x;
}

} // namespace bwe::cfm
