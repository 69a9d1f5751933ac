#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../grid.hpp"
#include "estimator.hpp"
#include "path.hpp"

namespace bwe::cfm {

/// One training pair. `control` is F x m, normalized to [0, 1]; `boundary`
/// is the mel band where the Mixed path switches to the noise source.
struct FlowItem {
  Grid x_lr;
  Grid x_hr;
  std::optional<Grid> control;
  int boundary = 0;
};

/// Column-per-frame regression batch: inputs (input_dim x N) and target
/// velocities (M x N).
struct FlowBatch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  Eigen::Index columns() const { return inputs.cols(); }
};

/// Draws t ~ U(0,1), noise and the condition dropout for each item and
/// stacks the resulting frames.
inline FlowBatch make_flow_batch(const EstimatorParams& model, const std::vector<FlowItem>& items, const PathConfig& path,
                                 double cond_dropout_p, std::mt19937_64& rng) {
  require(!items.empty(), "cfm: batch must not be empty");
  const EstimatorShape& shape = model.shape;
  Eigen::Index total = 0;
  for (const auto& it : items) total += it.x_lr.rows();
  FlowBatch batch{Eigen::MatrixXd(shape.input_dim(), total), Eigen::MatrixXd(shape.mel_bands, total)};

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Index col = 0;
  for (const auto& it : items) {
    const double t = unit(rng);
    const bool drop = unit(rng) < cond_dropout_p;
    Grid noise(it.x_lr.rows(), it.x_lr.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gauss(rng);
    PathConfig p = path;
    p.mixed_boundary = it.boundary;
    const PathSample s = sample_path(it.x_lr, it.x_hr, t, p, noise);
    const Grid* control = (drop || !it.control) ? nullptr : &*it.control;
    const int noise_from = p.kind == PathKind::Mixed ? p.mixed_boundary : static_cast<int>(it.x_lr.cols());
    assemble_inputs(model, FlowQuery{s.x_t, t, it.x_lr, control, noise_from}, batch.inputs, col);
    batch.targets.middleCols(col, s.u_t.rows()) = s.u_t.transpose();
    col += s.u_t.rows();
  }
  return batch;
}

struct LossGradient {
  double loss = 0.0;
  EstimatorParams grad;
};

/// Mean squared error over all frames and bands.
inline double batch_loss(const EstimatorParams& p, const FlowBatch& batch) {
  const ForwardCache c = forward(p, batch.inputs);
  return (c.out - batch.targets).squaredNorm() / static_cast<double>(batch.targets.size());
}

inline LossGradient loss_and_gradient(const EstimatorParams& p, const FlowBatch& batch) {
  const ForwardCache c = forward(p, batch.inputs);
  const Eigen::MatrixXd resid = c.out - batch.targets;
  const double n = static_cast<double>(batch.targets.size());
  LossGradient out;
  out.loss = resid.squaredNorm() / n;
  out.grad = EstimatorParams::zeros(p.shape);
  backward(p, batch.inputs, c, (2.0 / n) * resid, out.grad);
  return out;
}

inline LossGradient cfm_loss(const EstimatorParams& p, const std::vector<FlowItem>& items, const PathConfig& path,
                             double cond_dropout_p, std::mt19937_64& rng) {
  return loss_and_gradient(p, make_flow_batch(p, items, path, cond_dropout_p, rng));
}

/// Calls fn with a pointer-to-member for every tensor.
template <class F>
void for_each_member(F&& fn) {
  fn(&EstimatorParams::w1);
  fn(&EstimatorParams::b1);
  fn(&EstimatorParams::w2);
  fn(&EstimatorParams::b2);
  fn(&EstimatorParams::w3);
  fn(&EstimatorParams::b3);
  fn(&EstimatorParams::ga);
  fn(&EstimatorParams::gc);
}

struct AdamConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  Adam(const EstimatorShape& shape, AdamConfig cfg)
      : cfg_(cfg), m_(EstimatorParams::zeros(shape)), v_(EstimatorParams::zeros(shape)) {}

  void step(EstimatorParams& params, const EstimatorParams& grad) { step(params, grad, cfg_.lr); }

  void step(EstimatorParams& params, const EstimatorParams& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr_t = lr * std::sqrt(c2) / c1;
    for_each_member([&](auto member) {
      auto m = (m_.*member).array();
      auto v = (v_.*member).array();
      const auto g = (grad.*member).array();
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
      (params.*member).array() -= lr_t * m / (v.sqrt() + cfg_.eps);
    });
  }

  long long steps_taken() const { return t_; }

private:
  AdamConfig cfg_;
  EstimatorParams m_, v_;
  long long t_ = 0;
};

enum class LrSchedule { Constant, Cosine };

inline const char* to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "cosine"; }

inline LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "cosine") return LrSchedule::Cosine;
  throw Error(ErrorKind::InvalidArgument, "unknown lr schedule '" + s + "'");
}

struct TrainConfig {
  int steps = 2000;
  int batch_size = 32;
  int frames_per_item = 32; // 0 takes every frame of an item
  int eval_every = 100;
  std::uint64_t seed = 7;
  LrSchedule schedule = LrSchedule::Cosine;
  AdamConfig adam;
};

/// Learning rate for 1-based `step`; cosine decays to zero at the last step.
inline double learning_rate(const TrainConfig& c, int step) {
  if (c.schedule == LrSchedule::Constant || c.steps <= 1) return c.adam.lr;
  return 0.5 * c.adam.lr * (1.0 + std::cos(std::numbers::pi * (step - 1) / c.steps));
}

inline void validate(const TrainConfig& c) {
  require(c.steps >= 0, "train: steps must be >= 0");
  require(c.batch_size >= 1, "train: batch_size must be >= 1");
  require(c.frames_per_item >= 0, "train: frames_per_item must be >= 0");
  require(c.eval_every >= 1, "train: eval_every must be >= 1");
  require(c.adam.lr >= 0.0 && std::isfinite(c.adam.lr), "train: lr must be a finite value >= 0");
}

struct LossPoint {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  EstimatorParams params;
  std::vector<LossPoint> curve;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  int best_step = 0;
};

/// Draws one training batch from the shared generator.
using BatchSource = std::function<FlowBatch(std::mt19937_64&)>;

/// Adam on minibatches from `source`; returns the parameters with the lowest
/// loss on the fixed `validation` batch (step 0 included).
inline TrainResult train(EstimatorParams init, const BatchSource& source, const FlowBatch& validation,
                         const TrainConfig& cfg, const std::function<void(const LossPoint&)>& on_eval = {}) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.initial_val_loss = batch_loss(init, validation);
  require(std::isfinite(result.initial_val_loss), ErrorKind::Divergence, "train: initial validation loss is not finite");
  result.best_val_loss = result.initial_val_loss;
  result.params = init;
  result.curve.push_back(LossPoint{0, std::numeric_limits<double>::quiet_NaN(), result.initial_val_loss});

  EstimatorParams params = std::move(init);
  Adam adam(params.shape, cfg.adam);
  for (int step = 1; step <= cfg.steps; ++step) {
    const FlowBatch batch = source(rng);
    const LossGradient lg = loss_and_gradient(params, batch);
    if (!std::isfinite(lg.loss))
      throw Error(ErrorKind::Divergence, "train: loss diverged at step " + std::to_string(step));
    adam.step(params, lg.grad, learning_rate(cfg, step));
    LossPoint point{step, lg.loss};
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      point.val_loss = batch_loss(params, validation);
      if (!std::isfinite(point.val_loss))
        throw Error(ErrorKind::Divergence, "train: validation loss diverged at step " + std::to_string(step));
      if (point.val_loss < result.best_val_loss) {
        result.best_val_loss = point.val_loss;
        result.best_step = step;
        result.params = params;
      }
      if (on_eval) on_eval(point);
    }
    result.curve.push_back(point);
  }
  return result;
}

} // namespace bwe::cfm
