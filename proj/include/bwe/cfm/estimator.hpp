#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "../error.hpp"
#include "../grid.hpp"

namespace bwe::cfm {

/// Inputs to one evaluation of the vector field. `control` is F x m with
/// values normalized to [0, 1] (Hz / Nyquist); nullptr is the null condition.
/// Bands >= `noise_from` start from Gaussian noise on the path.
struct FlowQuery {
  const Grid& x_t;
  double t;
  const Grid& x_lr;
  const Grid* control;
  int noise_from = std::numeric_limits<int>::max();
};

/// Anything that maps a flow query to an F x M velocity grid.
template <class M>
concept VelocityField = requires(const M& model, const FlowQuery& q) {
  { model.velocity(q) } -> std::convertible_to<Grid>;
};

struct EstimatorShape {
  int mel_bands = 128;
  int control_dims = 1;
  int hidden = 256;
  int time_freqs = 4;

  /// [x_t | x_lr | source mask | time features | control | edge features | null flag]
  int input_dim() const { return 4 * mel_bands + 2 * time_freqs + control_dims + 1; }
  int time_basis() const { return 2 * time_freqs + 1; }
  int time_row() const { return 3 * mel_bands; }
  int control_row() const { return time_row() + 2 * time_freqs; }
  int edge_row() const { return control_row() + control_dims; }

  bool operator==(const EstimatorShape&) const = default;
};

// Fixed affine maps around the learned layers: log-mel inputs are centered
// and scaled, outputs are scaled up to the velocity range.
inline constexpr double kInputShift = -4.0;
inline constexpr double kInputScale = 0.25;
inline constexpr double kOutputScale = 4.0;
/// Slope of the per-band edge encoding tanh(k (c - anchor)).
inline constexpr double kEdgeSharpness = 40.0;

/// Weights of the per-frame network: two GELU hidden layers and a linear
/// output, plus per-band skips whose gains are linear in the time basis
/// [1, sin/cos features]: `ga` on the raw x_t of noise-source bands, `gc` on
/// the edge features. `anchors` (normalized band centers) are fixed, not
/// trained.
struct EstimatorParams {
  EstimatorShape shape;
  Eigen::MatrixXd w1, w2, w3, ga, gc;
  Eigen::VectorXd b1, b2, b3;
  Eigen::VectorXd anchors;

  static EstimatorParams zeros(const EstimatorShape& s) {
    EstimatorParams p;
    p.shape = s;
    p.w1 = Eigen::MatrixXd::Zero(s.hidden, s.input_dim());
    p.b1 = Eigen::VectorXd::Zero(s.hidden);
    p.w2 = Eigen::MatrixXd::Zero(s.hidden, s.hidden);
    p.b2 = Eigen::VectorXd::Zero(s.hidden);
    p.w3 = Eigen::MatrixXd::Zero(s.mel_bands, s.hidden);
    p.b3 = Eigen::VectorXd::Zero(s.mel_bands);
    p.ga = Eigen::MatrixXd::Zero(s.mel_bands, s.time_basis());
    p.gc = Eigen::MatrixXd::Zero(s.mel_bands, s.time_basis());
    p.anchors = Eigen::VectorXd::LinSpaced(s.mel_bands, 0.0, 1.0);
    return p;
  }

  /// LeCun-normal hidden layers, a small output layer, and a noise-source
  /// skip that starts at -x_t (the step lands on the network output).
  /// `anchors` must hold one value per band.
  static EstimatorParams init(const EstimatorShape& s, std::uint64_t seed, const std::vector<double>& anchors = {}) {
    EstimatorParams p = zeros(s);
    if (!anchors.empty()) {
      require(static_cast<int>(anchors.size()) == s.mel_bands, ErrorKind::ShapeMismatch,
              "estimator: need one anchor per band");
      for (int m = 0; m < s.mel_bands; ++m) p.anchors(m) = anchors[static_cast<std::size_t>(m)];
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto fill = [&](Eigen::MatrixXd& w, double stddev) {
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = stddev * gauss(rng);
    };
    fill(p.w1, 1.0 / std::sqrt(static_cast<double>(s.input_dim())));
    fill(p.w2, 1.0 / std::sqrt(static_cast<double>(s.hidden)));
    fill(p.w3, 0.1 / std::sqrt(static_cast<double>(s.hidden)));
    p.ga.col(0).setConstant(-1.0);
    return p;
  }

  /// Visits (name, flat view) for every trainable tensor in a fixed order.
  template <class F>
  void for_each_tensor(F&& fn) {
    fn("w1", Eigen::Map<Eigen::VectorXd>(w1.data(), w1.size()));
    fn("b1", Eigen::Map<Eigen::VectorXd>(b1.data(), b1.size()));
    fn("w2", Eigen::Map<Eigen::VectorXd>(w2.data(), w2.size()));
    fn("b2", Eigen::Map<Eigen::VectorXd>(b2.data(), b2.size()));
    fn("w3", Eigen::Map<Eigen::VectorXd>(w3.data(), w3.size()));
    fn("b3", Eigen::Map<Eigen::VectorXd>(b3.data(), b3.size()));
    fn("ga", Eigen::Map<Eigen::VectorXd>(ga.data(), ga.size()));
    fn("gc", Eigen::Map<Eigen::VectorXd>(gc.data(), gc.size()));
  }

  template <class F>
  void for_each_tensor(F&& fn) const {
    fn("w1", Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size()));
    fn("b1", Eigen::Map<const Eigen::VectorXd>(b1.data(), b1.size()));
    fn("w2", Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size()));
    fn("b2", Eigen::Map<const Eigen::VectorXd>(b2.data(), b2.size()));
    fn("w3", Eigen::Map<const Eigen::VectorXd>(w3.data(), w3.size()));
    fn("b3", Eigen::Map<const Eigen::VectorXd>(b3.data(), b3.size()));
    fn("ga", Eigen::Map<const Eigen::VectorXd>(ga.data(), ga.size()));
    fn("gc", Eigen::Map<const Eigen::VectorXd>(gc.data(), gc.size()));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const char*, const auto& v) { n += static_cast<std::size_t>(v.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = anchors.allFinite();
    for_each_tensor([&](const char*, const auto& v) { ok = ok && v.allFinite(); });
    return ok;
  }

  bool operator==(const EstimatorParams& o) const {
    return shape == o.shape && w1 == o.w1 && w2 == o.w2 && w3 == o.w3 && b1 == o.b1 && b2 == o.b2 && b3 == o.b3 &&
           ga == o.ga && gc == o.gc && anchors == o.anchors;
  }
};

namespace estimator_detail {

constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

inline double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z))); }

inline double gelu_grad(double z) {
  const double th = std::tanh(kGeluC * (z + kGeluA * z * z * z));
  return 0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

} // namespace estimator_detail

/// Writes the per-frame input features of one query into columns
/// [col0, col0 + F) of `X` (input_dim x N).
inline void assemble_inputs(const EstimatorParams& p, const FlowQuery& q, Eigen::MatrixXd& X, Eigen::Index col0) {
  const EstimatorShape& s = p.shape;
  const Eigen::Index F = q.x_t.rows();
  require(q.x_t.cols() == s.mel_bands && same_shape(q.x_t, q.x_lr), ErrorKind::ShapeMismatch,
          "estimator: mel grid shape does not match the model");
  if (q.control != nullptr)
    require(q.control->rows() == F && q.control->cols() == s.control_dims, ErrorKind::ShapeMismatch,
            "estimator: control shape does not match the model");
  const int M = s.mel_bands;
  const bool has_control = q.control != nullptr && s.control_dims > 0;
  for (Eigen::Index f = 0; f < F; ++f) {
    auto col = X.col(col0 + f);
    for (int m = 0; m < M; ++m) {
      col(m) = (q.x_t(f, m) - kInputShift) * kInputScale;
      col(M + m) = (q.x_lr(f, m) - kInputShift) * kInputScale;
      col(2 * M + m) = m >= q.noise_from ? 1.0 : 0.0;
    }
    Eigen::Index r = s.time_row();
    for (int k = 0; k < s.time_freqs; ++k) {
      const double a = std::numbers::pi * std::ldexp(1.0, k) * q.t;
      col(r++) = std::sin(a);
      col(r++) = std::cos(a);
    }
    for (int c = 0; c < s.control_dims; ++c) col(r++) = has_control ? (*q.control)(f, c) : 0.0;
    for (int m = 0; m < M; ++m)
      col(r++) = has_control ? std::tanh(kEdgeSharpness * ((*q.control)(f, 0) - p.anchors(m))) : 0.0;
    col(r++) = has_control ? 0.0 : 1.0;
  }
}

/// Activations kept for the backward pass.
struct ForwardCache {
  Eigen::MatrixXd z1, a1, z2, a2, basis, gated_x, out;
};

inline ForwardCache forward(const EstimatorParams& p, const Eigen::MatrixXd& X) {
  using estimator_detail::gelu;
  const EstimatorShape& s = p.shape;
  const int M = s.mel_bands;
  ForwardCache c;
  c.z1 = (p.w1 * X).colwise() + p.b1;
  c.a1 = c.z1.unaryExpr([](double z) { return gelu(z); });
  c.z2 = (p.w2 * c.a1).colwise() + p.b2;
  c.a2 = c.z2.unaryExpr([](double z) { return gelu(z); });
  c.basis.resize(s.time_basis(), X.cols());
  c.basis.row(0).setOnes();
  c.basis.bottomRows(2 * s.time_freqs) = X.middleRows(s.time_row(), 2 * s.time_freqs);
  c.gated_x = ((X.topRows(M).array() / kInputScale + kInputShift) * X.middleRows(2 * M, M).array()).matrix();
  c.out = kOutputScale * (((p.w3 * c.a2).colwise() + p.b3) +
                          (p.gc * c.basis).cwiseProduct(X.middleRows(s.edge_row(), M))) +
          (p.ga * c.basis).cwiseProduct(c.gated_x);
  return c;
}

/// Parameter gradients given dL/d(out) for every column.
inline void backward(const EstimatorParams& p, const Eigen::MatrixXd& X, const ForwardCache& c,
                     const Eigen::MatrixXd& d_out, EstimatorParams& grad) {
  using estimator_detail::gelu_grad;
  const int M = p.shape.mel_bands;
  const Eigen::MatrixXd g3 = kOutputScale * d_out;
  grad.w3 = g3 * c.a2.transpose();
  grad.b3 = g3.rowwise().sum();
  grad.ga = d_out.cwiseProduct(c.gated_x) * c.basis.transpose();
  grad.gc = g3.cwiseProduct(X.middleRows(p.shape.edge_row(), M)) * c.basis.transpose();
  const Eigen::MatrixXd g2 =
      (p.w3.transpose() * g3).cwiseProduct(c.z2.unaryExpr([](double z) { return gelu_grad(z); }));
  grad.w2 = g2 * c.a1.transpose();
  grad.b2 = g2.rowwise().sum();
  const Eigen::MatrixXd g1 =
      (p.w2.transpose() * g2).cwiseProduct(c.z1.unaryExpr([](double z) { return gelu_grad(z); }));
  grad.w1 = g1 * X.transpose();
  grad.b1 = g1.rowwise().sum();
}

/// Per-frame vector-field estimator.
class MlpEstimator {
public:
  explicit MlpEstimator(EstimatorParams params) : params_(std::move(params)) {}

  const EstimatorParams& params() const { return params_; }
  const EstimatorShape& shape() const { return params_.shape; }

  Grid velocity(const FlowQuery& q) const {
    Eigen::MatrixXd X(params_.shape.input_dim(), q.x_t.rows());
    assemble_inputs(params_, q, X, 0);
    const ForwardCache c = forward(params_, X);
    return c.out.transpose();
  }

private:
  EstimatorParams params_;
};

static_assert(VelocityField<MlpEstimator>);

} // namespace bwe::cfm
