#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace bwe;
using namespace bwe::cfm;

namespace {

Grid filled(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_field(rng, r, c);
}

EstimatorShape small_shape() {
  EstimatorShape s;
  s.mel_bands = 16;
  s.hidden = 12;
  s.time_freqs = 2;
  return s;
}

} // namespace

TEST_CASE("path endpoint at t = 1 is x_hr bit-exactly") {
  const Grid lr = filled(6, 10, 1), hr = filled(6, 10, 2), z = filled(6, 10, 3);
  for (PathKind kind : {PathKind::Adaptive, PathKind::Mixed})
    for (int b : {0, 4, 10}) {
      PathConfig p{kind, 0.0, b};
      CHECK(sample_path(lr, hr, 1.0, p, z).x_t == hr);
    }
}

TEST_CASE("t = 0 Adaptive without noise starts at x_lr") {
  const Grid lr = filled(5, 8, 4), hr = filled(5, 8, 5), z = filled(5, 8, 6);
  const PathSample s = sample_path(lr, hr, 0.0, PathConfig{PathKind::Adaptive, 0.0, 0}, z);
  CHECK(s.x_t == lr);
  CHECK(s.u_t == Grid(hr - lr));
}

TEST_CASE("Mixed boundary cases collapse to the pure paths") {
  const Grid lr = filled(5, 8, 7), hr = filled(5, 8, 8), z = filled(5, 8, 9);
  for (double t : {0.0, 0.3, 0.77}) {
    const PathSample adaptive = sample_path(lr, hr, t, PathConfig{PathKind::Adaptive, 1e-4, 0}, z);
    const PathSample mixed_m = sample_path(lr, hr, t, PathConfig{PathKind::Mixed, 1e-4, 8}, z);
    CHECK(mixed_m.x_t == adaptive.x_t);
    CHECK(mixed_m.u_t == adaptive.u_t);
    const PathSample mixed_0 = sample_path(lr, hr, t, PathConfig{PathKind::Mixed, 1e-4, 0}, z);
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      CHECK(mixed_0.x_t.data()[i] == (1.0 - (1.0 - 1e-4) * t) * z.data()[i] + t * hr.data()[i]);
      CHECK(mixed_0.u_t.data()[i] == hr.data()[i] - (1.0 - 1e-4) * z.data()[i]);
    }
    const PathSample split = sample_path(lr, hr, t, PathConfig{PathKind::Mixed, 1e-4, 3}, z);
    CHECK(split.x_t.leftCols(3) == adaptive.x_t.leftCols(3));
    CHECK(split.x_t.rightCols(5) == mixed_0.x_t.rightCols(5));
  }
}

TEST_CASE("sample_path argument checks") {
  const Grid a = filled(3, 4, 1), b = filled(3, 5, 2);
  CHECK_THROWS_AS(sample_path(a, b, 0.5, {}, a), Error);
  CHECK_THROWS_AS(sample_path(a, a, 1.5, {}, a), Error);
  CHECK_THROWS_AS(sample_path(a, a, 0.5, PathConfig{PathKind::Mixed, 1e-4, 5}, a), Error);
}

TEST_CASE("projection scale examples") {
  const Grid v = filled(4, 6, 11);
  for (double w : {0.0, 0.5, 1.0, 3.0}) {
    CHECK(projection_scale(v, v) == Catch::Approx(1.0));
    CHECK((cfg_zero_star(v, v, w, ScaleMode::Projected) - v).cwiseAbs().maxCoeff() < 1e-12);
  }
  Grid a = Grid::Zero(2, 2), b = Grid::Zero(2, 2);
  a(0, 0) = 2.0;
  b(1, 1) = 5.0;
  CHECK(projection_scale(a, b) == 0.0);
  CHECK(cfg_zero_star(a, b, 0.7, ScaleMode::Projected) == Grid(0.7 * a));
  const Grid vc = 3.0 * v;
  CHECK(projection_scale(vc, v) == Catch::Approx(3.0));
  CHECK((cfg_zero_star(vc, v, 2.0, ScaleMode::Projected) - vc).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projection guard and fixed mode") {
  const Grid v = filled(3, 3, 12);
  const Grid tiny = Grid::Constant(3, 3, 1e-8);
  CHECK(projection_scale(v, tiny) == 1.0);
  CHECK(cfg_zero_star(v, tiny, 0.5, ScaleMode::Projected) == Grid(0.5 * tiny + 0.5 * v));
  const Grid u = filled(3, 3, 13);
  CHECK(cfg_zero_star(v, u, 2.0, ScaleMode::Fixed) == Grid(-1.0 * u + 2.0 * v));
  CHECK_THROWS_AS(cfg_zero_star(v, filled(2, 3, 1), 1.0, ScaleMode::Fixed), Error);
}

TEST_CASE("projection identities on random fields") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> alpha(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    const Grid vc = testing::random_field(rng, 7, 9), vu = testing::random_field(rng, 7, 9);
    const double s = projection_scale(vc, vu);
    const double resid = ((vc - s * vu).array() * vu.array()).sum();
    CHECK(std::abs(resid) <= 1e-9 * vc.norm() * vu.norm());
    CHECK(cfg_zero_star(vc, vu, 1.0, ScaleMode::Projected) == vc);
    const double a = alpha(rng);
    const double sa = projection_scale(vc, a * vu);
    CHECK(std::abs(sa * a - s) <= 1e-9 * std::abs(s) + 1e-15);
    const Grid g0 = cfg_zero_star(vc, vu, 0.4, ScaleMode::Projected);
    const Grid g1 = cfg_zero_star(vc, a * vu, 0.4, ScaleMode::Projected);
    CHECK((g0 - g1).cwiseAbs().maxCoeff() <= 1e-9 * g0.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("estimator gradient matches finite differences on a small shape") {
  const EstimatorParams p = EstimatorParams::init(small_shape(), 5);
  EstimatorParams q = p;
  q.gc.setRandom();
  const FlowBatch batch = testing::random_flow_batch(q, 3, 4, 17);
  for (const auto& r : testing::gradient_check(q, batch, 1000, 3)) {
    INFO(r.tensor);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("zero-output estimator and oracle targets give zero loss") {
  EstimatorParams p = EstimatorParams::zeros(small_shape());
  FlowBatch batch = testing::random_flow_batch(p, 2, 3, 1);
  batch.targets.setZero();
  CHECK(batch_loss(p, batch) == 0.0);
  const LossGradient lg = loss_and_gradient(p, batch);
  CHECK(lg.loss == 0.0);
  lg.grad.for_each_tensor([](const char*, const auto& v) { CHECK(v.cwiseAbs().maxCoeff() == 0.0); });
}

TEST_CASE("velocity shape, control checks and the noise skip at init") {
  const EstimatorParams p = EstimatorParams::init(small_shape(), 9);
  const MlpEstimator est(p);
  const Grid x = filled(5, 16, 1), lr = filled(5, 16, 2), c = Grid::Constant(5, 1, 0.3);
  const Grid v = est.velocity(FlowQuery{x, 0.0, lr, &c, 16});
  CHECK(v.rows() == 5);
  CHECK(v.cols() == 16);
  const Grid bad = Grid::Constant(4, 1, 0.3);
  CHECK_THROWS_AS(est.velocity(FlowQuery{x, 0.0, lr, &bad, 16}), Error);
  // With w3 = 0 the output on noise bands is -x_t plus edge terms (gc = 0 at init).
  EstimatorParams z = p;
  z.w3.setZero();
  const Grid vz = MlpEstimator(z).velocity(FlowQuery{x, 0.0, lr, &c, 8});
  for (Eigen::Index f = 0; f < 5; ++f)
    for (Eigen::Index m = 0; m < 16; ++m) CHECK(vz(f, m) == Catch::Approx(m >= 8 ? -x(f, m) : 0.0).margin(1e-12));
}

TEST_CASE("one Euler step from x_lr") {
  const EstimatorParams p = EstimatorParams::init(small_shape(), 21);
  const MlpEstimator est(p);
  const Grid lr = filled(4, 16, 3), c = Grid::Constant(4, 1, 0.6);
  const PathConfig path{PathKind::Adaptive, 0.0, 0};
  GuidanceConfig g;
  g.w = 1.0;
  const Grid out = restore(est, lr, &c, path, g, SamplerConfig{1, 0});
  const Grid expect = lr + est.velocity(FlowQuery{lr, 0.0, lr, &c, 16});
  CHECK(out == expect);
}

TEST_CASE("w = 1 skips the unconditional branch") {
  struct Counting {
    mutable int uncond = 0;
    Grid velocity(const FlowQuery& q) const {
      if (q.control == nullptr) ++uncond;
      return Grid::Constant(q.x_t.rows(), q.x_t.cols(), q.control ? 1.0 : 2.0);
    }
  };
  Counting m;
  const Grid lr = filled(3, 4, 1), c = Grid::Constant(3, 1, 0.5);
  GuidanceConfig g;
  g.w = 1.0;
  restore(m, lr, &c, PathConfig{PathKind::Adaptive, 0.0, 0}, g, SamplerConfig{3, 0});
  CHECK(m.uncond == 0);
  g.w = 2.0;
  restore(m, lr, &c, PathConfig{PathKind::Adaptive, 0.0, 0}, g, SamplerConfig{3, 0});
  CHECK(m.uncond == 3);
}

TEST_CASE("zero_init steps hold the source") {
  struct One {
    Grid velocity(const FlowQuery& q) const { return Grid::Ones(q.x_t.rows(), q.x_t.cols()); }
  };
  const Grid lr = filled(3, 4, 1);
  GuidanceConfig g;
  g.zero_init_steps = 2;
  const Grid out = restore(One{}, lr, nullptr, PathConfig{PathKind::Adaptive, 0.0, 0}, g, SamplerConfig{4, 0});
  CHECK((out - (lr.array() + 0.5).matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("restore is seed-deterministic and checks the frame count") {
  const MlpEstimator est(EstimatorParams::init(small_shape(), 2));
  const Grid lr = filled(6, 16, 5), c = Grid::Constant(6, 1, 0.2);
  const PathConfig path{PathKind::Mixed, 1e-4, 6};
  GuidanceConfig g;
  g.w = 1.5;
  const Grid a = restore(est, lr, &c, path, g, SamplerConfig{2, 9});
  CHECK(a == restore(est, lr, &c, path, g, SamplerConfig{2, 9}));
  CHECK(a != restore(est, lr, &c, path, g, SamplerConfig{2, 10}));
  const Grid short_c = Grid::Constant(5, 1, 0.2);
  CHECK_THROWS_AS(restore(est, lr, &short_c, path, g, SamplerConfig{1, 0}), Error);
}

TEST_CASE("checkpoint round trip and corruption") {
  FlowModel m;
  m.params = EstimatorParams::init(small_shape(), 4);
  m.mel.bands = 16;
  m.path.sigma_min = 3e-4;
  m.guidance.w = 1.7;
  m.sampler.seed = 99;
  const auto bytes = encode_checkpoint(m);
  const FlowModel back = decode_checkpoint(bytes);
  CHECK(back.params == m.params);
  CHECK(back.guidance.w == 1.7);
  CHECK(back.sampler.seed == 99);
  CHECK(encode_checkpoint(back) == bytes);

  auto bad = bytes;
  bad[4] = 2;
  try {
    decode_checkpoint(bad);
    FAIL("version mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::VersionMismatch);
  }
  bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), Error);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  try {
    decode_checkpoint(bad);
    FAIL("truncated checkpoint accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedCheckpoint);
  }
  bad = bytes;
  bad.push_back(0);
  try {
    decode_checkpoint(bad);
    FAIL("trailing bytes accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedCheckpoint);
  }
}

TEST_CASE("band copy: Nyquist cutoff returns the input") {
  const Spectrogram in = stft(testing::gaussian_clip(1, 8192), StftConfig{}, true);
  const Spectrogram other = stft(testing::gaussian_clip(2, 8192), StftConfig{}, true);
  const Spectrogram out = postprocess_band_copy(other, in, in.nyquist());
  CHECK(out.mags == in.mags);
  CHECK(*out.phases == *in.phases);
}

TEST_CASE("band copy crossfade above the cutoff bin") {
  const Spectrogram in = stft(testing::gaussian_clip(3, 8192), StftConfig{}, true);
  const Spectrogram other = stft(testing::gaussian_clip(4, 8192), StftConfig{}, true);
  const Spectrogram out = postprocess_band_copy(other, in, 4000.0);
  const Eigen::Index kc = cutoff_bin(4000.0, in.bin_hz());
  CHECK(kc == 185);
  for (Eigen::Index f = 0; f < in.frames(); ++f) {
    CHECK(out.mags(f, kc) == in.mags(f, kc));
    CHECK(out.mags(f, kc + 4) == other.mags(f, kc + 4));
    const std::complex<double> z = 0.5 * std::polar(in.mags(f, kc + 2), (*in.phases)(f, kc + 2)) +
                                   0.5 * std::polar(other.mags(f, kc + 2), (*other.phases)(f, kc + 2));
    CHECK(out.mags(f, kc + 2) == Catch::Approx(std::abs(z)).margin(1e-12));
  }
}

TEST_CASE("band copy keeps the low band within 0.5 dB") {
  const AudioClip x = testing::gaussian_clip(5, 44100);
  const Spectrogram in = stft(x, StftConfig{}, true);
  const Spectrogram other = stft(testing::gaussian_clip(6, 44100), StftConfig{}, true);
  const AudioClip y = istft(postprocess_band_copy(other, in, 4000.0), x.size());
  const double total_in = testing::band_energy_above(x.samples, 0.0, 44100.0) -
                          testing::band_energy_above(x.samples, 4000.0, 44100.0);
  const double total_out = testing::band_energy_above(y.samples, 0.0, 44100.0) -
                           testing::band_energy_above(y.samples, 4000.0, 44100.0);
  CHECK(std::abs(10.0 * std::log10(total_out / total_in)) < 0.5);
}

TEST_CASE("zero learning rate leaves the parameters unchanged") {
  const EstimatorParams p = EstimatorParams::init(small_shape(), 8);
  const FlowBatch val = testing::random_flow_batch(p, 2, 3, 2);
  TrainConfig tc;
  tc.steps = 5;
  tc.eval_every = 1;
  tc.adam.lr = 0.0;
  const BatchSource src = [&](std::mt19937_64& rng) { return testing::random_flow_batch(p, 2, 3, rng()); };
  const TrainResult r = train(p, src, val, tc);
  CHECK(r.params == p);
  CHECK(r.curve.size() == 6);
}

TEST_CASE("training lowers the loss and is deterministic") {
  const EstimatorParams p = EstimatorParams::init(small_shape(), 8);
  const FlowBatch val = testing::random_flow_batch(p, 4, 4, 2);
  TrainConfig tc;
  tc.steps = 150;
  tc.eval_every = 10;
  tc.adam.lr = 1e-2;
  const BatchSource src = [&](std::mt19937_64& rng) { return testing::random_flow_batch(p, 4, 4, rng()); };
  const TrainResult a = train(p, src, val, tc);
  const TrainResult b = train(p, src, val, tc);
  CHECK(a.best_val_loss < a.initial_val_loss);
  CHECK(a.params == b.params);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 1; i < a.curve.size(); ++i) CHECK(a.curve[i].train_loss == b.curve[i].train_loss);
}

TEST_CASE("cosine schedule") {
  TrainConfig tc;
  tc.steps = 100;
  tc.adam.lr = 1.0;
  CHECK(learning_rate(tc, 1) == 1.0);
  CHECK(learning_rate(tc, 51) == Catch::Approx(0.5));
  CHECK(learning_rate(tc, 100) < 1e-3);
  tc.schedule = LrSchedule::Constant;
  CHECK(learning_rate(tc, 100) == 1.0);
}

TEST_CASE("non-finite loss is a divergence with the step index") {
  const EstimatorParams p = EstimatorParams::init(small_shape(), 8);
  const FlowBatch val = testing::random_flow_batch(p, 1, 2, 2);
  int calls = 0;
  const BatchSource src = [&](std::mt19937_64& rng) {
    FlowBatch b = testing::random_flow_batch(p, 1, 2, rng());
    if (++calls == 3) b.targets(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return b;
  };
  TrainConfig tc;
  tc.steps = 10;
  try {
    train(p, src, val, tc);
    FAIL("NaN loss accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Divergence);
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}
