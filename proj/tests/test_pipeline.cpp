#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace bwe;

namespace {

ControlSignal flat_control(Eigen::Index frames, double hz) {
  ControlSignal c;
  c.values = Eigen::MatrixXd::Constant(1, frames, hz);
  c.feature_names = {"dsc"};
  return c;
}

} // namespace

TEST_CASE("conform_control accepts two frames of slack") {
  const StftConfig stft;
  CHECK(conform_control(flat_control(130, 5000.0), 130, stft, 44100.0, 1).frames() == 130);
  for (Eigen::Index n : {128, 129, 131, 132}) {
    const ControlSignal c = conform_control(flat_control(n, 5000.0), 130, stft, 44100.0, 1);
    CHECK(c.frames() == 130);
    CHECK(c.values.minCoeff() == Catch::Approx(5000.0));
  }
  for (Eigen::Index n : {127, 133}) {
    try {
      conform_control(flat_control(n, 5000.0), 130, stft, 44100.0, 1);
      FAIL("accepted " << n << " frames");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedControl);
    }
  }
}

TEST_CASE("conform_control rejects bad framing and values") {
  const StftConfig stft;
  ControlSignal c = flat_control(130, 5000.0);
  c.hop = 256;
  CHECK_THROWS_AS(conform_control(c, 130, stft, 44100.0, 1), Error);
  c = flat_control(130, 5000.0);
  c.values(0, 3) = -1.0;
  CHECK_THROWS_AS(conform_control(c, 130, stft, 44100.0, 1), Error);
  CHECK_THROWS_AS(conform_control(flat_control(130, 5000.0), 130, stft, 44100.0, 2), Error);
}

TEST_CASE("normalized control clamps to [0, 1]") {
  ControlSignal c = flat_control(3, 0.0);
  c.values << 0.0, 11025.0, 30000.0;
  const Grid g = normalized_control(c);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == 0.5);
  CHECK(g(2, 0) == 1.0);
}

TEST_CASE("mixed boundary tracks the cutoff") {
  const Analysis a;
  const MelFilterbank fb = a.filterbank();
  CHECK(mixed_boundary(fb, 22050.0) == 128);
  const int b4 = mixed_boundary(fb, 4000.0), b8 = mixed_boundary(fb, 8000.0);
  CHECK(b4 > 0);
  CHECK(b4 < b8);
  CHECK(fb.centers()[static_cast<std::size_t>(b4)] == Catch::Approx(4000.0).margin(200.0));
}

TEST_CASE("subsample_frames draws distinct frames in time order") {
  cfm::FlowItem it;
  it.x_lr.resize(10, 2);
  it.x_hr.resize(10, 2);
  it.control = Grid(10, 1);
  for (int f = 0; f < 10; ++f) {
    it.x_lr.row(f).setConstant(f);
    it.x_hr.row(f).setConstant(100 + f);
    (*it.control)(f, 0) = 0.01 * f;
  }
  it.boundary = 7;
  std::mt19937_64 rng(3);
  const cfm::FlowItem s = subsample_frames(it, 4, rng);
  REQUIRE(s.x_lr.rows() == 4);
  CHECK(s.boundary == 7);
  for (int r = 0; r < 4; ++r) {
    const double f = s.x_lr(r, 0);
    CHECK(s.x_hr(r, 1) == 100 + f);
    CHECK((*s.control)(r, 0) == 0.01 * f);
    if (r > 0) CHECK(f > s.x_lr(r - 1, 0));
  }
  CHECK(subsample_frames(it, 10, rng).x_lr == it.x_lr);
}

TEST_CASE("training data preparation") {
  CorpusConfig cc;
  cc.n_clips = 10;
  cc.clip_seconds = 0.5;
  const auto corpus = generate(cc);
  DataConfig dc;
  dc.variants_per_clip = 2;
  const TrainingData d = prepare_training_data(corpus, Analysis{}, dc);
  CHECK(d.train.size() == 8);
  CHECK(d.valid.size() == 1);
  for (const auto& t : d.train) {
    CHECK(t.x_lr.size() == 2);
    CHECK(t.x_hr.cols() == 128);
    CHECK(t.control.rows() == t.x_hr.rows());
    CHECK(t.control.maxCoeff() <= 1.0);
    for (std::size_t v = 0; v < 2; ++v) CHECK(same_shape(t.x_lr[v], t.x_hr));
  }
}

TEST_CASE("restore with an untrained model is deterministic and shape-preserving") {
  cfm::FlowModel model = testing::untrained_model();
  // Generated bands land near the log floor, so the output stays unclipped.
  model.params.w3.setZero();
  model.params.b3.setConstant(-11.0 / cfm::kOutputScale);
  CorpusConfig cc;
  cc.clip_seconds = 0.5;
  const AudioClip clean = generate_clip(cc, 0).audio;
  DegradationSpec spec;
  spec.family = FilterFamily::BrickWall;
  spec.cutoff_hz = 4000.0;
  const AudioClip deg = apply_degradation(clean, spec);
  RestoreOptions opt = default_restore_options(model);
  opt.cutoff_hz = 4000.0;
  opt.gl_iters = 4;
  opt.nnls_iters = 20;
  const ControlSignal target = extract_control(model, clean);
  const GuidedRestore a = guided_restore(model, deg, target, 0.5, opt);
  const GuidedRestore b = guided_restore(model, deg, target, 0.5, opt);
  CHECK(a.result.audio.samples == b.result.audio.samples);
  CHECK(a.adherence == b.adherence);
  CHECK(a.result.audio.size() == deg.size());
  CHECK(a.result.boundary == mixed_boundary(Analysis{}.filterbank(), 4000.0));
  CHECK(a.target.values == scale_control(target, 0.5).values);
  CHECK(a.adherence == adherence(a.target, a.result.audio, model.feature, model.dsc));
  REQUIRE(a.result.clipped_samples == 0);
  // The band below the cutoff comes from the input.
  const double lo_in = testing::band_energy_above(deg.samples, 0.0, 44100.0) -
                       testing::band_energy_above(deg.samples, 3900.0, 44100.0);
  const double lo_out = testing::band_energy_above(a.result.audio.samples, 0.0, 44100.0) -
                        testing::band_energy_above(a.result.audio.samples, 3900.0, 44100.0);
  CHECK(std::abs(10.0 * std::log10(lo_out / lo_in)) < 0.5);
}

TEST_CASE("restore rejects sample-rate and control mismatches") {
  const cfm::FlowModel model = testing::untrained_model();
  const AudioClip x = testing::gaussian_clip(1, 22050);
  RestoreOptions opt = default_restore_options(model);
  opt.cutoff_hz = 4000.0;
  try {
    restore_audio(model, x, flat_control(30, 4000.0), opt);
    FAIL("short control accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MalformedControl);
  }
  const AudioClip other = testing::gaussian_clip(1, 16000, 0.3, 16000.0);
  CHECK_THROWS_AS(restore_audio(model, other, flat_control(32, 4000.0), opt), Error);
}

TEST_CASE("benchmark protocol on two clips") {
  BenchmarkConfig bc;
  CHECK(benchmark_spec(bc, 0).family == FilterFamily::Fir);
  CHECK(benchmark_spec(bc, 0).order == 255);
  CHECK(benchmark_spec(bc, 2).family == FilterFamily::ChebyshevI);
  CHECK(benchmark_spec(bc, 2).ripple_db == 1.0);
  CHECK(benchmark_spec(bc, 7).family == FilterFamily::BrickWall);

  const cfm::FlowModel model = testing::untrained_model();
  CorpusConfig cc;
  cc.n_clips = 2;
  cc.clip_seconds = 0.4;
  RestoreOptions opt = default_restore_options(model);
  opt.gl_iters = 2;
  opt.nnls_iters = 10;
  int seen = 0;
  const BenchmarkReport r = run_benchmark(model, generate(cc), bc, opt, [&](const BenchmarkClip&) { ++seen; });
  CHECK(seen == 2);
  CHECK(r.clips.size() == 2);
  CHECK(r.restored.clips.size() == 2);
  CHECK(r.lsd_wins <= 2);
  const std::string csv = metric_report_csv(r.restored);
  CHECK(csv.rfind("id,lsd_db,", 0) == 0);
  CHECK(csv.find("aggregate,") != std::string::npos);
}
