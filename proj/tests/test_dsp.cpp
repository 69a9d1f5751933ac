#include <catch_amalgamated.hpp>

#include "support.hpp"

using namespace bwe;

TEST_CASE("STFT framing: 1 + len / hop frames of n_fft / 2 + 1 bins") {
  const AudioClip c = testing::clip_of(std::vector<double>(66150, 0.0));
  const Spectrogram s = stft(c);
  CHECK(s.frames() == 130);
  CHECK(s.bins() == 1025);
  CHECK(s.mags.maxCoeff() == 0.0);
  CHECK(StftConfig{}.frames_for(66150) == 130);
}

TEST_CASE("STFT rejects an empty clip") {
  CHECK_THROWS_AS(stft(AudioClip{}), Error);
}

TEST_CASE("STFT agrees with a brute-force DFT") {
  const auto x = testing::splitmix_noise(3, 3000, 0.5);
  const Spectrogram s = stft(testing::clip_of(x), StftConfig{256, 64});
  const auto ref = testing::naive_stft(x, 256, 64);
  REQUIRE(static_cast<std::size_t>(s.frames()) == ref.size());
  double worst = 0.0;
  for (std::size_t f = 0; f < ref.size(); ++f)
    for (std::size_t k = 0; k < ref[f].size(); ++k)
      worst = std::max(worst, std::abs(s.mags(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) - ref[f][k]));
  CHECK(worst < 1e-10);
}

TEST_CASE("STFT / ISTFT round trip on random clips") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t n = 5000 + seed * 3917;
    const AudioClip c = testing::gaussian_clip(seed, n, 0.4);
    const AudioClip r = istft(stft(c, {}, true), n);
    REQUIRE(r.size() == n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(r.samples[i] - c.samples[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("ISTFT of a zero spectrogram is silent") {
  Spectrogram s = stft(testing::clip_of(std::vector<double>(4096, 0.0)), {}, true);
  const AudioClip r = istft(s);
  CHECK(peak(r) == 0.0);
}

TEST_CASE("periodic Hann window") {
  const auto w = hann_window(8);
  CHECK(w[0] == 0.0);
  CHECK(w[4] == Catch::Approx(1.0));
  CHECK(w[2] == Catch::Approx(0.5));
  CHECK(w[6] == Catch::Approx(0.5));
}

TEST_CASE("Gaussian and median filters") {
  const std::vector<double> x = {0, 0, 1, 0, 0};
  const auto g0 = gaussian_filter_1d(x, 0.0);
  CHECK(g0 == x);
  const auto g = gaussian_filter_1d(x, 1.0);
  double sum = 0.0;
  for (double v : g) sum += v;
  CHECK(sum == Catch::Approx(1.0).epsilon(1e-6));
  CHECK(g[2] > g[1]);
  CHECK(g[1] == Catch::Approx(g[3]));
  const auto m = median_filter_1d(std::vector<double>{5, 1, 9, 2, 7}, 3);
  // half-sample symmetric padding: [5, 5, 1, 9, 2, 7, 7]
  CHECK(m == std::vector<double>{5, 5, 2, 7, 7});
}

TEST_CASE("Slaney mel filterbank matches the numpy oracle") {
  const MelFilterbank fb(MelConfig{}, StftConfig{}, 44100.0);
  struct Row { int band; double center, rowsum; int argmax; double max; };
  // tests/oracles/dsp_oracle.py
  const Row rows[] = {
      {0, 31.003862861740245, 0.04210659474405812, 1, 0.02240149603543193},
      {10, 341.0424914791427, 0.04832970681865558, 16, 0.02862460811002939},
      {64, 2849.1045455842086, 0.04635295954009202, 132, 0.0101526850462154},
      {127, 21356.13477974333, 0.04643766330188367, 992, 0.0014541052819373275},
  };
  for (const auto& r : rows) {
    Eigen::Index arg = 0;
    const double mx = fb.weights().row(r.band).maxCoeff(&arg);
    CHECK(fb.centers()[static_cast<std::size_t>(r.band)] == Catch::Approx(r.center).epsilon(1e-12));
    CHECK(fb.weights().row(r.band).sum() == Catch::Approx(r.rowsum).epsilon(1e-12));
    CHECK(arg == r.argmax);
    CHECK(mx == Catch::Approx(r.max).epsilon(1e-12));
  }
}

TEST_CASE("log-mel of seeded noise matches the numpy oracle") {
  const MelSpectrogram m = mel_project(stft(testing::clip_of(testing::splitmix_noise(5, 22050, 0.5))));
  REQUIRE(m.frames() == 44);
  REQUIRE(m.bands() == 128);
  CHECK(m.values(10, 0) == Catch::Approx(-1.6095560095891988).epsilon(1e-9));
  CHECK(m.values(10, 50) == Catch::Approx(-1.62881699026938).epsilon(1e-9));
  CHECK(m.values(10, 127) == Catch::Approx(-1.0223218856128715).epsilon(1e-9));
}

TEST_CASE("mel of silence sits at the log floor and inverts to near silence") {
  const MelSpectrogram m = mel_project(stft(testing::clip_of(std::vector<double>(22050, 0.0))));
  CHECK(m.values.maxCoeff() == Catch::Approx(std::log(1e-5)));
  const AudioClip r = mel_invert(m, StftConfig{}, 8);
  CHECK(rms(r) < 1e-4);
}

TEST_CASE("mel inversion of a harmonic tone") {
  const StftConfig cfg;
  AudioClip a = testing::sine(440.0, 1.0, 0.4);
  const AudioClip b = testing::sine(880.0, 1.0, 0.2), c = testing::sine(1320.0, 1.0, 0.1);
  for (std::size_t i = 0; i < a.size(); ++i) a.samples[i] += b.samples[i] + c.samples[i];
  const AudioClip r = mel_invert(mel_project(stft(a, cfg)), cfg, 60);
  CHECK(lsd(a, r) < 1.5);
}

TEST_CASE("mel_to_linear returns nonnegative magnitudes that reproduce the mel") {
  const AudioClip a = testing::gaussian_clip(4, 8192, 0.3);
  const MelFilterbank fb(MelConfig{}, StftConfig{}, 44100.0);
  const MelSpectrogram m = mel_project(stft(a), fb);
  const Grid mags = mel_to_linear(m, fb, 200);
  CHECK(mags.minCoeff() >= 0.0);
  Spectrogram s = stft(a);
  s.mags = mags;
  const MelSpectrogram back = mel_project(s, fb);
  CHECK((back.values - m.values).cwiseAbs().mean() < 0.1);
}
