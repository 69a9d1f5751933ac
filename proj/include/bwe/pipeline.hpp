#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "audio.hpp"
#include "cfm/checkpoint.hpp"
#include "cfm/estimator.hpp"
#include "cfm/postprocess.hpp"
#include "cfm/sampler.hpp"
#include "cfm/train.hpp"
#include "corpus.hpp"
#include "degradation.hpp"
#include "dsp.hpp"
#include "features.hpp"
#include "mel.hpp"
#include "metrics.hpp"

namespace bwe {

/// Control tracks as an F x m grid of Hz / Nyquist values clamped to [0, 1].
inline Grid normalized_control(const ControlSignal& c) {
  Grid g(c.frames(), c.features());
  const double nyq = c.nyquist();
  for (Eigen::Index i = 0; i < c.features(); ++i)
    for (Eigen::Index f = 0; f < c.frames(); ++f) g(f, i) = std::clamp(c.values(i, f) / nyq, 0.0, 1.0);
  return g;
}

inline constexpr Eigen::Index kFrameSlack = 2;

/// Accepts a control whose frame count is within two frames of `frames`
/// (linearly resampled); anything else is a malformed control.
inline ControlSignal conform_control(const ControlSignal& c, Eigen::Index frames, const StftConfig& stft,
                                     double sample_rate, Eigen::Index features) {
  require(c.features() == features, ErrorKind::MalformedControl,
          "control: expected " + std::to_string(features) + " feature track(s), got " + std::to_string(c.features()));
  require(c.hop == stft.hop && c.n_fft == stft.n_fft && c.sample_rate == sample_rate, ErrorKind::MalformedControl,
          "control: framing (sample_rate, hop, n_fft) does not match the audio analysis");
  for (Eigen::Index i = 0; i < c.values.size(); ++i)
    require(std::isfinite(c.values.data()[i]) && c.values.data()[i] >= 0.0, ErrorKind::MalformedControl,
            "control: values must be finite and nonnegative");
  const Eigen::Index diff = c.frames() > frames ? c.frames() - frames : frames - c.frames();
  require(diff <= kFrameSlack, ErrorKind::MalformedControl,
          "control: " + std::to_string(c.frames()) + " frames, audio has " + std::to_string(frames));
  return diff == 0 ? c : resample_frames(c, frames);
}

/// Mel band where the Mixed path switches to the noise source for a given
/// cutoff; M when the cutoff is at or above the mel range.
inline int mixed_boundary(const MelFilterbank& fb, double cutoff_hz) {
  if (cutoff_hz >= fb.config().f_max) return fb.bands();
  return fb.nearest_band(cutoff_hz);
}

// ---------------------------------------------------------------------------
// Training data

struct DataConfig {
  DegradationSamplerConfig degradation;
  int variants_per_clip = 4;
};

inline void validate(const DataConfig& c) {
  validate(c.degradation);
  require(c.variants_per_clip >= 1, "data: variants_per_clip must be >= 1");
}

/// Clean targets of one clip and a pool of degraded inputs for it.
struct TrainingClip {
  std::string id;
  Grid x_hr;
  Grid control;
  std::vector<Grid> x_lr;
  std::vector<int> boundary;
  std::vector<DegradationSpec> specs;
};

/// Analysis shared by training and restoration.
struct Analysis {
  StftConfig stft;
  MelConfig mel;
  Feature feature = Feature::Dsc;
  DscParams dsc;
  double sample_rate = 44100.0;

  MelFilterbank filterbank() const { return MelFilterbank(mel, stft, sample_rate); }
};

inline Analysis analysis_of(const cfm::FlowModel& m) { return Analysis{m.stft, m.mel, m.feature, m.dsc, m.sample_rate}; }

inline TrainingClip prepare_clip(const CorpusClip& clip, const Analysis& a, const MelFilterbank& fb,
                                 DegradationSampler& sampler, int variants) {
  require(clip.audio.sample_rate == a.sample_rate, "training: clip sample rate differs from the analysis rate");
  TrainingClip t;
  t.id = clip.id;
  const Spectrogram ref = stft(clip.audio, a.stft);
  t.x_hr = mel_project(ref, fb).values;
  t.control = normalized_control(extract_feature(ref, a.feature, a.dsc));
  for (int v = 0; v < variants; ++v) {
    const DegradationSpec spec = sampler.sample();
    const Spectrogram deg = stft(apply_degradation(clip.audio, spec), a.stft);
    t.x_lr.push_back(mel_project(deg, fb).values);
    t.boundary.push_back(mixed_boundary(fb, measure_cutoff(deg, ref)));
    t.specs.push_back(spec);
  }
  return t;
}

inline cfm::FlowItem flow_item(const TrainingClip& c, std::size_t variant) {
  return cfm::FlowItem{c.x_lr[variant], c.x_hr, c.control, c.boundary[variant]};
}

/// `count` distinct frames of `item` drawn without replacement, in time
/// order; the whole item when it has no more frames than that.
inline cfm::FlowItem subsample_frames(const cfm::FlowItem& item, int count, std::mt19937_64& rng) {
  const auto F = static_cast<std::size_t>(item.x_lr.rows());
  if (F <= static_cast<std::size_t>(count)) return item;
  std::vector<std::size_t> idx(F);
  for (std::size_t i = 0; i < F; ++i) idx[i] = i;
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, F - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  cfm::FlowItem out;
  out.boundary = item.boundary;
  out.x_lr.resize(count, item.x_lr.cols());
  out.x_hr.resize(count, item.x_hr.cols());
  if (item.control) out.control = Grid(count, item.control->cols());
  for (int r = 0; r < count; ++r) {
    const auto f = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    out.x_lr.row(r) = item.x_lr.row(f);
    out.x_hr.row(r) = item.x_hr.row(f);
    if (item.control) out.control->row(r) = item.control->row(f);
  }
  return out;
}

struct TrainingData {
  std::vector<TrainingClip> train;
  std::vector<TrainingClip> valid;
};

/// Degrades every train/valid clip `variants_per_clip` times (valid: once)
/// with independent sampler streams.
inline TrainingData prepare_training_data(const std::vector<CorpusClip>& corpus, const Analysis& a,
                                          const DataConfig& cfg,
                                          const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  validate(cfg);
  const MelFilterbank fb = a.filterbank();
  DegradationSampler train_sampler(cfg.degradation);
  DegradationSamplerConfig vcfg = cfg.degradation;
  vcfg.seed = cfg.degradation.seed ^ 0x9e3779b97f4a7c15ULL;
  DegradationSampler valid_sampler(vcfg);
  TrainingData d;
  std::size_t done = 0;
  for (const auto& clip : corpus) {
    if (clip.split == Split::Train)
      d.train.push_back(prepare_clip(clip, a, fb, train_sampler, cfg.variants_per_clip));
    else if (clip.split == Split::Valid)
      d.valid.push_back(prepare_clip(clip, a, fb, valid_sampler, 1));
    if (progress) progress(++done, corpus.size());
  }
  require(!d.train.empty(), "training: corpus has no training clips");
  if (d.valid.empty()) d.valid.push_back(d.train.front());
  return d;
}

/// Mel band centers as fractions of Nyquist.
inline std::vector<double> band_anchors(const Analysis& a) {
  std::vector<double> v = a.filterbank().centers();
  for (double& x : v) x /= 0.5 * a.sample_rate;
  return v;
}

struct ModelConfig {
  int hidden = 256;
  int time_freqs = 4;
  std::uint64_t init_seed = 3;
};

struct TrainingOutcome {
  cfm::FlowModel model;
  cfm::TrainResult result;
};

/// Fits the estimator on `data`. The validation batch draws t, noise and
/// dropout once from a fixed stream.
inline TrainingOutcome train_model(const TrainingData& data, const Analysis& a, const ModelConfig& mc,
                                   const cfm::PathConfig& path, const cfm::GuidanceConfig& guidance,
                                   const cfm::SamplerConfig& sampler, const cfm::TrainConfig& tc,
                                   const std::function<void(const cfm::LossPoint&)>& on_eval = {}) {
  require(!data.train.empty() && !data.valid.empty(), "training: empty data");
  validate(guidance);
  cfm::EstimatorShape shape;
  shape.mel_bands = a.mel.bands;
  shape.control_dims = static_cast<int>(data.train.front().control.cols());
  shape.hidden = mc.hidden;
  shape.time_freqs = mc.time_freqs;
  require(mc.hidden >= 1 && mc.time_freqs >= 0, "model: hidden must be >= 1 and time_freqs >= 0");

  std::vector<cfm::FlowItem> valid_items;
  for (const auto& c : data.valid) valid_items.push_back(flow_item(c, 0));
  std::mt19937_64 vrng(tc.seed ^ 0x5851f42d4c957f2dULL);
  const cfm::EstimatorParams init = cfm::EstimatorParams::init(shape, mc.init_seed, band_anchors(a));
  const cfm::FlowBatch validation = cfm::make_flow_batch(init, valid_items, path, guidance.cond_dropout_p, vrng);

  const cfm::BatchSource source = [&](std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick_clip(0, data.train.size() - 1);
    std::vector<cfm::FlowItem> items;
    for (int i = 0; i < tc.batch_size; ++i) {
      const TrainingClip& c = data.train[pick_clip(rng)];
      std::uniform_int_distribution<std::size_t> pick_var(0, c.x_lr.size() - 1);
      cfm::FlowItem item = flow_item(c, pick_var(rng));
      items.push_back(tc.frames_per_item > 0 ? subsample_frames(item, tc.frames_per_item, rng) : std::move(item));
    }
    return cfm::make_flow_batch(init, items, path, guidance.cond_dropout_p, rng);
  };

  TrainingOutcome out;
  out.result = cfm::train(init, source, validation, tc, on_eval);
  out.model.params = out.result.params;
  out.model.path = path;
  out.model.path.mixed_boundary = 0;
  out.model.guidance = guidance;
  out.model.sampler = sampler;
  out.model.stft = a.stft;
  out.model.mel = a.mel;
  out.model.feature = a.feature;
  out.model.dsc = a.dsc;
  out.model.sample_rate = a.sample_rate;
  return out;
}

// ---------------------------------------------------------------------------
// Restoration

struct RestoreOptions {
  /// Known degradation cutoff; NaN means estimate it from the input.
  double cutoff_hz = std::numeric_limits<double>::quiet_NaN();
  cfm::GuidanceConfig guidance;
  cfm::SamplerConfig sampler;
  int gl_iters = 32;
  int nnls_iters = 100;
};

inline RestoreOptions default_restore_options(const cfm::FlowModel& m) {
  RestoreOptions o;
  o.guidance = m.guidance;
  o.sampler = m.sampler;
  return o;
}

struct RestoreResult {
  AudioClip audio;
  ControlSignal control; // the conformed control actually used
  double cutoff_hz = 0.0;
  int boundary = 0;
  std::size_t clipped_samples = 0;
};

/// Restores `input` guided by `control` (Hz tracks). Shared by the CLI and
/// the service.
inline RestoreResult restore_audio(const cfm::FlowModel& model, const AudioClip& input, const ControlSignal& control,
                                   const RestoreOptions& opt) {
  validate(input);
  require(input.sample_rate == model.sample_rate, "restore: input sample rate " + std::to_string(input.sample_rate) +
                                                      " differs from the model's " + std::to_string(model.sample_rate));
  require(opt.gl_iters >= 0 && opt.nnls_iters >= 0, "restore: iteration counts must be >= 0");
  const Analysis a = analysis_of(model);
  const MelFilterbank fb = a.filterbank();
  const Spectrogram spec = stft(input, a.stft, true);
  const MelSpectrogram lr = mel_project(spec, fb);

  RestoreResult r;
  r.control = conform_control(control, spec.frames(), a.stft, a.sample_rate, model.params.shape.control_dims);
  const Grid ctrl = normalized_control(r.control);
  r.cutoff_hz = std::isnan(opt.cutoff_hz) ? estimate_bandwidth(spec) : opt.cutoff_hz;
  require(r.cutoff_hz >= 0.0 && r.cutoff_hz <= spec.nyquist(), "restore: cutoff must lie in [0, Nyquist]");
  cfm::PathConfig path = model.path;
  r.boundary = mixed_boundary(fb, r.cutoff_hz);
  path.mixed_boundary = r.boundary;

  const cfm::MlpEstimator est(model.params);
  MelSpectrogram hr = lr;
  hr.values = cfm::restore(est, lr.values, &ctrl, path, opt.guidance, opt.sampler);
  const Grid mags = mel_to_linear(hr, fb, opt.nnls_iters);
  const Spectrogram refined = cfm::refine_phase(mags, spec, r.cutoff_hz, opt.gl_iters);
  const Spectrogram spliced = cfm::postprocess_band_copy(refined, spec, r.cutoff_hz);
  r.audio = istft(spliced, input.size());
  r.clipped_samples = clip_to_unit(r.audio);
  return r;
}

/// Control extracted from `clip` with the model's analysis settings.
inline ControlSignal extract_control(const cfm::FlowModel& m, const AudioClip& clip) {
  return extract_feature(stft(clip, m.stft), m.feature, m.dsc);
}

/// One user-facing restore: scale the control, restore, then score the
/// result against the scaled target and the input.
struct GuidedRestore {
  RestoreResult result;
  ControlSignal target; // scaled and conformed
  double adherence = 0.0;
  double lsd_vs_input = 0.0;
};

inline GuidedRestore guided_restore(const cfm::FlowModel& model, const AudioClip& input, const ControlSignal& control,
                                    double scale, const RestoreOptions& opt) {
  GuidedRestore g;
  g.result = restore_audio(model, input, scale_control(control, scale), opt);
  g.target = g.result.control;
  g.adherence = adherence(g.target, g.result.audio, model.feature, model.dsc);
  g.lsd_vs_input = lsd(input, g.result.audio, model.stft);
  return g;
}

} // namespace bwe
