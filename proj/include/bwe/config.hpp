#pragma once

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfm/guidance.hpp"
#include "cfm/path.hpp"
#include "cfm/sampler.hpp"
#include "cfm/train.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "features.hpp"
#include "pipeline.hpp"

namespace bwe {

using Json = nlohmann::ordered_json;

inline constexpr const char* kConfigEnvVar = "BWE_CONFIG";

struct RestoreSettings {
  int gl_iters = 32;
  int nnls_iters = 100;
};

/// Every tunable of the pipelines. Serialized as JSON; see README for the
/// schema.
struct RunConfig {
  CorpusConfig corpus;
  DataConfig data;
  Analysis analysis;
  cfm::PathConfig path;
  cfm::GuidanceConfig guidance;
  cfm::SamplerConfig sampler;
  ModelConfig model;
  cfm::TrainConfig train;
  RestoreSettings restore;
};

/// Restore defaults for `model`: its stored guidance and sampler, with the
/// configured inversion effort.
inline RestoreOptions restore_options(const cfm::FlowModel& model, const RestoreSettings& s) {
  RestoreOptions o = default_restore_options(model);
  o.gl_iters = s.gl_iters;
  o.nnls_iters = s.nnls_iters;
  return o;
}

inline void validate(const RunConfig& c) {
  validate(c.corpus);
  validate(c.data);
  validate(c.analysis.stft);
  validate(c.analysis.dsc);
  require(c.analysis.sample_rate == c.corpus.sample_rate, ErrorKind::Config,
          "config: analysis and corpus sample rates differ");
  require(c.analysis.mel.f_max <= 0.5 * c.analysis.sample_rate, ErrorKind::Config, "config: mel.f_max above Nyquist");
  validate(c.path, c.analysis.mel.bands);
  validate(c.guidance);
  validate(c.sampler);
  validate(c.train);
  require(c.model.hidden >= 1 && c.model.time_freqs >= 0, ErrorKind::Config, "config: bad model shape");
  require(c.restore.gl_iters >= 0 && c.restore.nnls_iters >= 0, ErrorKind::Config, "config: bad restore iterations");
}

namespace config_detail {

/// Reads known keys from one JSON object and rejects the rest.
class Section {
public:
  Section(const Json& parent, const std::string& name) : name_(name) {
    if (!parent.contains(name)) return;
    obj_ = &parent.at(name);
    if (!obj_->is_object()) throw Error(ErrorKind::Config, "config: '" + name + "' must be an object");
  }

  template <class T>
  Section& get(const char* key, T& out) {
    known_.insert(key);
    if (obj_ == nullptr || !obj_->contains(key)) return *this;
    try {
      out = obj_->at(key).template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "config: " + name_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  template <class T, class Parse>
  Section& get_enum(const char* key, T& out, Parse parse) {
    std::string s;
    const bool present = obj_ != nullptr && obj_->contains(key);
    get(key, s);
    if (!present) return *this;
    try {
      out = parse(s);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "config: " + name_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  void finish() const {
    if (obj_ == nullptr) return;
    for (const auto& [k, v] : obj_->items())
      if (!known_.count(k)) throw Error(ErrorKind::Config, "config: unknown key '" + name_ + "." + k + "'");
  }

private:
  std::string name_;
  const Json* obj_ = nullptr;
  std::set<std::string> known_;
};

inline const std::set<std::string>& top_level_keys() {
  static const std::set<std::string> keys = {"corpus", "degradation", "analysis", "dsc",   "path",
                                             "guidance", "sampler",   "model",    "train", "restore"};
  return keys;
}

} // namespace config_detail

/// Overlays `j` onto `base`. Unknown keys at any level are errors.
inline RunConfig config_from_json(const Json& j, RunConfig c = {}) {
  using config_detail::Section;
  if (!j.is_object()) throw Error(ErrorKind::Config, "config: top level must be an object");
  for (const auto& [k, v] : j.items())
    if (!config_detail::top_level_keys().count(k)) throw Error(ErrorKind::Config, "config: unknown key '" + k + "'");

  Section corpus(j, "corpus");
  corpus.get("n_clips", c.corpus.n_clips)
      .get("clip_seconds", c.corpus.clip_seconds)
      .get("sample_rate", c.corpus.sample_rate)
      .get("seed", c.corpus.seed)
      .get("mix", c.corpus.mix)
      .get("band_limited_fraction", c.corpus.band_limited_fraction)
      .get("edge_hz", c.corpus.edge_hz)
      .get("band_limited_edge_hz", c.corpus.band_limited_edge_hz)
      .get("peak", c.corpus.peak)
      .finish();

  Section deg(j, "degradation");
  deg.get("seed", c.data.degradation.seed)
      .get("family_weights", c.data.degradation.family_weights)
      .get("fir_taps", c.data.degradation.fir_taps)
      .get("iir_order", c.data.degradation.iir_order)
      .get("ripple_db", c.data.degradation.ripple_db)
      .get("variants_per_clip", c.data.variants_per_clip)
      .finish();

  Section an(j, "analysis");
  an.get("n_fft", c.analysis.stft.n_fft)
      .get("hop", c.analysis.stft.hop)
      .get("mel_bands", c.analysis.mel.bands)
      .get("mel_f_min", c.analysis.mel.f_min)
      .get("mel_f_max", c.analysis.mel.f_max)
      .get("log_floor", c.analysis.mel.log_floor)
      .get_enum("feature", c.analysis.feature, feature_from_string)
      .finish();
  c.analysis.sample_rate = c.corpus.sample_rate;

  Section dsc(j, "dsc");
  dsc.get("q", c.analysis.dsc.q)
      .get("sigma_f", c.analysis.dsc.sigma_f)
      .get("gamma", c.analysis.dsc.gamma)
      .get("m_f", c.analysis.dsc.m_f)
      .finish();

  Section path(j, "path");
  path.get_enum("kind", c.path.kind, cfm::path_kind_from_string).get("sigma_min", c.path.sigma_min).finish();

  Section g(j, "guidance");
  g.get("w", c.guidance.w)
      .get_enum("s_mode", c.guidance.s_mode, cfm::scale_mode_from_string)
      .get("zero_init_steps", c.guidance.zero_init_steps)
      .get("cond_dropout_p", c.guidance.cond_dropout_p)
      .finish();

  Section s(j, "sampler");
  s.get("steps", c.sampler.steps).get("seed", c.sampler.seed).finish();

  Section m(j, "model");
  m.get("hidden", c.model.hidden).get("time_freqs", c.model.time_freqs).get("init_seed", c.model.init_seed).finish();

  Section t(j, "train");
  t.get("steps", c.train.steps)
      .get("batch_size", c.train.batch_size)
      .get("frames_per_item", c.train.frames_per_item)
      .get("eval_every", c.train.eval_every)
      .get("seed", c.train.seed)
      .get("lr", c.train.adam.lr)
      .get_enum("lr_schedule", c.train.schedule, cfm::lr_schedule_from_string)
      .get("beta1", c.train.adam.beta1)
      .get("beta2", c.train.adam.beta2)
      .get("eps", c.train.adam.eps)
      .finish();

  Section r(j, "restore");
  r.get("gl_iters", c.restore.gl_iters).get("nnls_iters", c.restore.nnls_iters).finish();

  try {
    validate(c);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  return c;
}

inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["corpus"] = {{"n_clips", c.corpus.n_clips},
                 {"clip_seconds", c.corpus.clip_seconds},
                 {"sample_rate", c.corpus.sample_rate},
                 {"seed", c.corpus.seed},
                 {"mix", c.corpus.mix},
                 {"band_limited_fraction", c.corpus.band_limited_fraction},
                 {"edge_hz", c.corpus.edge_hz},
                 {"band_limited_edge_hz", c.corpus.band_limited_edge_hz},
                 {"peak", c.corpus.peak}};
  j["degradation"] = {{"seed", c.data.degradation.seed},
                      {"family_weights", c.data.degradation.family_weights},
                      {"fir_taps", c.data.degradation.fir_taps},
                      {"iir_order", c.data.degradation.iir_order},
                      {"ripple_db", c.data.degradation.ripple_db},
                      {"variants_per_clip", c.data.variants_per_clip}};
  j["analysis"] = {{"n_fft", c.analysis.stft.n_fft},
                   {"hop", c.analysis.stft.hop},
                   {"mel_bands", c.analysis.mel.bands},
                   {"mel_f_min", c.analysis.mel.f_min},
                   {"mel_f_max", c.analysis.mel.f_max},
                   {"log_floor", c.analysis.mel.log_floor},
                   {"feature", to_string(c.analysis.feature)}};
  j["dsc"] = {{"q", c.analysis.dsc.q},
              {"sigma_f", c.analysis.dsc.sigma_f},
              {"gamma", c.analysis.dsc.gamma},
              {"m_f", c.analysis.dsc.m_f}};
  j["path"] = {{"kind", cfm::to_string(c.path.kind)}, {"sigma_min", c.path.sigma_min}};
  j["guidance"] = {{"w", c.guidance.w},
                   {"s_mode", cfm::to_string(c.guidance.s_mode)},
                   {"zero_init_steps", c.guidance.zero_init_steps},
                   {"cond_dropout_p", c.guidance.cond_dropout_p}};
  j["sampler"] = {{"steps", c.sampler.steps}, {"seed", c.sampler.seed}};
  j["model"] = {{"hidden", c.model.hidden}, {"time_freqs", c.model.time_freqs}, {"init_seed", c.model.init_seed}};
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"frames_per_item", c.train.frames_per_item},
                {"eval_every", c.train.eval_every},
                {"seed", c.train.seed},
                {"lr", c.train.adam.lr},
                {"lr_schedule", cfm::to_string(c.train.schedule)},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps}};
  j["restore"] = {{"gl_iters", c.restore.gl_iters}, {"nnls_iters", c.restore.nnls_iters}};
  return j;
}

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, "config: " + origin + ": " + e.what());
  }
}

/// Applies one "section.key=value" override. The value is read as JSON and
/// falls back to a plain string.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq)
    throw Error(ErrorKind::Config, "config: override '" + assignment + "' must look like section.key=value");
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  j[section][key] = value;
}

/// Resolution order: defaults, then the config file (explicit path, else
/// $BWE_CONFIG if set), then overrides.
inline RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string file = path;
  if (file.empty())
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') file = env;
  Json j = Json::object();
  if (!file.empty()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open config file " + file);
    std::ostringstream ss;
    ss << in.rdbuf();
    j = parse_json_text(ss.str(), file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

} // namespace bwe
