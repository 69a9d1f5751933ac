#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>

// Must precede httplib.h; <resolv.h> defines _res.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "audio.hpp"
#include "cfm/checkpoint.hpp"
#include "error.hpp"
#include "features.hpp"
#include "pipeline.hpp"

namespace bwe {

/// 8-bit spectrogram for display: 0 maps to `db_floor` below the clip peak,
/// 255 to the peak. Row-major, frames x bins.
struct QuantizedSpectrogram {
  std::vector<std::uint8_t> data;
  Eigen::Index frames = 0;
  Eigen::Index bins = 0;
  double db_floor = -80.0;
  double bin_hz = 0.0;
  double frame_seconds = 0.0;
};

inline QuantizedSpectrogram quantize_spectrogram(const Spectrogram& spec, double db_floor) {
  require(std::isfinite(db_floor) && db_floor < 0.0, "db_floor must be negative");
  QuantizedSpectrogram q;
  q.frames = spec.frames();
  q.bins = spec.bins();
  q.db_floor = db_floor;
  q.bin_hz = spec.bin_hz();
  q.frame_seconds = spec.config.hop / spec.sample_rate;
  q.data.resize(static_cast<std::size_t>(q.frames * q.bins), 0);
  const double peak = spec.mags.size() > 0 ? spec.mags.maxCoeff() : 0.0;
  if (peak <= 0.0) return q;
  std::size_t i = 0;
  for (Eigen::Index f = 0; f < q.frames; ++f)
    for (Eigen::Index k = 0; k < q.bins; ++k, ++i) {
      const double m = spec.mags(f, k);
      const double db = m > 0.0 ? 20.0 * std::log10(m / peak) : db_floor;
      const double level = std::clamp((db - db_floor) / -db_floor, 0.0, 1.0);
      q.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * level));
    }
  return q;
}

/// HTTP status for a library error.
inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::MalformedControl:
    case ErrorKind::ShapeMismatch: return 422;
    case ErrorKind::InvalidArgument:
    case ErrorKind::MalformedWav:
    case ErrorKind::Config: return 400;
    default: return 500;
  }
}

struct ServiceConfig {
  std::size_t max_sessions = 16;
};

/// Session store plus the /v1 routes. One checkpoint, fixed at construction.
class RestorationService {
public:
  using Json = nlohmann::ordered_json;

  RestorationService(Analysis analysis, std::optional<cfm::FlowModel> model, RestoreOptions defaults,
                     ServiceConfig cfg = {})
      : analysis_(model ? analysis_of(*model) : std::move(analysis)), model_(std::move(model)),
        defaults_(std::move(defaults)), cfg_(cfg) {
    require(cfg_.max_sessions >= 1, "service: max_sessions must be >= 1");
  }

  bool has_model() const { return model_.has_value(); }

  std::size_t session_count() const {
    std::lock_guard lock(sessions_mu_);
    return sessions_.size();
  }

  void mount(httplib::Server& srv) {
    srv.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, Json{{"model_loaded", has_model()}, {"sessions", session_count()}});
    });
    srv.Post("/v1/clips", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { upload(req, res); });
    });
    srv.Get(R"(/v1/clips/([^/]+)/spectrogram)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { spectrogram(req, res); });
    });
    srv.Get(R"(/v1/clips/([^/]+)/controls)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { controls(req, res); });
    });
    srv.Post(R"(/v1/clips/([^/]+)/restore)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { restore(req, res); });
    });
  }

private:
  struct Session {
    std::string id;
    AudioClip clip;
    Spectrogram spec;
    std::map<Feature, ControlSignal> controls;
    std::mutex mu;
  };

  struct HttpError {
    int status;
    std::string message;
  };

  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const HttpError& e) {
      send_json(res, e.status, Json{{"error", e.message}});
    } catch (const Error& e) {
      send_json(res, http_status(e.kind()), Json{{"error", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, Json{{"error", e.what()}});
    }
  }

  std::shared_ptr<Session> session(const httplib::Request& req) {
    const std::string id = req.matches[1];
    std::lock_guard lock(sessions_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError{404, "unknown session '" + id + "'"};
    lru_.splice(lru_.begin(), lru_, it->second.second);
    return it->second.first;
  }

  std::string add_session(AudioClip clip) {
    auto s = std::make_shared<Session>();
    s->spec = stft(clip, analysis_.stft);
    s->clip = std::move(clip);
    std::lock_guard lock(sessions_mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%08llx", static_cast<unsigned long long>(++next_id_));
    s->id = buf;
    lru_.push_front(s->id);
    sessions_.emplace(s->id, std::make_pair(s, lru_.begin()));
    while (sessions_.size() > cfg_.max_sessions) {
      sessions_.erase(lru_.back());
      lru_.pop_back();
    }
    return s->id;
  }

  static const ControlSignal& cached_control(Session& s, Feature f, const DscParams& dsc) {
    std::lock_guard lock(s.mu);
    auto it = s.controls.find(f);
    if (it == s.controls.end()) it = s.controls.emplace(f, extract_feature(s.spec, f, dsc)).first;
    return it->second;
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    std::string body;
    if (req.is_multipart_form_data()) {
      if (req.has_file("file")) body = req.get_file_value("file").content;
      else if (!req.files.empty()) body = req.files.begin()->second.content;
      else throw HttpError{400, "multipart upload carries no file"};
    } else {
      body = req.body;
    }
    AudioClip clip = decode_wav(std::vector<std::uint8_t>(body.begin(), body.end()));
    validate(clip);
    if (clip.sample_rate != analysis_.sample_rate)
      throw HttpError{422, "clip sample rate " + format_double(clip.sample_rate) + " differs from the service's " +
                               format_double(analysis_.sample_rate)};
    const double duration = static_cast<double>(clip.size()) / clip.sample_rate;
    const double sr = clip.sample_rate;
    const std::string id = add_session(std::move(clip));
    send_json(res, 201, Json{{"session_id", id}, {"duration", duration}, {"sample_rate", sr}});
  }

  void spectrogram(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req);
    double floor = -80.0;
    if (req.has_param("db_floor")) {
      try {
        floor = parse_double(req.get_param_value("db_floor"));
      } catch (const Error&) {
        throw HttpError{400, "db_floor must be a number"};
      }
    }
    const QuantizedSpectrogram q = quantize_spectrogram(s->spec, floor);
    const std::string bytes(q.data.begin(), q.data.end());
    send_json(res, 200,
              Json{{"shape", {q.frames, q.bins}},
                   {"dtype", "uint8"},
                   {"order", "row-major"},
                   {"db_floor", q.db_floor},
                   {"bin_hz", q.bin_hz},
                   {"frame_seconds", q.frame_seconds},
                   {"data", httplib::detail::base64_encode(bytes)}});
  }

  void controls(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req);
    Feature f = analysis_.feature;
    if (req.has_param("feature")) f = feature_from_string(req.get_param_value("feature"));
    const std::string csv = to_csv(cached_control(*s, f, analysis_.dsc));
    res.status = 200;
    res.set_content(csv, "text/csv");
  }

  ControlSignal control_from_body(Session& s, const Json& body) const {
    if (!body.contains("control") || body.at("control").is_null())
      return cached_control(s, analysis_.feature, analysis_.dsc);
    const Json& c = body.at("control");
    if (c.is_string()) return from_csv(c.get<std::string>());
    if (!c.is_array() || c.empty()) throw Error(ErrorKind::MalformedControl, "control must be CSV text or a list of Hz");
    ControlSignal out;
    out.values.resize(1, static_cast<Eigen::Index>(c.size()));
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (!c[j].is_number()) throw Error(ErrorKind::MalformedControl, "control values must be numbers");
      const double v = c[j].get<double>();
      if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::MalformedControl, "control values must be finite and >= 0");
      out.values(0, static_cast<Eigen::Index>(j)) = v;
    }
    out.feature_names = {to_string(analysis_.feature)};
    out.sample_rate = analysis_.sample_rate;
    out.hop = analysis_.stft.hop;
    out.n_fft = analysis_.stft.n_fft;
    return out;
  }

  template <class T>
  static T field(const Json& body, const char* key, T fallback) {
    if (!body.contains(key) || body.at(key).is_null()) return fallback;
    try {
      return body.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw HttpError{400, std::string("field '") + key + "' has the wrong type"};
    }
  }

  void restore(const httplib::Request& req, httplib::Response& res) {
    const auto s = session(req);
    if (!model_) throw HttpError{409, "no checkpoint loaded"};
    Json body = Json::object();
    if (!req.body.empty()) {
      try {
        body = Json::parse(req.body);
      } catch (const nlohmann::json::parse_error& e) {
        throw HttpError{400, std::string("bad JSON: ") + e.what()};
      }
      if (!body.is_object()) throw HttpError{400, "request body must be a JSON object"};
    }
    const ControlSignal control = control_from_body(*s, body);
    RestoreOptions opt = defaults_;
    opt.guidance.w = field(body, "w", opt.guidance.w);
    opt.sampler.steps = field(body, "steps", opt.sampler.steps);
    opt.cutoff_hz = field(body, "cutoff_hz", opt.cutoff_hz);
    const double scale = field(body, "scale", 1.0);
    cfm::validate(opt.guidance);
    cfm::validate(opt.sampler);

    const GuidedRestore g = guided_restore(*model_, s->clip, control, scale, opt);
    const auto wav = encode_wav(g.result.audio);
    send_json(res, 200,
              Json{{"adherence", g.adherence},
                   {"lsd_vs_input", g.lsd_vs_input},
                   {"cutoff_hz", g.result.cutoff_hz},
                   {"boundary", g.result.boundary},
                   {"clipped_samples", g.result.clipped_samples},
                   {"target", to_csv(g.target)},
                   {"wav_base64", httplib::detail::base64_encode(std::string(wav.begin(), wav.end()))}});
  }

  Analysis analysis_;
  std::optional<cfm::FlowModel> model_;
  RestoreOptions defaults_;
  ServiceConfig cfg_;

  mutable std::mutex sessions_mu_;
  std::list<std::string> lru_; // most recent first
  std::unordered_map<std::string, std::pair<std::shared_ptr<Session>, std::list<std::string>::iterator>> sessions_;
  std::uint64_t next_id_ = 0;
};

} // namespace bwe
