#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bwe/bwe.hpp"
#include "bwe/config.hpp"
#include "bwe/service.hpp"

namespace fs = std::filesystem;
using namespace bwe;

namespace {

struct Globals {
  std::string workdir = ".";
  std::string config;
  std::vector<std::string> overrides;

  fs::path at(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : fs::path(workdir) / q;
  }

  RunConfig resolve() const { return resolve_config(config.empty() ? config : at(config).string(), overrides); }
};

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + p.string());
  out << text;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_resolved(const fs::path& dir, const RunConfig& c) {
  write_text(dir / "resolved_config.json", config_to_json(c).dump(2) + "\n");
}

fs::path with_suffix(fs::path p, const std::string& suffix) {
  p += suffix;
  return p;
}

ControlSignal read_control(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorKind::MissingFile, "control file not found: " + p.string());
  const auto bytes = read_file_bytes(p.string());
  return from_csv(std::string(bytes.begin(), bytes.end()));
}

Json spec_to_json(const DegradationSpec& s) {
  return Json{{"family", to_string(s.family)}, {"cutoff_hz", s.cutoff_hz}, {"order", s.order}, {"ripple_db", s.ripple_db}};
}

DegradationSpec spec_from_json(const Json& j) {
  DegradationSpec s;
  try {
    s.family = family_from_string(j.at("family").get<std::string>());
    s.cutoff_hz = j.at("cutoff_hz").get<double>();
    s.order = j.value("order", 0);
    s.ripple_db = j.value("ripple_db", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("degradation spec: ") + e.what());
  }
  return s;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

int cmd_corpus(const Globals& g, const std::string& out) {
  const RunConfig cfg = g.resolve();
  const fs::path dir = g.at(out);
  fs::create_directories(dir);
  const auto clips = generate(cfg.corpus);
  for (const auto& c : clips) write_wav((dir / (c.id + ".wav")).string(), c.audio);
  write_text(dir / "manifest.csv", manifest_csv(clips, cfg.corpus));
  write_resolved(dir, cfg);
  std::printf("wrote %zu clips to %s\n", clips.size(), dir.string().c_str());
  return 0;
}

struct DegradeArgs {
  std::string in, out, family, spec_file;
  double cutoff = std::numeric_limits<double>::quiet_NaN();
  int order = 0;
  double ripple = 0.0;
  int sample_index = -1;
};

int cmd_degrade(const Globals& g, const DegradeArgs& a) {
  const RunConfig cfg = g.resolve();
  const AudioClip clip = read_wav(g.at(a.in).string());
  DegradationSpec spec;
  if (!a.spec_file.empty()) {
    const auto bytes = read_file_bytes(g.at(a.spec_file).string());
    spec = spec_from_json(parse_json_text(std::string(bytes.begin(), bytes.end()), a.spec_file));
  } else if (a.sample_index >= 0) {
    DegradationSampler sampler(cfg.data.degradation);
    for (int i = 0; i <= a.sample_index; ++i) spec = sampler.sample();
  } else {
    if (a.family.empty() || std::isnan(a.cutoff))
      throw Error(ErrorKind::InvalidArgument, "degrade needs --family and --cutoff, --sample or --spec");
    spec.family = family_from_string(a.family);
    spec.cutoff_hz = a.cutoff;
    spec.order = a.order;
    spec.ripple_db = a.ripple;
  }
  const AudioClip out = apply_degradation(clip, spec);
  const fs::path dst = g.at(a.out);
  ensure_parent(dst);
  write_wav(dst.string(), out);
  write_text(with_suffix(dst, ".degradation.json"), spec_to_json(spec).dump(2) + "\n");
  write_resolved(dst.parent_path(), cfg);
  std::printf("%s\n", describe(spec).c_str());
  return 0;
}

int cmd_extract(const Globals& g, const std::string& in, const std::string& out, const std::string& feature) {
  const RunConfig cfg = g.resolve();
  const AudioClip clip = read_wav(g.at(in).string());
  const Feature f = feature.empty() ? cfg.analysis.feature : feature_from_string(feature);
  const ControlSignal c = extract_feature(stft(clip, cfg.analysis.stft), f, cfg.analysis.dsc);
  const fs::path dst = g.at(out);
  write_text(dst, to_csv(c));
  write_resolved(dst.parent_path(), cfg);
  std::printf("%lld frames, median %s %.1f Hz\n", static_cast<long long>(c.frames()), to_string(f),
              median(c.track(0)));
  return 0;
}

int cmd_train(const Globals& g, const std::string& out, bool quiet) {
  const RunConfig cfg = g.resolve();
  const fs::path dst = g.at(out);
  ensure_parent(dst);
  auto t0 = std::chrono::steady_clock::now();
  const auto corpus = generate(cfg.corpus);
  const TrainingData data = prepare_training_data(corpus, cfg.analysis, cfg.data);
  if (!quiet)
    std::fprintf(stderr, "prepared %zu train / %zu valid clips in %.1f s\n", data.train.size(), data.valid.size(),
                 elapsed(t0));
  t0 = std::chrono::steady_clock::now();
  const TrainingOutcome res = train_model(data, cfg.analysis, cfg.model, cfg.path, cfg.guidance, cfg.sampler, cfg.train,
                                          [&](const cfm::LossPoint& p) {
                                            if (!quiet)
                                              std::fprintf(stderr, "step %5d  train %.4f  valid %.4f\n", p.step,
                                                           p.train_loss, p.val_loss);
                                          });
  cfm::save_checkpoint(dst.string(), res.model);

  std::string curve = "step,train_loss,val_loss\n";
  for (const auto& p : res.result.curve)
    curve += std::to_string(p.step) + "," + format_double(p.train_loss) + "," + format_double(p.val_loss) + "\n";
  write_text(with_suffix(dst, ".curve.csv"), curve);
  write_resolved(dst.parent_path(), cfg);
  std::printf("validation loss %.4f -> %.4f (best at step %d), %.1f s\n", res.result.initial_val_loss,
              res.result.best_val_loss, res.result.best_step, elapsed(t0));
  return 0;
}

struct RestoreArgs {
  std::string checkpoint = "model.cfmr", in, out, control;
  double scale = 1.0;
  double w = std::numeric_limits<double>::quiet_NaN();
  int steps = 0;
  double cutoff = std::numeric_limits<double>::quiet_NaN();
};

int cmd_restore(const Globals& g, const RestoreArgs& a) {
  const RunConfig cfg = g.resolve();
  const cfm::FlowModel model = cfm::load_checkpoint(g.at(a.checkpoint).string());
  const AudioClip input = read_wav(g.at(a.in).string());
  const ControlSignal control = a.control.empty() ? extract_control(model, input) : read_control(g.at(a.control));

  RestoreOptions opt = restore_options(model, cfg.restore);
  if (!std::isnan(a.w)) opt.guidance.w = a.w;
  if (a.steps > 0) opt.sampler.steps = a.steps;
  opt.cutoff_hz = a.cutoff;

  const GuidedRestore r = guided_restore(model, input, control, a.scale, opt);
  const fs::path dst = g.at(a.out);
  ensure_parent(dst);
  write_wav(dst.string(), r.result.audio);
  write_text(with_suffix(dst, ".target.csv"), to_csv(r.target));
  const Json report{{"adherence", r.adherence},
                    {"lsd_vs_input", r.lsd_vs_input},
                    {"cutoff_hz", r.result.cutoff_hz},
                    {"boundary", r.result.boundary},
                    {"clipped_samples", r.result.clipped_samples},
                    {"scale", a.scale},
                    {"w", opt.guidance.w},
                    {"steps", opt.sampler.steps}};
  write_text(with_suffix(dst, ".json"), report.dump(2) + "\n");
  write_resolved(dst.parent_path(), cfg);
  std::printf("adherence %.17g (ln)  lsd_vs_input %.3f dB  cutoff %.1f Hz  clipped %zu\n", r.adherence, r.lsd_vs_input,
              r.result.cutoff_hz, r.result.clipped_samples);
  return 0;
}

struct EvalArgs {
  std::string checkpoint, ref, est, control, out = "report";
};

Json report_json(const MetricReport& r) {
  Json clips = Json::array();
  for (const auto& c : r.clips)
    clips.push_back(Json{{"id", c.id},
                         {"lsd_db", c.lsd_db},
                         {"lkr_pi", c.lkr_pi},
                         {"mfcc_mse", c.mfcc_mse},
                         {"adherence", std::isnan(c.adherence) ? Json(nullptr) : Json(c.adherence)},
                         {"length_adjusted", c.length_adjusted}});
  return Json{{"lsd_db", {{"mean", r.lsd_db.mean}, {"std", r.lsd_db.std}}},
              {"lkr_pi", r.lkr_pi.mean},
              {"mfcc_mse", r.mfcc_mse.mean},
              {"adherence_median_logdist",
               std::isnan(r.adherence_median_logdist) ? Json(nullptr) : Json(r.adherence_median_logdist)},
              {"log_base", "e"},
              {"clips", clips}};
}

std::vector<std::pair<std::string, fs::path>> wav_files(const fs::path& p) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".wav") out.emplace_back(e.path().stem().string(), e.path());
    std::sort(out.begin(), out.end());
  } else {
    if (!fs::exists(p)) throw Error(ErrorKind::MissingFile, "not found: " + p.string());
    out.emplace_back(p.stem().string(), p);
  }
  return out;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const RunConfig cfg = g.resolve();
  const fs::path prefix = g.at(a.out);
  ensure_parent(prefix);
  Json out;
  std::string table, csv;
  if (!a.checkpoint.empty()) {
    const cfm::FlowModel model = cfm::load_checkpoint(g.at(a.checkpoint).string());
    const auto test = split_of(generate(cfg.corpus), Split::Test);
    const BenchmarkReport rep = run_benchmark(model, test, BenchmarkConfig{}, restore_options(model, cfg.restore));
    out["degraded"] = report_json(rep.degraded);
    out["restored"] = report_json(rep.restored);
    out["lsd_wins"] = rep.lsd_wins;
    out["clips"] = rep.clips.size();
    out["dsc_median_by_scale"] = {{"0.5", rep.dsc_median[0]}, {"1", rep.dsc_median[1]}, {"2", rep.dsc_median[2]}};
    table = metric_report_table(rep.degraded, "degraded (4 kHz lowpass)") +
            metric_report_table(rep.restored, "restored (scale 1)");
    char line[200];
    std::snprintf(line, sizeof line, "restored beats degraded on LSD for %zu/%zu clips; DSC medians x0.5 %.0f  x1 %.0f  x2 %.0f Hz\n",
                  rep.lsd_wins, rep.clips.size(), rep.dsc_median[0], rep.dsc_median[1], rep.dsc_median[2]);
    table += line;
    csv = metric_report_csv(rep.restored);
  } else {
    if (a.ref.empty() || a.est.empty()) throw Error(ErrorKind::InvalidArgument, "eval needs --checkpoint or --ref and --est");
    const auto refs = wav_files(g.at(a.ref));
    const bool dir_mode = fs::is_directory(g.at(a.est));
    std::optional<ControlSignal> target;
    if (!a.control.empty()) target = read_control(g.at(a.control));
    std::vector<ClipMetrics> rows;
    for (const auto& [id, ref_path] : refs) {
      const fs::path est_path = dir_mode ? g.at(a.est) / (id + ".wav") : g.at(a.est);
      const AudioClip ref = read_wav(ref_path.string());
      const AudioClip est = read_wav(est_path.string());
      rows.push_back(evaluate_clip(id, ref, est, target ? &*target : nullptr, cfg.analysis.feature, cfg.analysis.dsc));
    }
    const MetricReport rep = aggregate(std::move(rows));
    out = report_json(rep);
    table = metric_report_table(rep, "evaluation");
    csv = metric_report_csv(rep);
  }
  write_text(with_suffix(prefix, ".json"), out.dump(2) + "\n");
  write_text(with_suffix(prefix, ".csv"), csv);
  write_resolved(prefix.parent_path(), cfg);
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_serve(const Globals& g, const std::string& checkpoint, const std::string& host, int port, std::size_t sessions) {
  const RunConfig cfg = g.resolve();
  std::optional<cfm::FlowModel> model;
  RestoreOptions opt;
  if (!checkpoint.empty()) {
    model = cfm::load_checkpoint(g.at(checkpoint).string());
    opt = restore_options(*model, cfg.restore);
  }
  RestorationService service(cfg.analysis, std::move(model), opt, ServiceConfig{sessions});
  httplib::Server srv;
  service.mount(srv);
  std::fprintf(stderr, "listening on http://%s:%d/v1 (%s)\n", host.c_str(), port,
               service.has_model() ? "checkpoint loaded" : "no checkpoint");
  if (!srv.listen(host, port)) throw Error(ErrorKind::InvalidArgument, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controllable bandwidth extension with conditional flow matching"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--workdir", g.workdir, "Base directory for relative paths")->capture_default_str();
  app.add_option("--config", g.config, std::string("JSON config file (default: $") + kConfigEnvVar + ")");
  app.add_option("--set", g.overrides, "Override one value, e.g. --set train.steps=500")->allow_extra_args(false);

  int rc = 0;

  std::string corpus_out = "corpus";
  auto* corpus = app.add_subcommand("corpus", "Generate the synthetic corpus");
  corpus->add_option("--out", corpus_out, "Output directory")->capture_default_str();
  corpus->callback([&] { rc = cmd_corpus(g, corpus_out); });

  DegradeArgs da;
  auto* degrade = app.add_subcommand("degrade", "Lowpass a WAV file");
  degrade->add_option("--in", da.in)->required();
  degrade->add_option("--out", da.out)->required();
  degrade->add_option("--family", da.family, "FIR, Biquad, ChebyshevI or BrickWall");
  degrade->add_option("--cutoff", da.cutoff, "Cutoff in Hz");
  degrade->add_option("--order", da.order, "FIR taps or IIR order");
  degrade->add_option("--ripple", da.ripple, "Passband ripple in dB (ChebyshevI)");
  degrade->add_option("--sample", da.sample_index, "Use the n-th spec of the configured random sampler");
  degrade->add_option("--spec", da.spec_file, "Reapply a saved .degradation.json");
  degrade->callback([&] { rc = cmd_degrade(g, da); });

  std::string ex_in, ex_out, ex_feature;
  auto* extract = app.add_subcommand("extract", "Write a control CSV for a WAV file");
  extract->add_option("--in", ex_in)->required();
  extract->add_option("--out", ex_out)->required();
  extract->add_option("--feature", ex_feature, "dsc, centroid or rolloff");
  extract->callback([&] { rc = cmd_extract(g, ex_in, ex_out, ex_feature); });

  std::string train_out = "model.cfmr";
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train the flow estimator on the configured corpus");
  train->add_option("--out", train_out, "Checkpoint path")->capture_default_str();
  train->add_flag("--quiet", quiet);
  train->callback([&] { rc = cmd_train(g, train_out, quiet); });

  RestoreArgs ra;
  auto* restore = app.add_subcommand("restore", "Restore a band-limited WAV file");
  restore->add_option("--checkpoint", ra.checkpoint)->capture_default_str();
  restore->add_option("--in", ra.in)->required();
  restore->add_option("--out", ra.out)->required();
  restore->add_option("--control", ra.control, "Control CSV; default extracts it from the input");
  restore->add_option("--scale", ra.scale, "Multiply the control")->capture_default_str();
  restore->add_option("--w", ra.w, "Guidance weight; default from the checkpoint");
  restore->add_option("--steps", ra.steps, "Euler steps; default from the checkpoint");
  restore->add_option("--cutoff", ra.cutoff, "Known input cutoff in Hz; default estimates it");
  restore->callback([&] { rc = cmd_restore(g, ra); });

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score restorations (files, or the test split with --checkpoint)");
  eval->add_option("--checkpoint", ea.checkpoint);
  eval->add_option("--ref", ea.ref, "Reference WAV or directory");
  eval->add_option("--est", ea.est, "Estimate WAV or directory");
  eval->add_option("--control", ea.control, "Target control CSV for adherence");
  eval->add_option("--out", ea.out, "Report path prefix")->capture_default_str();
  eval->callback([&] { rc = cmd_eval(g, ea); });

  std::string sv_ck, host = "127.0.0.1";
  int port = 8080;
  std::size_t max_sessions = 16;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--checkpoint", sv_ck);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--max-sessions", max_sessions)->capture_default_str();
  serve->callback([&] { rc = cmd_serve(g, sv_ck, host, port, max_sessions); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
