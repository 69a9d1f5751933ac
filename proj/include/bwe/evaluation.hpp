#pragma once

#include <array>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "degradation.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"

namespace bwe {

/// Fixed test protocol: every clip is lowpassed at `cutoff_hz`, cycling
/// through the four filter families, then restored with its clean control
/// scaled by each factor in `scales`.
struct BenchmarkConfig {
  double cutoff_hz = 4000.0;
  int fir_taps = 255;
  int iir_order = 8;
  double ripple_db = 1.0;
  std::array<double, 3> scales = {0.5, 1.0, 2.0};
};

inline DegradationSpec benchmark_spec(const BenchmarkConfig& b, std::size_t i) {
  DegradationSpec s;
  s.family = static_cast<FilterFamily>(i % 4);
  s.cutoff_hz = b.cutoff_hz;
  s.order = s.family == FilterFamily::Fir ? b.fir_taps : (s.family == FilterFamily::BrickWall ? 0 : b.iir_order);
  s.ripple_db = s.family == FilterFamily::ChebyshevI ? b.ripple_db : 0.0;
  return s;
}

struct BenchmarkClip {
  std::string id;
  std::string recipe;
  DegradationSpec spec;
  ClipMetrics degraded;            // vs clean, adherence to the clean control
  ClipMetrics restored;            // scale 1
  std::array<double, 3> dsc_median{}; // restored feature median per scale
  std::array<double, 3> adherence{};  // to the scaled target, per scale
};

struct BenchmarkReport {
  std::vector<BenchmarkClip> clips;
  MetricReport degraded;
  MetricReport restored;
  std::size_t lsd_wins = 0;
  std::array<double, 3> dsc_median{}; // median over clips of per-clip medians
};

inline BenchmarkReport run_benchmark(const cfm::FlowModel& model, const std::vector<CorpusClip>& clips,
                                     const BenchmarkConfig& bc, RestoreOptions opt,
                                     const std::function<void(const BenchmarkClip&)>& on_clip = {}) {
  require(!clips.empty(), "benchmark: no clips");
  opt.cutoff_hz = bc.cutoff_hz;
  BenchmarkReport rep;
  std::vector<ClipMetrics> deg_rows, res_rows;
  std::array<std::vector<double>, 3> per_scale;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const CorpusClip& c = clips[i];
    BenchmarkClip b;
    b.id = c.id;
    b.recipe = c.recipe;
    b.spec = benchmark_spec(bc, i);
    const AudioClip degraded = apply_degradation(c.audio, b.spec);
    const ControlSignal target = extract_control(model, c.audio);
    b.degraded = evaluate_clip(c.id, c.audio, degraded, &target, model.feature, model.dsc);
    for (std::size_t s = 0; s < bc.scales.size(); ++s) {
      const GuidedRestore g = guided_restore(model, degraded, target, bc.scales[s], opt);
      b.adherence[s] = g.adherence;
      b.dsc_median[s] = median(extract_control(model, g.result.audio).track(0));
      if (bc.scales[s] == 1.0) b.restored = evaluate_clip(c.id, c.audio, g.result.audio, &target, model.feature, model.dsc);
      per_scale[s].push_back(b.dsc_median[s]);
    }
    if (b.restored.lsd_db < b.degraded.lsd_db) ++rep.lsd_wins;
    deg_rows.push_back(b.degraded);
    res_rows.push_back(b.restored);
    if (on_clip) on_clip(b);
    rep.clips.push_back(std::move(b));
  }
  for (std::size_t s = 0; s < 3; ++s) rep.dsc_median[s] = median(per_scale[s]);
  rep.degraded = aggregate(std::move(deg_rows));
  rep.restored = aggregate(std::move(res_rows));
  return rep;
}

inline std::vector<CorpusClip> split_of(const std::vector<CorpusClip>& corpus, Split s) {
  std::vector<CorpusClip> out;
  for (const auto& c : corpus)
    if (c.split == s) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Report formatting

/// One CSV row per clip plus a final "aggregate" row.
inline std::string metric_report_csv(const MetricReport& r) {
  std::ostringstream out;
  out << "id,lsd_db,lkr_pi,mfcc_mse,adherence_ln,length_adjusted\n";
  for (const auto& c : r.clips)
    out << c.id << ',' << format_double(c.lsd_db) << ',' << format_double(c.lkr_pi) << ','
        << format_double(c.mfcc_mse) << ',' << format_double(c.adherence) << ',' << (c.length_adjusted ? 1 : 0) << '\n';
  out << "aggregate," << format_double(r.lsd_db.mean) << ',' << format_double(r.lkr_pi.mean) << ','
      << format_double(r.mfcc_mse.mean) << ',' << format_double(r.adherence_median_logdist) << ",\n";
  return out.str();
}

inline std::string metric_report_table(const MetricReport& r, const std::string& title) {
  char line[160];
  std::ostringstream out;
  out << title << '\n';
  std::snprintf(line, sizeof line, "  %-14s %16s %10s %10s %12s\n", "clip", "LSD dB", "LKR-PI", "MFCC MSE", "adh (ln)");
  out << line;
  for (const auto& c : r.clips) {
    std::snprintf(line, sizeof line, "  %-14s %16.3f %10.4f %10.4f %12.4f\n", c.id.c_str(), c.lsd_db, c.lkr_pi,
                  c.mfcc_mse, c.adherence);
    out << line;
  }
  std::snprintf(line, sizeof line, "  %-14s %8.3f ± %5.3f %10.4f %10.4f %12.4f\n", "all", r.lsd_db.mean, r.lsd_db.std,
                r.lkr_pi.mean, r.mfcc_mse.mean, r.adherence_median_logdist);
  out << line;
  return out.str();
}

} // namespace bwe
