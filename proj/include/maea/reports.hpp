// SPDX-License-Identifier: Apache-2.0
//
// Aggregates over attribution records and their text, CSV and SVG renderings.
// Cross-trajectory aggregates weight every trajectory equally: shares are
// averaged per trajectory first, then across trajectories.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "maea/attribution.hpp"
#include "maea/error.hpp"
#include "maea/language.hpp"
#include "maea/policy.hpp"

namespace maea {

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population mean and standard deviation, accumulated as offsets from the
/// first value so identical inputs give a mean equal to that value and a
/// standard deviation of exactly zero.
inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw Error("mean_std: no values");
  const double shift = xs.front();
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x - shift;
  const double offset = sum / n;
  double sq = 0.0;
  for (double x : xs) {
    const double d = x - shift - offset;
    sq += d * d;
  }
  return {shift + offset, std::sqrt(sq / n)};
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Global shares
// ---------------------------------------------------------------------------

struct GlobalShareReport {
  std::string condition = "trained";
  std::vector<std::uint64_t> seeds;
  PoolNorm norm = PoolNorm::L2;
  TargetMode mode = TargetMode::ArgmaxLogit;
  Triple mean{};
  Triple std{};
  /// Number of averaged units: trajectories, or seeds for a sweep.
  std::size_t units = 0;
  /// Degenerate timesteps left out of every average.
  std::size_t skipped = 0;
};

/// Per-trajectory mean shares keyed by (seed, trajectory id), in key order.
inline std::map<std::pair<std::uint64_t, std::size_t>, Triple> per_trajectory_shares(
    const std::vector<AttributionRecord>& records, std::size_t* skipped = nullptr) {
  std::map<std::pair<std::uint64_t, std::size_t>, std::pair<Triple, std::size_t>> acc;
  std::size_t skip = 0;
  for (const auto& r : records) {
    if (!r.shares) {
      ++skip;
      continue;
    }
    auto& [sum, n] = acc[{r.seed, r.trajectory_id}];
    for (std::size_t m = 0; m < kNumModalities; ++m) sum[m] += (*r.shares)[m];
    ++n;
  }
  if (skipped) *skipped = skip;
  std::map<std::pair<std::uint64_t, std::size_t>, Triple> out;
  for (const auto& [key, v] : acc) {
    Triple t{};
    for (std::size_t m = 0; m < kNumModalities; ++m) t[m] = v.first[m] / static_cast<double>(v.second);
    out[key] = t;
  }
  return out;
}

inline GlobalShareReport summarize_units(const std::vector<Triple>& units) {
  GlobalShareReport rep;
  rep.units = units.size();
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    std::vector<double> xs;
    for (const Triple& u : units) xs.push_back(u[m]);
    const MeanStd s = mean_std(xs);
    rep.mean[m] = s.mean;
    rep.std[m] = s.std;
  }
  return rep;
}

/// Mean and spread of per-trajectory mean shares. Throws when every record is
/// degenerate.
inline GlobalShareReport global_shares(const std::vector<AttributionRecord>& records, const AttributionMeta& meta = {}) {
  std::size_t skipped = 0;
  const auto per = per_trajectory_shares(records, &skipped);
  if (per.empty()) throw DegenerateError("global_shares: every record is degenerate");
  std::vector<Triple> units;
  for (const auto& [_, t] : per) units.push_back(t);
  GlobalShareReport rep = summarize_units(units);
  rep.condition = meta.condition;
  rep.seeds = meta.seeds;
  rep.norm = meta.norm;
  rep.mode = meta.mode;
  rep.skipped = skipped;
  return rep;
}

struct SweepResult {
  GlobalShareReport report;
  /// Every record, ordered by seed position, trajectory, then t.
  std::vector<AttributionRecord> records;
};

/// Optional edit applied to each freshly initialized policy.
using PolicyHook = std::function<void(PolicyParameters&)>;

/// Random-init shares: for each seed, a fresh policy attributes every
/// trajectory; the per-seed global means are then averaged across seeds.
inline SweepResult random_init_sweep(const PolicyDescriptor& desc, const std::vector<std::uint64_t>& seeds,
                                     const Dataset& data, TargetMode mode = TargetMode::ArgmaxLogit,
                                     PoolNorm norm = PoolNorm::L2, const PolicyHook& hook = {}) {
  if (seeds.empty()) throw Error("random_init_sweep: at least one seed is required");
  if (data.empty()) throw Error("random_init_sweep: at least one trajectory is required");
  SweepResult out;
  std::vector<Triple> per_seed;
  std::size_t skipped = 0;
  for (std::uint64_t seed : seeds) {
    PolicyParameters p = init_policy(desc, seed);
    if (hook) hook(p);
    AttributionOptions opt;
    opt.mode = mode;
    opt.norm = norm;
    opt.seed = seed;
    const auto recs = attribute_dataset(p, data, opt);
    AttributionMeta meta;
    meta.mode = mode;
    meta.norm = norm;
    const GlobalShareReport g = global_shares(recs, meta);
    per_seed.push_back(g.mean);
    skipped += g.skipped;
    out.records.insert(out.records.end(), recs.begin(), recs.end());
  }
  out.report = summarize_units(per_seed);
  out.report.condition = "random-init";
  out.report.seeds = seeds;
  out.report.norm = norm;
  out.report.mode = mode;
  out.report.skipped = skipped;
  return out;
}

// ---------------------------------------------------------------------------
// Episode-completion curve
// ---------------------------------------------------------------------------

struct BinnedCurve {
  PoolNorm norm = PoolNorm::L2;
  std::vector<Triple> mean;
  std::vector<std::size_t> count;
  /// Mean pooled attribution over all non-degenerate steps.
  Triple global_mean{};
  std::size_t skipped = 0;

  std::size_t bins() const { return count.size(); }
};

/// Mean pooled attribution per completion bin, bin = floor(bins·(t−1)/T)
/// clamped to the last bin. Degenerate steps are counted, not binned.
inline BinnedCurve episode_completion_bins(const std::vector<AttributionRecord>& records, PoolNorm norm = PoolNorm::L2,
                                           std::size_t bins = 10) {
  if (records.empty()) throw Error("episode_completion_bins: no records");
  if (bins == 0) throw Error("episode_completion_bins: bins must be positive");
  BinnedCurve c;
  c.norm = norm;
  c.mean.assign(bins, Triple{});
  c.count.assign(bins, 0);
  std::size_t used = 0;
  for (const auto& r : records) {
    if (r.degenerate()) {
      ++c.skipped;
      continue;
    }
    const std::size_t b = completion_bin(r.t, r.T, bins);
    const Triple& v = r.pooled_by(norm);
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      c.mean[b][m] += v[m];
      c.global_mean[m] += v[m];
    }
    ++c.count[b];
    ++used;
  }
  if (used == 0) throw DegenerateError("episode_completion_bins: every record is degenerate");
  for (std::size_t b = 0; b < bins; ++b)
    if (c.count[b])
      for (double& v : c.mean[b]) v /= static_cast<double>(c.count[b]);
  for (double& v : c.global_mean) v /= static_cast<double>(used);
  return c;
}

// ---------------------------------------------------------------------------
// Interact / correctness split
// ---------------------------------------------------------------------------

struct SplitGroup {
  bool interact = false;
  bool correct = false;
  std::size_t count = 0;
  Triple mean{};
  Triple std{};
};

struct InteractSplit {
  PoolNorm norm = PoolNorm::L2;
  /// (non-interact, incorrect), (non-interact, correct), (interact,
  /// incorrect), (interact, correct).
  std::array<SplitGroup, 4> groups{};
  std::size_t skipped = 0;
};

inline std::size_t split_index(bool interact, bool correct) { return (interact ? 2u : 0u) + (correct ? 1u : 0u); }

inline InteractSplit interact_split_stats(const std::vector<AttributionRecord>& records, PoolNorm norm = PoolNorm::L2) {
  if (records.empty()) throw Error("interact_split_stats: no records");
  InteractSplit s;
  s.norm = norm;
  std::array<std::array<std::vector<double>, kNumModalities>, 4> values;
  for (const auto& r : records) {
    if (r.degenerate()) {
      ++s.skipped;
      continue;
    }
    const std::size_t g = split_index(r.interact, r.correct);
    for (std::size_t m = 0; m < kNumModalities; ++m) values[g][m].push_back(r.pooled_by(norm)[m]);
  }
  for (std::size_t g = 0; g < 4; ++g) {
    SplitGroup& grp = s.groups[g];
    grp.interact = g >= 2;
    grp.correct = g % 2 == 1;
    grp.count = values[g][0].size();
    if (!grp.count) continue;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      const MeanStd ms = mean_std(values[g][m]);
      grp.mean[m] = ms.mean;
      grp.std[m] = ms.std;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

enum class ReportFormat { Txt, Csv, Svg };

inline const char* format_extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::Txt: return "txt";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Svg: return "svg";
  }
  return "?";
}

inline ReportFormat parse_report_format(std::string_view s) {
  for (ReportFormat f : {ReportFormat::Txt, ReportFormat::Csv, ReportFormat::Svg})
    if (s == format_extension(f)) return f;
  throw Error("unknown report format: " + std::string(s));
}

/// `<kind>.<condition>.<extension>`
inline std::string report_filename(std::string_view kind, std::string_view condition, ReportFormat f) {
  return std::string(kind) + "." + std::string(condition) + "." + format_extension(f);
}

namespace svg {

inline constexpr int kWidth = 480;
inline constexpr int kHeight = 320;
inline constexpr int kLeft = 56;
inline constexpr int kRight = 16;
inline constexpr int kTop = 28;
inline constexpr int kBottom = 40;
inline constexpr std::array<const char*, 3> kModalityColors = {"#3b528b", "#21918c", "#fde725"};

inline double plot_w() { return kWidth - kLeft - kRight; }
inline double plot_h() { return kHeight - kTop - kBottom; }

/// Frame, title and a y axis from 0 to `ymax` with five ticks.
inline void open(std::ostream& out, std::string_view title, double ymax, std::string_view ylabel) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4.0;
    const double y = kHeight - kBottom - plot_h() * k / 4.0;
    out << "<text x=\"" << kLeft - 4 << "\" y=\"" << fmt6(y + 4) << "\" text-anchor=\"end\">" << fmt6(v) << "</text>\n";
  }
  out << "<text x=\"12\" y=\"" << kTop + plot_h() / 2 << "\" transform=\"rotate(-90 12 " << kTop + plot_h() / 2
      << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

inline double y_of(double v, double ymax) { return kHeight - kBottom - plot_h() * (ymax > 0 ? v / ymax : 0.0); }

inline void legend(std::ostream& out) {
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const int x = kWidth - kRight - 150 + static_cast<int>(m) * 50;
    out << "<rect x=\"" << x << "\" y=\"" << kTop << "\" width=\"10\" height=\"10\" fill=\"" << kModalityColors[m]
        << "\"/><text x=\"" << x + 13 << "\" y=\"" << kTop + 9 << "\">" << modality_name(kModalities[m])
        << "</text>\n";
  }
}

inline double nice_max(double v) {
  if (!(v > 0)) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double s : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (v <= s * p) return s * p;
  return 10.0 * p;
}

}  // namespace svg

inline void write_global_report(std::ostream& out, const GlobalShareReport& r, ReportFormat f) {
  switch (f) {
    case ReportFormat::Txt: {
      out << "global modality shares (%)\n";
      out << "condition " << r.condition << "\nnorm " << norm_name(r.norm) << "\ntarget " << target_mode_name(r.mode)
          << "\nseeds";
      for (auto s : r.seeds) out << ' ' << s;
      out << "\nunits " << r.units << "\nskipped " << r.skipped << "\n\n";
      char buf[96];
      std::snprintf(buf, sizeof buf, "%-9s %12s %12s\n", "modality", "mean", "std");
      out << buf;
      for (Modality m : kModalities) {
        const auto i = static_cast<std::size_t>(m);
        std::snprintf(buf, sizeof buf, "%-9s %12.6g %12.6g\n", modality_name(m), r.mean[i], r.std[i]);
        out << buf;
      }
      return;
    }
    case ReportFormat::Csv:
      out << "condition,modality,mean,std,units,skipped\n";
      for (Modality m : kModalities) {
        const auto i = static_cast<std::size_t>(m);
        out << r.condition << ',' << modality_name(m) << ',' << fmt6(r.mean[i]) << ',' << fmt6(r.std[i]) << ','
            << r.units << ',' << r.skipped << '\n';
      }
      return;
    case ReportFormat::Svg: {
      svg::open(out, "modality shares (" + r.condition + ")", 100.0, "% attribution");
      const double slot = svg::plot_w() / 3.0;
      for (std::size_t m = 0; m < kNumModalities; ++m) {
        const double x = svg::kLeft + slot * static_cast<double>(m) + slot * 0.2;
        const double w = slot * 0.6;
        const double y = svg::y_of(r.mean[m], 100.0);
        out << "<rect x=\"" << fmt6(x) << "\" y=\"" << fmt6(y) << "\" width=\"" << fmt6(w) << "\" height=\""
            << fmt6(svg::kHeight - svg::kBottom - y) << "\" fill=\"" << svg::kModalityColors[m] << "\"/>\n";
        const double cx = x + w / 2;
        const double lo = svg::y_of(std::max(0.0, r.mean[m] - r.std[m]), 100.0);
        const double hi = svg::y_of(std::min(100.0, r.mean[m] + r.std[m]), 100.0);
        out << "<line x1=\"" << fmt6(cx) << "\" y1=\"" << fmt6(lo) << "\" x2=\"" << fmt6(cx) << "\" y2=\"" << fmt6(hi)
            << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt6(cx) << "\" y=\"" << svg::kHeight - svg::kBottom + 16
            << "\" text-anchor=\"middle\">" << modality_name(kModalities[m]) << ' ' << fmt6(r.mean[m]) << "</text>\n";
      }
      out << "</svg>\n";
      return;
    }
  }
}

inline void write_episode_report(std::ostream& out, const BinnedCurve& c, ReportFormat f) {
  const std::size_t bins = c.bins();
  if (bins == 0) throw Error("episode report: empty curve");
  auto lo_pct = [&](std::size_t b) { return 100.0 * static_cast<double>(b) / static_cast<double>(bins); };
  switch (f) {
    case ReportFormat::Txt: {
      out << "pooled attribution over episode completion\nnorm " << norm_name(c.norm) << "\nskipped " << c.skipped
          << "\n\n";
      char buf[128];
      std::snprintf(buf, sizeof buf, "%-11s %7s %12s %12s %12s\n", "completion", "count", "vis", "act", "lang");
      out << buf;
      for (std::size_t b = 0; b < bins; ++b) {
        const std::string range = fmt6(lo_pct(b)) + "-" + fmt6(lo_pct(b + 1)) + "%";
        std::snprintf(buf, sizeof buf, "%-11s %7zu %12.6g %12.6g %12.6g\n", range.c_str(), c.count[b], c.mean[b][0],
                      c.mean[b][1], c.mean[b][2]);
        out << buf;
      }
      return;
    }
    case ReportFormat::Csv:
      out << "bin,lo_pct,hi_pct,count,vis,act,lang\n";
      for (std::size_t b = 0; b < bins; ++b)
        out << b << ',' << fmt6(lo_pct(b)) << ',' << fmt6(lo_pct(b + 1)) << ',' << c.count[b] << ','
            << fmt6(c.mean[b][0]) << ',' << fmt6(c.mean[b][1]) << ',' << fmt6(c.mean[b][2]) << '\n';
      return;
    case ReportFormat::Svg: {
      double top = 0.0;
      for (const Triple& t : c.mean)
        for (double v : t) top = std::max(top, v);
      const double ymax = svg::nice_max(top);
      svg::open(out, std::string("attribution over episode completion (") + norm_name(c.norm) + ")", ymax,
                "pooled attribution");
      svg::legend(out);
      for (std::size_t m = 0; m < kNumModalities; ++m) {
        out << "<polyline fill=\"none\" stroke=\"" << svg::kModalityColors[m] << "\" stroke-width=\"2\" points=\"";
        bool first = true;
        for (std::size_t b = 0; b < bins; ++b) {
          if (!c.count[b]) continue;
          const double x = svg::kLeft + svg::plot_w() * (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
          out << (first ? "" : " ") << fmt6(x) << ',' << fmt6(svg::y_of(c.mean[b][m], ymax));
          first = false;
        }
        out << "\"/>\n";
      }
      out << "<text x=\"" << svg::kLeft + svg::plot_w() / 2 << "\" y=\"" << svg::kHeight - 10
          << "\" text-anchor=\"middle\">% episode completion</text>\n</svg>\n";
      return;
    }
  }
}

inline const char* split_group_name(std::size_t g) {
  static constexpr std::array<const char*, 4> names = {"non-interact/incorrect", "non-interact/correct",
                                                       "interact/incorrect", "interact/correct"};
  return names[g];
}

inline void write_interact_report(std::ostream& out, const InteractSplit& s, ReportFormat f) {
  switch (f) {
    case ReportFormat::Txt: {
      out << "pooled attribution by action kind and correctness\nnorm " << norm_name(s.norm) << "\nskipped "
          << s.skipped << "\n\n";
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-23s %6s %11s %11s %11s %11s %11s %11s\n", "group", "count", "vis", "vis_std",
                    "act", "act_std", "lang", "lang_std");
      out << buf;
      for (std::size_t g = 0; g < 4; ++g) {
        const SplitGroup& grp = s.groups[g];
        std::snprintf(buf, sizeof buf, "%-23s %6zu %11.6g %11.6g %11.6g %11.6g %11.6g %11.6g\n", split_group_name(g),
                      grp.count, grp.mean[0], grp.std[0], grp.mean[1], grp.std[1], grp.mean[2], grp.std[2]);
        out << buf;
      }
      return;
    }
    case ReportFormat::Csv:
      out << "interact,correct,count,vis_mean,act_mean,lang_mean,vis_std,act_std,lang_std\n";
      for (const SplitGroup& grp : s.groups) {
        out << (grp.interact ? 1 : 0) << ',' << (grp.correct ? 1 : 0) << ',' << grp.count;
        for (double v : grp.mean) out << ',' << fmt6(v);
        for (double v : grp.std) out << ',' << fmt6(v);
        out << '\n';
      }
      return;
    case ReportFormat::Svg: {
      double top = 0.0;
      for (const SplitGroup& grp : s.groups)
        for (std::size_t m = 0; m < kNumModalities; ++m) top = std::max(top, grp.mean[m] + grp.std[m]);
      const double ymax = svg::nice_max(top);
      svg::open(out, std::string("attribution by action kind (") + norm_name(s.norm) + ")", ymax, "pooled attribution");
      svg::legend(out);
      const double slot = svg::plot_w() / 4.0;
      for (std::size_t g = 0; g < 4; ++g) {
        const SplitGroup& grp = s.groups[g];
        for (std::size_t m = 0; m < kNumModalities; ++m) {
          const double w = slot * 0.8 / 3.0;
          const double x = svg::kLeft + slot * static_cast<double>(g) + slot * 0.1 + w * static_cast<double>(m);
          const double y = svg::y_of(grp.mean[m], ymax);
          out << "<rect x=\"" << fmt6(x) << "\" y=\"" << fmt6(y) << "\" width=\"" << fmt6(w) << "\" height=\""
              << fmt6(svg::kHeight - svg::kBottom - y) << "\" fill=\"" << svg::kModalityColors[m] << "\"/>\n";
        }
        out << "<text x=\"" << fmt6(svg::kLeft + slot * (static_cast<double>(g) + 0.5)) << "\" y=\""
            << svg::kHeight - svg::kBottom + 16 << "\" text-anchor=\"middle\" font-size=\"9\">" << split_group_name(g)
            << " (" << grp.count << ")</text>\n";
      }
      out << "</svg>\n";
      return;
    }
  }
}

inline void write_language_report(std::ostream& out, const FocusCurve& c, ReportFormat f) {
  if (c.points.empty()) throw Error("language report: empty focus curve");
  const std::size_t bins = c.bin_mean.size();
  switch (f) {
    case ReportFormat::Txt: {
      out << "focus center over episode completion\npoints " << c.points.size() << "\nskipped " << c.skipped
          << "\n\n";
      char buf[96];
      std::snprintf(buf, sizeof buf, "%-11s %7s %12s\n", "completion", "count", "c_scaled");
      out << buf;
      for (std::size_t b = 0; b < bins; ++b) {
        const std::string range = fmt6(100.0 * static_cast<double>(b) / static_cast<double>(bins)) + "-" +
                                  fmt6(100.0 * static_cast<double>(b + 1) / static_cast<double>(bins)) + "%";
        std::snprintf(buf, sizeof buf, "%-11s %7zu %12.6g\n", range.c_str(), c.bin_count[b], c.bin_mean[b]);
        out << buf;
      }
      return;
    }
    case ReportFormat::Csv: write_focus_csv(out, c); return;
    case ReportFormat::Svg: {
      svg::open(out, "focus center of language attributions", 1.0, "c_scaled");
      for (const auto& p : c.points) {
        const double x = svg::kLeft + svg::plot_w() * p.pct_complete / 100.0;
        out << "<circle cx=\"" << fmt6(x) << "\" cy=\"" << fmt6(svg::y_of(p.focus, 1.0))
            << "\" r=\"2\" fill=\"#21918c\" fill-opacity=\"0.4\"/>\n";
      }
      out << "<polyline fill=\"none\" stroke=\"#440154\" stroke-width=\"2\" points=\"";
      bool first = true;
      for (std::size_t b = 0; b < bins; ++b) {
        if (!c.bin_count[b]) continue;
        const double x = svg::kLeft + svg::plot_w() * (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
        out << (first ? "" : " ") << fmt6(x) << ',' << fmt6(svg::y_of(c.bin_mean[b], 1.0));
        first = false;
      }
      out << "\"/>\n<text x=\"" << svg::kLeft + svg::plot_w() / 2 << "\" y=\"" << svg::kHeight - 10
          << "\" text-anchor=\"middle\">% episode completion</text>\n</svg>\n";
      return;
    }
  }
}

/// Writes through `render` into `path`, surfacing I/O failures.
inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& render) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  render(out);
  out.flush();
  if (!out) throw Error("write failed: " + path);
}

}  // namespace maea
