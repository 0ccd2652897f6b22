// SPDX-License-Identifier: Apache-2.0
//
// Region-level visual attribution: integrated gradients over the 8×7×7
// visual input, a deterministic partition of the 7×7 view into regions, and a
// ranking of regions by attribution density.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maea/attribution.hpp"
#include "maea/error.hpp"
#include "maea/gridworld.hpp"
#include "maea/policy.hpp"

namespace maea {

inline constexpr std::size_t kCells = kView * kView;
using CellMap = std::array<double, kCells>;

// ---------------------------------------------------------------------------
// Integrated gradients
// ---------------------------------------------------------------------------

struct IntegratedGradients {
  /// Flattened 8×7×7 attribution, indexed by visual_index.
  Tensor channels;
  /// Action the target refers to, resolved once at the real input.
  std::size_t action = 0;
  double target_input = 0.0;
  double target_baseline = 0.0;

  double total() const { return std::accumulate(channels.data().begin(), channels.data().end(), 0.0); }
  /// |Σ IG − Δtarget| / |Δtarget|.
  double completeness_error() const {
    const double delta = target_input - target_baseline;
    return std::abs(total() - delta) / std::abs(delta);
  }
};

/// Midpoint-rule path integral of `grad_at` from `baseline` to `input`,
/// times (input − baseline). `grad_at(point)` returns the target's gradient at
/// a point on the straight path.
template <typename GradFn>
Tensor integrate_path(const Tensor& input, const Tensor& baseline, int steps, GradFn&& grad_at) {
  if (steps < 1) throw Error("integrated gradients: steps must be at least 1, got " + std::to_string(steps));
  if (!input.same_shape(baseline)) {
    throw Error("integrated gradients: baseline shape " + baseline.shape_string() + " differs from input " +
                input.shape_string());
  }
  Tensor sum(input.dims());
  Tensor point(input.dims());
  for (int k = 1; k <= steps; ++k) {
    const double a = (static_cast<double>(k) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < point.size(); ++i) point[i] = baseline[i] + a * (input[i] - baseline[i]);
    const Tensor g = grad_at(point);
    if (!g.same_shape(input)) throw Error("integrated gradients: gradient shape " + g.shape_string());
    for (std::size_t i = 0; i < g.size(); ++i) sum[i] += g[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] *= (input[i] - baseline[i]) / static_cast<double>(steps);
  return sum;
}

/// Integrated gradients of the policy target over the visual input, from
/// `baseline` (all zeros when empty). The target's action is fixed at the
/// real input so every path point differentiates the same scalar.
inline IntegratedGradients integrated_gradients(const PolicyParameters& params, const Observation& obs,
                                                const Tensor& hidden, int steps,
                                                TargetMode mode = TargetMode::ArgmaxLogit, int expert = -1,
                                                Tensor baseline = {}) {
  const std::vector<std::size_t> flat = {static_cast<std::size_t>(kVisualSize)};
  const Tensor input = obs.visual_tensor().reshaped(flat);
  if (baseline.empty()) baseline = Tensor(flat);
  if (baseline.size() != input.size()) throw Error("integrated_gradients: baseline has shape " + baseline.shape_string());
  baseline = baseline.reshaped(flat);

  IntegratedGradients ig;
  ig.action = target_action(policy_step(params, obs, hidden).logits(), mode, expert);
  auto evaluate = [&](const Tensor& visual, Tensor* grad) {
    StepOptions opt;
    opt.visual = visual;
    const StepTrace trace = policy_step(params, obs, hidden, opt);
    const ad::Var target = target_objective(trace.out, mode, ig.action);
    if (grad) *grad = trace.tape->backward(target)[trace.out.visual];
    return target.value()[0];
  };
  ig.target_input = evaluate(input, nullptr);
  ig.target_baseline = evaluate(baseline, nullptr);
  ig.channels = integrate_path(input, baseline, steps, [&](const Tensor& point) {
    Tensor g;
    evaluate(point, &g);
    return g;
  });
  return ig;
}

/// Per-cell map: the channel sum of a flattened 8×7×7 attribution.
inline CellMap cell_map(const Tensor& channels) {
  if (channels.size() != static_cast<std::size_t>(kVisualSize)) {
    throw Error("cell_map: expected " + std::to_string(kVisualSize) + " values, got " + channels.shape_string());
  }
  CellMap m{};
  for (int ch = 0; ch < kChannels; ++ch)
    for (int r = 0; r < kView; ++r)
      for (int c = 0; c < kView; ++c) m[static_cast<std::size_t>(r * kView + c)] += channels[visual_index(ch, r, c)];
  return m;
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

/// Regions as sorted cell indices (row · 7 + col), ordered by smallest cell.
using Partition = std::vector<std::vector<std::size_t>>;

enum class SegmentMode { Grid, Merge };

inline SegmentMode parse_segment_mode(std::string_view s) {
  if (s == "grid") return SegmentMode::Grid;
  if (s == "merge") return SegmentMode::Merge;
  throw Error("unknown segment mode: " + std::string(s));
}

/// Square blocks of `block` cells anchored at the top-left; edge blocks are
/// cut short.
inline Partition segment_grid(int block) {
  if (block < 1 || block > kView) {
    throw Error("segment_grid: block size must be in [1, " + std::to_string(kView) + "], got " + std::to_string(block));
  }
  const int per_side = (kView + block - 1) / block;
  Partition p(static_cast<std::size_t>(per_side * per_side));
  for (int r = 0; r < kView; ++r)
    for (int c = 0; c < kView; ++c)
      p[static_cast<std::size_t>((r / block) * per_side + c / block)].push_back(static_cast<std::size_t>(r * kView + c));
  return p;
}

/// Connected components of 4-adjacent cells whose 8-channel signatures match.
inline Partition segment_merge(const Observation& obs) {
  auto signature = [&](std::size_t cell) {
    unsigned sig = 0;
    for (int ch = 0; ch < kChannels; ++ch)
      if (obs.visual[visual_index(ch, static_cast<int>(cell) / kView, static_cast<int>(cell) % kView)]) sig |= 1u << ch;
    return sig;
  };
  std::array<int, kCells> label;
  label.fill(-1);
  Partition p;
  for (std::size_t start = 0; start < kCells; ++start) {
    if (label[start] >= 0) continue;
    const int id = static_cast<int>(p.size());
    const unsigned sig = signature(start);
    std::vector<std::size_t> region;
    std::vector<std::size_t> stack = {start};
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t cell = stack.back();
      stack.pop_back();
      region.push_back(cell);
      const int r = static_cast<int>(cell) / kView;
      const int c = static_cast<int>(cell) % kView;
      const std::array<std::pair<int, int>, 4> nbrs = {{{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}}};
      for (auto [nr, nc] : nbrs) {
        if (nr < 0 || nr >= kView || nc < 0 || nc >= kView) continue;
        const auto next = static_cast<std::size_t>(nr * kView + nc);
        if (label[next] < 0 && signature(next) == sig) {
          label[next] = id;
          stack.push_back(next);
        }
      }
    }
    std::sort(region.begin(), region.end());
    p.push_back(std::move(region));
  }
  return p;
}

inline Partition segment(const Observation& obs, SegmentMode mode, int block = 1) {
  return mode == SegmentMode::Grid ? segment_grid(block) : segment_merge(obs);
}

/// Throws unless every cell appears in exactly one region.
inline void validate_partition(const Partition& p) {
  std::array<int, kCells> seen{};
  for (const auto& region : p) {
    if (region.empty()) throw Error("partition: empty region");
    for (std::size_t cell : region) {
      if (cell >= kCells) throw Error("partition: cell index " + std::to_string(cell) + " out of range");
      if (seen[cell]++) throw Error("partition: cell " + std::to_string(cell) + " appears twice");
    }
  }
  for (std::size_t cell = 0; cell < kCells; ++cell)
    if (!seen[cell]) throw Error("partition: cell " + std::to_string(cell) + " not covered");
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

struct Region {
  std::vector<std::size_t> cells;
  std::size_t area = 0;
  double total = 0.0;
  double density = 0.0;
  std::size_t rank = 0;
};

struct RegionAttribution {
  /// In rank order; regions[i].rank == i + 1.
  std::vector<Region> regions;
  /// Running sum of region totals in rank order.
  std::vector<double> cumulative;
};

/// Orders regions by nonincreasing density; ties go to the smaller region,
/// then to the smaller minimum cell.
inline RegionAttribution rank_regions(const CellMap& map, const Partition& partition) {
  validate_partition(partition);
  RegionAttribution out;
  for (const auto& cells : partition) {
    Region r;
    r.cells = cells;
    std::sort(r.cells.begin(), r.cells.end());
    r.area = cells.size();
    for (std::size_t c : cells) r.total += map[c];
    r.density = r.total / static_cast<double>(r.area);
    out.regions.push_back(std::move(r));
  }
  std::sort(out.regions.begin(), out.regions.end(), [](const Region& a, const Region& b) {
    if (a.density != b.density) return a.density > b.density;
    if (a.area != b.area) return a.area < b.area;
    return a.cells.front() < b.cells.front();
  });
  double running = 0.0;
  for (std::size_t i = 0; i < out.regions.size(); ++i) {
    out.regions[i].rank = i + 1;
    running += out.regions[i].total;
    out.cumulative.push_back(running);
  }
  return out;
}

/// Each cell takes the density of its region.
inline CellMap density_map(const RegionAttribution& ra) {
  CellMap m{};
  for (const auto& r : ra.regions)
    for (std::size_t c : r.cells) m[c] = r.density;
  return m;
}

/// rank, area, total, density, cells (space-separated row:col).
inline void write_region_csv(std::ostream& out, const RegionAttribution& ra) {
  out << "rank,area,total,density,cells\n";
  char buf[128];
  for (const auto& r : ra.regions) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.6g,%.6g,", r.rank, r.area, r.total, r.density);
    out << buf;
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
      if (i) out << ' ';
      out << r.cells[i] / kView << ':' << r.cells[i] % kView;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

struct Rgb {
  int r = 0;
  int g = 0;
  int b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kRampLow{68, 1, 84};
inline constexpr Rgb kRampHigh{253, 231, 37};

/// Linear purple→yellow ramp at u ∈ [0, 1].
inline Rgb ramp(double u) {
  u = std::clamp(u, 0.0, 1.0);
  auto mix = [u](int lo, int hi) { return static_cast<int>(std::lround(lo + u * (hi - lo))); };
  return {mix(kRampLow.r, kRampHigh.r), mix(kRampLow.g, kRampHigh.g), mix(kRampLow.b, kRampHigh.b)};
}

/// Colors per cell over the map's [min, max]; a constant map is mid-ramp.
inline std::array<Rgb, kCells> heatmap_colors(const CellMap& map) {
  const auto [lo, hi] = std::minmax_element(map.begin(), map.end());
  std::array<Rgb, kCells> colors;
  for (std::size_t i = 0; i < kCells; ++i)
    colors[i] = *hi > *lo ? ramp((map[i] - *lo) / (*hi - *lo)) : ramp(0.5);
  return colors;
}

enum class ImageFormat { Ppm, Svg };

inline ImageFormat image_format_for(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".svg")) return ImageFormat::Svg;
  if (ends_with(".ppm")) return ImageFormat::Ppm;
  throw Error("heatmap path must end in .ppm or .svg: " + path);
}

/// Each cell becomes a `scale`×`scale` square; row 0 is the top of the view.
inline void write_heatmap(std::ostream& out, const CellMap& map, ImageFormat format, int scale = 16) {
  if (scale < 1) throw Error("write_heatmap: scale must be positive");
  const auto colors = heatmap_colors(map);
  const int side = kView * scale;
  if (format == ImageFormat::Ppm) {
    out << "P6\n" << side << ' ' << side << "\n255\n";
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const Rgb& c = colors[static_cast<std::size_t>((y / scale) * kView + x / scale)];
        const char px[3] = {static_cast<char>(c.r), static_cast<char>(c.g), static_cast<char>(c.b)};
        out.write(px, 3);
      }
    return;
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << side << "\" height=\"" << side << "\" viewBox=\"0 0 "
      << side << ' ' << side << "\">\n";
  for (int r = 0; r < kView; ++r)
    for (int c = 0; c < kView; ++c) {
      const Rgb& col = colors[static_cast<std::size_t>(r * kView + c)];
      out << "<rect x=\"" << c * scale << "\" y=\"" << r * scale << "\" width=\"" << scale << "\" height=\"" << scale
          << "\" fill=\"rgb(" << col.r << ',' << col.g << ',' << col.b << ")\"/>\n";
    }
  out << "</svg>\n";
}

inline void render_heatmap(const CellMap& map, const std::string& path, int scale = 16) {
  const ImageFormat format = image_format_for(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_heatmap(out, map, format, scale);
  if (!out) throw Error("write failed: " + path);
}

}  // namespace maea
