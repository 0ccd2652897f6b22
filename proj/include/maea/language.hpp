// SPDX-License-Identifier: Apache-2.0
//
// Word-level attribution on the instruction's embedding matrix M (n × d):
// α_M = ∂target/∂M ⊙ M, α_w[i] = max_j |α_M[i][j]|, and the focus center
// c = Σ (i+1)·α_w[i] / (n · Σ α_w), which lies in [1/n, 1].
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "maea/attribution.hpp"
#include "maea/error.hpp"
#include "maea/gridworld.hpp"
#include "maea/policy.hpp"

namespace maea {

struct WordAttribution {
  /// max |α_M| per token, non-PAD tokens only.
  std::vector<double> alpha_w;
  /// The signed α_M entry attaining that max (lowest dim on ties).
  std::vector<double> signed_values;
  Tensor alpha_m;
  std::size_t predicted = 0;
  Tensor next_hidden;
};

inline WordAttribution word_attributions(const PolicyParameters& params, const Observation& obs,
                                         const Tensor& hidden, TargetMode mode, int expert = -1) {
  if (content_tokens(obs).empty()) throw Error("word_attributions: instruction has no non-PAD tokens");
  const StepTrace trace = policy_step(params, obs, hidden);
  WordAttribution r;
  const Tensor logits = trace.logits();
  r.predicted = argmax(logits.data());
  r.next_hidden = trace.hidden();
  const ad::Var target = target_objective(trace.out, mode, target_action(logits, mode, expert));
  r.alpha_m = grad_times_input(*trace.tape, target, trace.out.word_embeddings);
  const std::size_t n = r.alpha_m.rows();
  const std::size_t d = r.alpha_m.cols();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(r.alpha_m(i, j)) > std::abs(r.alpha_m(i, best))) best = j;
    r.alpha_w.push_back(std::abs(r.alpha_m(i, best)));
    r.signed_values.push_back(r.alpha_m(i, best));
  }
  return r;
}

/// Normalized attribution-weighted mean word position. Throws
/// DegenerateError when every α_w is zero.
inline double focus_center(std::span<const double> alpha_w) {
  if (alpha_w.empty()) throw Error("focus_center: no tokens");
  double mass = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < alpha_w.size(); ++i) {
    if (!(alpha_w[i] >= 0.0) || !std::isfinite(alpha_w[i])) {
      throw Error("focus_center: word attributions must be finite and nonnegative");
    }
    mass += alpha_w[i];
    weighted += static_cast<double>(i + 1) * alpha_w[i];
  }
  if (mass <= 0.0) throw DegenerateError("focus_center: all word attributions are zero");
  return weighted / (mass * static_cast<double>(alpha_w.size()));
}

struct TokenAttribution {
  std::size_t trajectory_id = 0;
  std::size_t t = 0;
  std::size_t T = 0;
  std::vector<int> tokens;
  std::vector<double> alpha_w;
  std::vector<double> signed_values;
  /// Absent when every α_w is zero.
  std::optional<double> focus;
};

inline std::vector<TokenAttribution> attribute_words(const PolicyParameters& params, const Trajectory& traj,
                                                     TargetMode mode = TargetMode::ArgmaxLogit) {
  std::vector<TokenAttribution> out;
  Tensor hidden = initial_hidden(params.desc);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& st = traj.steps[t];
    const WordAttribution wa = word_attributions(params, st.obs, hidden, mode, static_cast<int>(st.expert));
    TokenAttribution rec;
    rec.trajectory_id = traj.id;
    rec.t = t + 1;
    rec.T = traj.steps.size();
    for (std::size_t id : content_tokens(st.obs)) rec.tokens.push_back(static_cast<int>(id));
    rec.alpha_w = wa.alpha_w;
    rec.signed_values = wa.signed_values;
    try {
      rec.focus = focus_center(rec.alpha_w);
    } catch (const DegenerateError&) {
      rec.focus.reset();
    }
    out.push_back(std::move(rec));
    hidden = wa.next_hidden;
  }
  return out;
}

/// Completion bin of step t (1-based) in a trajectory of length T.
inline std::size_t completion_bin(std::size_t t, std::size_t T, std::size_t bins) {
  if (T == 0 || bins == 0) throw Error("completion_bin: T and bins must be positive");
  const std::size_t b = bins * (t - 1) / T;
  return std::min(b, bins - 1);
}

struct FocusPoint {
  std::size_t trajectory_id = 0;
  std::size_t t = 0;
  std::size_t T = 0;
  double pct_complete = 0.0;
  double focus = 0.0;
};

struct FocusCurve {
  std::vector<FocusPoint> points;
  std::vector<double> bin_mean;
  std::vector<std::size_t> bin_count;
  std::size_t skipped = 0;
};

/// Scatter of (t/T %, c) plus per-bin means; degenerate steps are counted in
/// `skipped`.
inline FocusCurve focus_curve(const std::vector<TokenAttribution>& records, std::size_t bins = 10) {
  if (bins == 0) throw Error("focus_curve: bins must be positive");
  FocusCurve c;
  c.bin_mean.assign(bins, 0.0);
  c.bin_count.assign(bins, 0);
  for (const auto& r : records) {
    if (!r.focus) {
      ++c.skipped;
      continue;
    }
    c.points.push_back({r.trajectory_id, r.t, r.T, 100.0 * static_cast<double>(r.t) / static_cast<double>(r.T),
                        *r.focus});
    const std::size_t b = completion_bin(r.t, r.T, bins);
    c.bin_mean[b] += *r.focus;
    ++c.bin_count[b];
  }
  if (c.points.empty()) throw DegenerateError("focus_curve: no non-degenerate steps");
  for (std::size_t b = 0; b < bins; ++b)
    if (c.bin_count[b]) c.bin_mean[b] /= static_cast<double>(c.bin_count[b]);
  return c;
}

inline void write_focus_csv(std::ostream& out, const FocusCurve& curve) {
  out << "trajectory_id,t,T,pct_complete,c_scaled\n";
  char buf[160];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6g,%.6g\n", p.trajectory_id, p.t, p.T, p.pct_complete, p.focus);
    out << buf;
  }
}

/// Per-token dump: trajectory_id, t, position, token, alpha_w, signed.
inline void write_word_csv(std::ostream& out, const std::vector<TokenAttribution>& records) {
  out << "trajectory_id,t,position,token,alpha_w,signed\n";
  char buf[160];
  for (const auto& r : records)
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      const std::string word(vocabulary()[static_cast<std::size_t>(r.tokens[i])]);
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%s,%.6g,%.6g\n", r.trajectory_id, r.t, i + 1, word.c_str(),
                    r.alpha_w[i], r.signed_values[i]);
      out << buf;
    }
}

}  // namespace maea
