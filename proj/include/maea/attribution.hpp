// SPDX-License-Identifier: Apache-2.0
//
// grad⊙input at the fusion layer: for each modality slice z_m of the fusion
// activation, α_m = ∂target/∂z_m ⊙ z_m. Each α_m is pooled to a scalar and the
// three scalars are normalized to percentage shares.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "maea/autodiff.hpp"
#include "maea/error.hpp"
#include "maea/gridworld.hpp"
#include "maea/policy.hpp"

namespace maea {

enum class TargetMode { ArgmaxLogit, ArgmaxProb, ExpertLogit, Loss };

inline const char* target_mode_name(TargetMode m) {
  switch (m) {
    case TargetMode::ArgmaxLogit: return "argmax-logit";
    case TargetMode::ArgmaxProb: return "argmax-prob";
    case TargetMode::ExpertLogit: return "expert-action";
    case TargetMode::Loss: return "loss";
  }
  return "?";
}

inline TargetMode parse_target_mode(std::string_view s) {
  for (TargetMode m : {TargetMode::ArgmaxLogit, TargetMode::ArgmaxProb, TargetMode::ExpertLogit, TargetMode::Loss})
    if (s == target_mode_name(m)) return m;
  throw Error("unknown target mode: " + std::string(s));
}

inline bool needs_expert(TargetMode m) { return m == TargetMode::ExpertLogit || m == TargetMode::Loss; }

enum class PoolNorm { Linf = 0, L1 = 1, L1d = 2, L2 = 3, L2d = 4 };
inline constexpr std::size_t kNumNorms = 5;
inline constexpr std::array<PoolNorm, kNumNorms> kNorms = {PoolNorm::Linf, PoolNorm::L1, PoolNorm::L1d, PoolNorm::L2,
                                                           PoolNorm::L2d};

inline const char* norm_name(PoolNorm n) {
  switch (n) {
    case PoolNorm::Linf: return "linf";
    case PoolNorm::L1: return "l1";
    case PoolNorm::L1d: return "l1d";
    case PoolNorm::L2: return "l2";
    case PoolNorm::L2d: return "l2d";
  }
  return "?";
}

inline PoolNorm parse_norm(std::string_view s) {
  for (PoolNorm n : kNorms)
    if (s == norm_name(n)) return n;
  throw Error("unknown pooling norm: " + std::string(s));
}

/// Reduces an attribution vector to a nonnegative scalar; d is its length.
inline double pool(std::span<const double> a, PoolNorm norm) {
  if (a.empty()) throw Error("pool: empty attribution vector");
  double l1 = 0.0;
  double sq = 0.0;
  double mx = 0.0;
  for (double v : a) {
    const double m = std::abs(v);
    l1 += m;
    sq += v * v;
    mx = std::max(mx, m);
  }
  const double d = static_cast<double>(a.size());
  switch (norm) {
    case PoolNorm::Linf: return mx;
    case PoolNorm::L1: return l1;
    case PoolNorm::L1d: return l1 / d;
    case PoolNorm::L2: return std::sqrt(sq);
    case PoolNorm::L2d: return std::sqrt(sq) / d;
  }
  return 0.0;
}

using Triple = std::array<double, kNumModalities>;

/// Percentages of the pooled total per modality. An all-zero triple has no
/// shares and raises DegenerateError.
inline Triple modality_shares(const Triple& pooled) {
  double total = 0.0;
  for (double v : pooled) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("modality_shares: pooled values must be finite and nonnegative");
    total += v;
  }
  if (total <= 0.0) throw DegenerateError("modality_shares: all pooled attributions are zero");
  Triple s{};
  for (std::size_t m = 0; m < kNumModalities; ++m) s[m] = 100.0 * pooled[m] / total;
  return s;
}

/// The scalar being explained, built on the step's tape. `action` is the
/// fixed action index for the argmax modes (resolved from the real input) or
/// the expert action for the others.
inline ad::Var target_objective(const StepOutputs& out, TargetMode mode, std::size_t action) {
  switch (mode) {
    case TargetMode::ArgmaxLogit:
    case TargetMode::ExpertLogit: return ad::pick(out.logits, action);
    case TargetMode::ArgmaxProb: {
      const std::size_t n = out.logits.value().size();
      return ad::pick(ad::reshape(ad::softmax(ad::reshape(out.logits, {1, n})), {n}), action);
    }
    case TargetMode::Loss: return ad::cross_entropy(out.logits, action);
  }
  throw Error("target_objective: bad mode");
}

/// Action index the target refers to: the argmax of `logits` or the expert.
inline std::size_t target_action(const Tensor& logits, TargetMode mode, int expert) {
  if (needs_expert(mode)) {
    if (expert < 0 || expert >= static_cast<int>(logits.size())) {
      throw Error(std::string("target mode ") + target_mode_name(mode) + " needs the expert action");
    }
    return static_cast<std::size_t>(expert);
  }
  return argmax(logits.data());
}

/// Elementwise gradient-of-`target` times value of `node`, on the trace's tape.
inline Tensor grad_times_input(const ad::Tape& tape, ad::Var target, ad::Var node) {
  const ad::GradientMap g = tape.backward(target);
  const Tensor& grad = g[node];
  Tensor out = node.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= grad[i];
  return out;
}

struct FusionAttribution {
  std::array<std::vector<double>, kNumModalities> alpha;
  std::size_t predicted = 0;
  Tensor logits;
  Tensor next_hidden;
};

/// grad⊙input on each modality slice of the fusion activation. `expert` is
/// needed by the expert-action and loss modes.
inline FusionAttribution fusion_attribution(const PolicyParameters& params, const Observation& obs,
                                            const Tensor& hidden, TargetMode mode, int expert = -1,
                                            const StepOptions& opt = {}) {
  const StepTrace trace = policy_step(params, obs, hidden, opt);
  FusionAttribution r;
  r.logits = trace.logits();
  r.next_hidden = trace.hidden();
  r.predicted = argmax(r.logits.data());
  const ad::Var target = target_objective(trace.out, mode, target_action(r.logits, mode, expert));
  const Tensor alpha = grad_times_input(*trace.tape, target, trace.out.fusion.node);
  for (Modality m : kModalities) r.alpha[static_cast<std::size_t>(m)] = trace.out.fusion.slice_values(m, alpha);
  return r;
}

struct AttributionRecord {
  std::size_t trajectory_id = 0;
  std::size_t t = 0;
  std::size_t T = 0;
  std::uint64_t seed = 0;
  int predicted_action = 0;
  int expert_action = 0;
  /// Interact flag of the predicted action.
  bool interact = false;
  bool correct = false;
  /// pooled[norm][modality]
  std::array<Triple, kNumNorms> pooled{};
  /// Shares under the selected norm; absent for degenerate steps.
  std::optional<Triple> shares;
  std::optional<std::array<std::vector<double>, kNumModalities>> alpha;

  bool degenerate() const { return !shares.has_value(); }
  const Triple& pooled_by(PoolNorm n) const { return pooled[static_cast<std::size_t>(n)]; }

  friend bool operator==(const AttributionRecord&, const AttributionRecord&) = default;
};

inline AttributionRecord make_record(const std::array<std::vector<double>, kNumModalities>& alpha, PoolNorm norm,
                                     bool keep_raw) {
  AttributionRecord rec;
  for (PoolNorm n : kNorms)
    for (std::size_t m = 0; m < kNumModalities; ++m) rec.pooled[static_cast<std::size_t>(n)][m] = pool(alpha[m], n);
  try {
    rec.shares = modality_shares(rec.pooled_by(norm));
  } catch (const DegenerateError&) {
    rec.shares.reset();
  }
  if (keep_raw) rec.alpha = alpha;
  return rec;
}

struct AttributionOptions {
  TargetMode mode = TargetMode::ArgmaxLogit;
  PoolNorm norm = PoolNorm::L2;
  bool dump_raw = false;
  std::uint64_t seed = 0;
};

/// One record per step along the expert trajectory, hidden state driven by
/// the expert's observations.
inline std::vector<AttributionRecord> attribute_trajectory(const PolicyParameters& params, const Trajectory& traj,
                                                           const AttributionOptions& opt = {}) {
  if (traj.steps.empty()) throw Error("attribute_trajectory: empty trajectory");
  std::vector<AttributionRecord> out;
  Tensor hidden = initial_hidden(params.desc);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& st = traj.steps[t];
    const int expert = static_cast<int>(st.expert);
    const FusionAttribution fa = fusion_attribution(params, st.obs, hidden, opt.mode, expert);
    AttributionRecord rec = make_record(fa.alpha, opt.norm, opt.dump_raw);
    rec.trajectory_id = traj.id;
    rec.t = t + 1;
    rec.T = traj.steps.size();
    rec.seed = opt.seed;
    rec.predicted_action = static_cast<int>(fa.predicted);
    rec.expert_action = expert;
    rec.interact = is_interact(static_cast<Action>(rec.predicted_action));
    rec.correct = rec.predicted_action == rec.expert_action;
    out.push_back(std::move(rec));
    hidden = fa.next_hidden;
  }
  return out;
}

inline std::vector<AttributionRecord> attribute_dataset(const PolicyParameters& params, const Dataset& data,
                                                        const AttributionOptions& opt = {}) {
  std::vector<AttributionRecord> out;
  for (const auto& traj : data) {
    auto recs = attribute_trajectory(params, traj, opt);
    out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record files: a header line, a JSON metadata line, then one JSON record per
// line.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kAttributionHeader = "# maea-attribution v1";

struct AttributionMeta {
  std::string condition = "trained";
  TargetMode mode = TargetMode::ArgmaxLogit;
  PoolNorm norm = PoolNorm::L2;
  std::vector<std::uint64_t> seeds;
  friend bool operator==(const AttributionMeta&, const AttributionMeta&) = default;
};

struct AttributionFile {
  AttributionMeta meta;
  std::vector<AttributionRecord> records;
};

namespace detail {

inline nlohmann::ordered_json triple_json(const Triple& t) {
  nlohmann::ordered_json j;
  for (Modality m : kModalities) j[modality_name(m)] = t[static_cast<std::size_t>(m)];
  return j;
}

inline Triple triple_from(const nlohmann::json& j) {
  Triple t{};
  for (Modality m : kModalities) t[static_cast<std::size_t>(m)] = j.at(modality_name(m)).get<double>();
  return t;
}

}  // namespace detail

inline nlohmann::ordered_json record_json(const AttributionRecord& r) {
  nlohmann::ordered_json j;
  j["trajectory_id"] = r.trajectory_id;
  j["t"] = r.t;
  j["T"] = r.T;
  j["seed"] = r.seed;
  j["predicted_action"] = r.predicted_action;
  j["expert_action"] = r.expert_action;
  j["interact"] = r.interact;
  j["correct"] = r.correct;
  nlohmann::ordered_json pooled;
  for (PoolNorm n : kNorms) pooled[norm_name(n)] = detail::triple_json(r.pooled_by(n));
  j["pooled"] = pooled;
  j["shares"] = r.shares ? detail::triple_json(*r.shares) : nlohmann::ordered_json(nullptr);
  j["degenerate"] = r.degenerate();
  if (r.alpha) {
    nlohmann::ordered_json a;
    for (Modality m : kModalities) a[modality_name(m)] = (*r.alpha)[static_cast<std::size_t>(m)];
    j["alpha"] = a;
  }
  return j;
}

inline AttributionRecord record_from_json(const nlohmann::json& j) {
  AttributionRecord r;
  r.trajectory_id = j.at("trajectory_id").get<std::size_t>();
  r.t = j.at("t").get<std::size_t>();
  r.T = j.at("T").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.predicted_action = j.at("predicted_action").get<int>();
  r.expert_action = j.at("expert_action").get<int>();
  r.interact = j.at("interact").get<bool>();
  r.correct = j.at("correct").get<bool>();
  for (PoolNorm n : kNorms) r.pooled[static_cast<std::size_t>(n)] = detail::triple_from(j.at("pooled").at(norm_name(n)));
  if (!j.at("shares").is_null()) r.shares = detail::triple_from(j.at("shares"));
  if (j.at("degenerate").get<bool>() != r.degenerate()) throw Error("degenerate flag disagrees with shares");
  if (j.contains("alpha")) {
    std::array<std::vector<double>, kNumModalities> a;
    for (Modality m : kModalities) a[static_cast<std::size_t>(m)] = j.at("alpha").at(modality_name(m)).get<std::vector<double>>();
    r.alpha = std::move(a);
  }
  return r;
}

inline void write_attributions(std::ostream& out, const AttributionFile& file) {
  out << kAttributionHeader << '\n';
  nlohmann::ordered_json meta;
  meta["condition"] = file.meta.condition;
  meta["target"] = target_mode_name(file.meta.mode);
  meta["norm"] = norm_name(file.meta.norm);
  meta["seeds"] = file.meta.seeds;
  out << meta.dump() << '\n';
  for (const auto& r : file.records) out << record_json(r).dump() << '\n';
}

inline AttributionFile read_attributions(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kAttributionHeader) {
    throw Error("attribution file: missing header '" + std::string(kAttributionHeader) + "'");
  }
  AttributionFile file;
  std::size_t line_no = 1;
  try {
    if (!std::getline(in, line)) throw Error("missing metadata line");
    ++line_no;
    const auto meta = nlohmann::json::parse(line);
    file.meta.condition = meta.at("condition").get<std::string>();
    file.meta.mode = parse_target_mode(meta.at("target").get<std::string>());
    file.meta.norm = parse_norm(meta.at("norm").get<std::string>());
    file.meta.seeds = meta.at("seeds").get<std::vector<std::uint64_t>>();
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      file.records.push_back(record_from_json(nlohmann::json::parse(line)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("attribution file line " + std::to_string(line_no) + ": " + e.what());
  } catch (const Error& e) {
    throw Error("attribution file line " + std::to_string(line_no) + ": " + e.what());
  }
  return file;
}

inline void save_attributions(const std::string& path, const AttributionFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_attributions(out, file);
  if (!out) throw Error("write failed: " + path);
}

inline AttributionFile load_attributions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  return read_attributions(in);
}

}  // namespace maea
