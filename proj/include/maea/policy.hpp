// SPDX-License-Identifier: Apache-2.0
//
// Two differentiable multimodal policies whose fusion point exposes labeled
// per-modality feature slices.
//
// Recurrent family:
//   v  = tanh(W_v·flatten(V) + b_v)
//   e  = embed(a_{t-1})
//   m_j = E[token_j],  k_j = m_j + P[j]  (j over non-PAD tokens)
//   w  = softmax_j(h_{t-1} · (W_a k_j)),  l = Σ_j w_j m_j
//   z  = [v, e, l]                      <- fusion point
//   h_t = tanh(W_c·[h_{t-1}, z] + b_c),   logits = W_o h_t + b_o
//
// Transformer family: tokens [visual, previous action, words...], each plus a
// modality-type and a position encoding, two blocks of multi-head
// self-attention and a tanh feedforward with residual adds. The last block's
// token outputs are the fusion point; logits = W_o·mean(tokens) + b_o.
#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "maea/autodiff.hpp"
#include "maea/error.hpp"
#include "maea/gridworld.hpp"
#include "maea/rng.hpp"
#include "maea/tensor.hpp"

namespace maea {

enum class Family { Recurrent, Transformer };

inline const char* family_name(Family f) { return f == Family::Recurrent ? "recurrent" : "transformer"; }

inline Family parse_family(std::string_view s) {
  if (s == "recurrent") return Family::Recurrent;
  if (s == "transformer") return Family::Transformer;
  throw Error("unknown architecture family: " + std::string(s));
}

enum class Modality : std::size_t { Vision = 0, Action = 1, Language = 2 };
inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<Modality, 3> kModalities = {Modality::Vision, Modality::Action, Modality::Language};

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Vision: return "vis";
    case Modality::Action: return "act";
    case Modality::Language: return "lang";
  }
  return "?";
}

struct PolicyDescriptor {
  Family family = Family::Recurrent;
  int hidden = 64;      // d_h, recurrent state width
  int vis_width = 32;   // d_v
  int act_width = 16;   // d_a
  int lang_width = 16;  // d_l; also the transformer token width
  int heads = 2;
  int ff_width = 32;    // transformer feedforward width
  int vocab = vocab_size();
  int actions = kNumActions;
  int max_tokens = 8;

  /// Width of one transformer token.
  int model_width() const { return lang_width; }

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0) throw Error(std::string("policy descriptor: ") + what + " must be positive");
    };
    positive(hidden, "hidden");
    positive(vis_width, "vis_width");
    positive(act_width, "act_width");
    positive(lang_width, "lang_width");
    positive(heads, "heads");
    positive(ff_width, "ff_width");
    positive(vocab, "vocab");
    positive(max_tokens, "max_tokens");
    if (actions != kNumActions) throw Error("policy descriptor: actions must be " + std::to_string(kNumActions));
    if (family == Family::Transformer) {
      if (act_width != lang_width) throw Error("policy descriptor: transformer needs act_width == lang_width");
      if (lang_width % heads != 0) throw Error("policy descriptor: lang_width must be divisible by heads");
    }
  }

  std::string to_text() const {
    std::ostringstream s;
    s << "family=" << family_name(family) << ";hidden=" << hidden << ";vis_width=" << vis_width
      << ";act_width=" << act_width << ";lang_width=" << lang_width << ";heads=" << heads << ";ff_width=" << ff_width
      << ";vocab=" << vocab << ";actions=" << actions << ";max_tokens=" << max_tokens;
    return s.str();
  }

  static PolicyDescriptor from_text(std::string_view text) {
    PolicyDescriptor d;
    std::map<std::string, std::string> kv;
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw Error("policy descriptor: malformed entry '" + item + "'");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    auto integer = [&](const char* key, int& out) {
      const auto it = kv.find(key);
      if (it == kv.end()) throw Error(std::string("policy descriptor: missing ") + key);
      try {
        out = std::stoi(it->second);
      } catch (const std::exception&) {
        throw Error(std::string("policy descriptor: bad value for ") + key);
      }
      kv.erase(it);
    };
    const auto fam = kv.find("family");
    if (fam == kv.end()) throw Error("policy descriptor: missing family");
    d.family = parse_family(fam->second);
    kv.erase(fam);
    integer("hidden", d.hidden);
    integer("vis_width", d.vis_width);
    integer("act_width", d.act_width);
    integer("lang_width", d.lang_width);
    integer("heads", d.heads);
    integer("ff_width", d.ff_width);
    integer("vocab", d.vocab);
    integer("actions", d.actions);
    integer("max_tokens", d.max_tokens);
    if (!kv.empty()) throw Error("policy descriptor: unknown key " + kv.begin()->first);
    d.validate();
    return d;
  }

  friend bool operator==(const PolicyDescriptor&, const PolicyDescriptor&) = default;
};

/// Expected parameter shapes, keyed by name (sorted).
inline std::map<std::string, std::vector<std::size_t>> parameter_shapes(const PolicyDescriptor& d) {
  d.validate();
  auto u = [](int v) { return static_cast<std::size_t>(v); };
  std::map<std::string, std::vector<std::size_t>> s;
  if (d.family == Family::Recurrent) {
    s["vis.W"] = {u(d.vis_width), u(kVisualSize)};
    s["vis.b"] = {u(d.vis_width)};
    s["act.E"] = {u(kNumPrevActions), u(d.act_width)};
    s["lang.E"] = {u(d.vocab), u(d.lang_width)};
    s["lang.P"] = {u(d.max_tokens), u(d.lang_width)};
    s["attn.W"] = {u(d.hidden), u(d.lang_width)};
    s["cell.W"] = {u(d.hidden), u(d.hidden + d.vis_width + d.act_width + d.lang_width)};
    s["cell.b"] = {u(d.hidden)};
    s["out.W"] = {u(d.actions), u(d.hidden)};
    s["out.b"] = {u(d.actions)};
  } else {
    const std::size_t w = u(d.model_width());
    const std::size_t head = w / u(d.heads);
    s["vis.W"] = {w, u(kVisualSize)};
    s["vis.b"] = {w};
    s["act.E"] = {u(kNumPrevActions), w};
    s["lang.E"] = {u(d.vocab), w};
    s["type.E"] = {kNumModalities, w};
    s["pos.E"] = {u(d.max_tokens) + 2, w};
    for (int b = 0; b < 2; ++b) {
      const std::string blk = "blk" + std::to_string(b) + ".";
      for (int h = 0; h < d.heads; ++h) {
        const std::string hd = blk + "h" + std::to_string(h) + ".";
        s[hd + "q.W"] = {head, w};
        s[hd + "k.W"] = {head, w};
        s[hd + "v.W"] = {head, w};
        s[hd + "o.W"] = {w, head};
      }
      s[blk + "ff1.W"] = {u(d.ff_width), w};
      s[blk + "ff1.b"] = {u(d.ff_width)};
      s[blk + "ff2.W"] = {w, u(d.ff_width)};
      s[blk + "ff2.b"] = {w};
    }
    s["out.W"] = {u(d.actions), w};
    s["out.b"] = {u(d.actions)};
  }
  return s;
}

inline bool is_bias(const std::string& name) { return name.size() >= 2 && name.substr(name.size() - 2) == ".b"; }

inline bool is_lookup_table(const std::string& name) {
  return name.size() >= 2 && (name.substr(name.size() - 2) == ".E" || name.substr(name.size() - 2) == ".P");
}

struct PolicyParameters {
  PolicyDescriptor desc;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("policy parameters: missing tensor " + name);
    return it->second;
  }
  Tensor& at(const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error("policy parameters: missing tensor " + name);
    return it->second;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }

  void validate() const {
    const auto shapes = parameter_shapes(desc);
    if (shapes.size() != tensors.size()) throw Error("policy parameters: wrong tensor count");
    for (const auto& [name, dims] : shapes) {
      if (at(name).dims() != dims) throw Error("policy parameters: shape mismatch for " + name);
    }
  }

  friend bool operator==(const PolicyParameters&, const PolicyParameters&) = default;
};

/// Weight matrices (out × in) draw from uniform(−1/√in, 1/√in); lookup tables
/// are indexed by one-hot ids (fan-in 1) and draw from uniform(−1, 1); biases
/// start at zero. Tensors are filled in name order from one stream.
inline PolicyParameters init_policy(const PolicyDescriptor& desc, std::uint64_t seed) {
  desc.validate();
  PolicyParameters p;
  p.desc = desc;
  Rng rng(seed);
  for (const auto& [name, dims] : parameter_shapes(desc)) {
    Tensor t(dims);
    if (!is_bias(name)) {
      const double fan_in = is_lookup_table(name) ? 1.0 : static_cast<double>(dims.back());
      const double bound = 1.0 / std::sqrt(fan_in);
      for (double& v : t.data()) v = rng.uniform(-bound, bound);
    }
    p.tensors.emplace(name, std::move(t));
  }
  return p;
}

/// Leaves for every parameter on one tape.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const PolicyParameters& params) : desc_(params.desc) {
    for (const auto& [name, t] : params.tensors) vars_.emplace(name, tape.input(t));
  }

  ad::Var operator[](const std::string& name) const {
    const auto it = vars_.find(name);
    if (it == vars_.end()) throw Error("bound parameters: missing " + name);
    return it->second;
  }

  const std::unordered_map<std::string, ad::Var>& all() const { return vars_; }
  const PolicyDescriptor& desc() const { return desc_; }

 private:
  PolicyDescriptor desc_;
  std::unordered_map<std::string, ad::Var> vars_;
};

struct SliceRange {
  std::size_t offset = 0;
  std::size_t width = 0;
};

/// The fusion-point activation with labeled modality slices. `node` is the
/// tape node holding it; `slices` index into its row-major flattening.
struct FusionFeatures {
  ad::Var node;
  std::array<SliceRange, kNumModalities> slices{};

  const Tensor& value() const { return node.value(); }

  std::vector<double> slice_values(Modality m, const Tensor& flat) const {
    const SliceRange r = slices[static_cast<std::size_t>(m)];
    return {flat.data().begin() + static_cast<std::ptrdiff_t>(r.offset),
            flat.data().begin() + static_cast<std::ptrdiff_t>(r.offset + r.width)};
  }
};

struct StepOptions {
  /// Replaces the observation's 0/1 visual input (integrated-gradient paths).
  std::optional<Tensor> visual;
  /// Zeroes whole modality slices at the fusion point before the head.
  std::array<bool, kNumModalities> zero_modality{};
};

struct StepOutputs {
  ad::Var logits;
  ad::Var hidden;  // recurrent only
  FusionFeatures fusion;
  ad::Var word_embeddings;  // n × d_l lookup rows, before position encodings
  ad::Var visual;           // flattened visual input leaf
  ad::Var attention;        // recurrent: weights over non-PAD tokens
};

inline std::vector<std::size_t> content_tokens(const Observation& obs) {
  std::vector<std::size_t> ids;
  for (int id : obs.tokens)
    if (id != kPad) ids.push_back(static_cast<std::size_t>(id));
  return ids;
}

inline Tensor initial_hidden(const PolicyDescriptor& d) {
  return d.family == Family::Recurrent ? Tensor({static_cast<std::size_t>(d.hidden)}) : Tensor();
}

namespace detail {

inline ad::Var mask_fusion(ad::Tape& tape, ad::Var z, const std::array<SliceRange, kNumModalities>& slices,
                           const std::array<bool, kNumModalities>& zero) {
  if (!zero[0] && !zero[1] && !zero[2]) return z;
  Tensor mask(z.value().dims(), 1.0);
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (!zero[m]) continue;
    for (std::size_t k = 0; k < slices[m].width; ++k) mask[slices[m].offset + k] = 0.0;
  }
  return z * tape.input(std::move(mask));
}

inline ad::Var visual_leaf(ad::Tape& tape, const Observation& obs, const StepOptions& opt) {
  if (opt.visual) {
    if (opt.visual->size() != static_cast<std::size_t>(kVisualSize)) {
      throw Error("policy_step: visual override has shape " + opt.visual->shape_string());
    }
    return tape.input(opt.visual->reshaped({static_cast<std::size_t>(kVisualSize)}));
  }
  std::vector<double> v(obs.visual.begin(), obs.visual.end());
  return tape.input(Tensor::vector(std::move(v)));
}

inline StepOutputs recurrent_step(ad::Tape& tape, const BoundParams& p, const Observation& obs, ad::Var hidden,
                                  const StepOptions& opt) {
  const PolicyDescriptor& d = p.desc();
  const auto ids = content_tokens(obs);
  if (ids.empty()) throw Error("policy_step: instruction has no non-PAD tokens");
  if (ids.size() > static_cast<std::size_t>(d.max_tokens)) throw Error("policy_step: too many tokens");
  if (obs.prev_action < 0 || obs.prev_action >= kNumPrevActions) throw Error("policy_step: bad previous action");
  if (hidden.value().size() != static_cast<std::size_t>(d.hidden)) throw Error("policy_step: hidden width mismatch");

  StepOutputs out;
  out.visual = visual_leaf(tape, obs, opt);
  const ad::Var v = ad::tanh(ad::matmul(p["vis.W"], out.visual) + p["vis.b"]);
  const ad::Var e = ad::reshape(ad::embedding(p["act.E"], {static_cast<std::size_t>(obs.prev_action)}),
                                {static_cast<std::size_t>(d.act_width)});
  out.word_embeddings = ad::embedding(p["lang.E"], ids);
  const ad::Var keys = out.word_embeddings + ad::slice(p["lang.P"], 0, ids.size());
  const ad::Var query = ad::matmul(ad::transpose(p["attn.W"]), hidden);
  out.attention = ad::reshape(ad::softmax(ad::reshape(ad::matmul(keys, query), {1, ids.size()})), {ids.size()});
  const ad::Var l = ad::matmul(ad::transpose(out.word_embeddings), out.attention);

  const std::size_t dv = static_cast<std::size_t>(d.vis_width);
  const std::size_t da = static_cast<std::size_t>(d.act_width);
  const std::size_t dl = static_cast<std::size_t>(d.lang_width);
  out.fusion.slices = {SliceRange{0, dv}, SliceRange{dv, da}, SliceRange{dv + da, dl}};
  out.fusion.node = mask_fusion(tape, ad::concat({v, e, l}), out.fusion.slices, opt.zero_modality);

  out.hidden = ad::tanh(ad::matmul(p["cell.W"], ad::concat({hidden, out.fusion.node})) + p["cell.b"]);
  out.logits = ad::matmul(p["out.W"], out.hidden) + p["out.b"];
  return out;
}

inline StepOutputs transformer_step(ad::Tape& tape, const BoundParams& p, const Observation& obs,
                                    const StepOptions& opt) {
  const PolicyDescriptor& d = p.desc();
  const auto ids = content_tokens(obs);
  if (ids.empty()) throw Error("policy_step: every language position is masked (PAD-only instruction)");
  if (ids.size() > static_cast<std::size_t>(d.max_tokens)) throw Error("policy_step: too many tokens");
  if (obs.prev_action < 0 || obs.prev_action >= kNumPrevActions) throw Error("policy_step: bad previous action");

  const std::size_t w = static_cast<std::size_t>(d.model_width());
  const std::size_t n_tokens = ids.size() + 2;
  StepOutputs out;
  out.visual = visual_leaf(tape, obs, opt);
  const ad::Var vis = ad::reshape(ad::tanh(ad::matmul(p["vis.W"], out.visual) + p["vis.b"]), {1, w});
  const ad::Var act = ad::embedding(p["act.E"], {static_cast<std::size_t>(obs.prev_action)});
  out.word_embeddings = ad::embedding(p["lang.E"], ids);
  std::vector<std::size_t> types = {0, 1};
  types.resize(n_tokens, 2);
  ad::Var x = ad::concat({vis, act, out.word_embeddings}) + ad::embedding(p["type.E"], types) +
              ad::slice(p["pos.E"], 0, n_tokens);

  const std::size_t head = w / static_cast<std::size_t>(d.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head));
  for (int b = 0; b < 2; ++b) {
    const std::string blk = "blk" + std::to_string(b) + ".";
    ad::Var attended;
    for (int h = 0; h < d.heads; ++h) {
      const std::string hd = blk + "h" + std::to_string(h) + ".";
      const ad::Var q = ad::matmul(x, ad::transpose(p[hd + "q.W"]));
      const ad::Var k = ad::matmul(x, ad::transpose(p[hd + "k.W"]));
      const ad::Var v = ad::matmul(x, ad::transpose(p[hd + "v.W"]));
      const ad::Var weights = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt));
      const ad::Var projected = ad::matmul(ad::matmul(weights, v), ad::transpose(p[hd + "o.W"]));
      attended = attended.valid() ? attended + projected : projected;
    }
    x = x + attended;
    const ad::Var hidden_ff = ad::tanh(ad::matmul(x, ad::transpose(p[blk + "ff1.W"])) + p[blk + "ff1.b"]);
    x = x + (ad::matmul(hidden_ff, ad::transpose(p[blk + "ff2.W"])) + p[blk + "ff2.b"]);
  }

  out.fusion.slices = {SliceRange{0, w}, SliceRange{w, w}, SliceRange{2 * w, ids.size() * w}};
  out.fusion.node = mask_fusion(tape, x, out.fusion.slices, opt.zero_modality);
  out.logits = ad::matmul(p["out.W"], ad::mean_rows(out.fusion.node)) + p["out.b"];
  return out;
}

}  // namespace detail

/// One policy step on an existing tape. `hidden` must be a node of the same
/// tape for the recurrent family and is ignored by the transformer.
inline StepOutputs forward_step(ad::Tape& tape, const BoundParams& params, const Observation& obs, ad::Var hidden,
                                const StepOptions& opt = {}) {
  if (params.desc().family == Family::Recurrent) return detail::recurrent_step(tape, params, obs, hidden, opt);
  return detail::transformer_step(tape, params, obs, opt);
}

/// A self-contained step: its own tape, parameters bound as leaves, and the
/// incoming hidden state as a constant leaf.
struct StepTrace {
  std::unique_ptr<ad::Tape> tape;
  std::unique_ptr<BoundParams> params;
  ad::Var hidden_in;
  StepOutputs out;

  Tensor logits() const { return out.logits.value(); }
  Tensor hidden() const { return out.hidden.valid() ? out.hidden.value() : Tensor(); }
};

inline StepTrace policy_step(const PolicyParameters& params, const Observation& obs, const Tensor& hidden,
                             const StepOptions& opt = {}) {
  StepTrace trace;
  trace.tape = std::make_unique<ad::Tape>();
  trace.params = std::make_unique<BoundParams>(*trace.tape, params);
  if (params.desc.family == Family::Recurrent) {
    trace.hidden_in = trace.tape->input(hidden.empty() ? initial_hidden(params.desc) : hidden);
  }
  trace.out = forward_step(*trace.tape, *trace.params, obs, trace.hidden_in, opt);
  return trace;
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Makes the head read only one modality: the recurrent cell's columns for the
/// previous hidden state and for the other slices are zeroed.
inline void restrict_head_to(PolicyParameters& params, Modality keep) {
  if (params.desc.family != Family::Recurrent) {
    throw Error("restrict_head_to: only the recurrent family has a separable head");
  }
  Tensor& w = params.at("cell.W");
  const std::size_t dh = static_cast<std::size_t>(params.desc.hidden);
  const std::array<std::size_t, 3> widths = {static_cast<std::size_t>(params.desc.vis_width),
                                             static_cast<std::size_t>(params.desc.act_width),
                                             static_cast<std::size_t>(params.desc.lang_width)};
  std::size_t begin = dh;
  std::array<std::pair<std::size_t, std::size_t>, 3> ranges{};
  for (std::size_t m = 0; m < 3; ++m) {
    ranges[m] = {begin, begin + widths[m]};
    begin += widths[m];
  }
  const auto kept = ranges[static_cast<std::size_t>(keep)];
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c)
      if (c < kept.first || c >= kept.second) w(r, c) = 0.0;
}

// ---------------------------------------------------------------------------
// Model files: "MAEA", u32 version, u32-length descriptor text, u32 tensor
// count, then per tensor: u32-length name, u32 rank, u32 dims, f32 values.
// All integers and floats little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool get_string(std::istream& in, std::string& s) {
  std::uint32_t n = 0;
  if (!get_u32(in, n) || n > (1u << 20)) return false;
  s.resize(n);
  return static_cast<bool>(in.read(s.data(), n));
}

}  // namespace detail

inline void write_policy(std::ostream& out, const PolicyParameters& params) {
  params.validate();
  out.write("MAEA", 4);
  detail::put_u32(out, kModelVersion);
  detail::put_string(out, params.desc.to_text());
  detail::put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    detail::put_string(out, name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

inline PolicyParameters read_policy(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "MAEA") throw Error("model file: bad magic");
  std::uint32_t version = 0;
  if (!detail::get_u32(in, version)) throw Error("model file: truncated header");
  if (version != kModelVersion) {
    throw Error("model file: unsupported version " + std::to_string(version) + " (supported versions: " +
                std::to_string(kModelVersion) + ")");
  }
  std::string desc_text;
  if (!detail::get_string(in, desc_text)) throw Error("model file: truncated descriptor");
  PolicyParameters params;
  params.desc = PolicyDescriptor::from_text(desc_text);
  const auto shapes = parameter_shapes(params.desc);
  std::uint32_t count = 0;
  if (!detail::get_u32(in, count)) throw Error("model file: truncated tensor count");
  if (count != shapes.size()) {
    throw Error("model file: expected " + std::to_string(shapes.size()) + " tensors, header says " +
                std::to_string(count));
  }
  for (const auto& [expected_name, dims] : shapes) {
    const std::string missing = "model file: truncated, missing tensor " + expected_name;
    std::string name;
    if (!detail::get_string(in, name)) throw Error(missing);
    if (name != expected_name) throw Error("model file: expected tensor " + expected_name + ", found " + name);
    std::uint32_t rank = 0;
    if (!detail::get_u32(in, rank)) throw Error(missing);
    if (rank != dims.size()) throw Error("model file: rank mismatch for " + name);
    for (std::size_t d : dims) {
      std::uint32_t got = 0;
      if (!detail::get_u32(in, got)) throw Error(missing);
      if (got != d) throw Error("model file: shape mismatch for " + name);
    }
    Tensor t(dims);
    for (double& v : t.data()) {
      std::uint32_t bits = 0;
      if (!detail::get_u32(in, bits)) throw Error(missing);
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (!t.all_finite()) throw Error("model file: non-finite values in " + name);
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

inline void save_policy(const PolicyParameters& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_policy(out, params);
  if (!out) throw Error("write failed: " + path);
}

inline PolicyParameters load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  return read_policy(in);
}

/// Rounds every parameter to 32-bit precision, as a save/load round trip would.
inline PolicyParameters quantize(PolicyParameters params) {
  for (auto& [_, t] : params.tensors)
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return params;
}

}  // namespace maea
