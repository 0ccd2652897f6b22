// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Every run resolves a RunConfig from defaults, an
// optional key=value config file and the command line (in increasing
// precedence), validates it, echoes it as key=value lines, then does the work.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
// single "error: <kind>: <message>" line on the error stream.
#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "maea/attribution.hpp"
#include "maea/error.hpp"
#include "maea/gridworld.hpp"
#include "maea/language.hpp"
#include "maea/policy.hpp"
#include "maea/reports.hpp"
#include "maea/trainer.hpp"
#include "maea/visual.hpp"

namespace maea::cli {

struct UsageError : Error {
  using Error::Error;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"gen-data", "train", "attribute", "report", "sweep-init", "selftest"};
  return c;
}

inline std::string command_help(const std::string& c) {
  static const std::map<std::string, std::string> h = {
      {"gen-data", "generate expert trajectories"},
      {"train", "behavior-clone a policy on a trajectory file"},
      {"attribute", "per-step modality attributions along expert trajectories"},
      {"report", "aggregate attributions into a report file"},
      {"sweep-init", "modality shares of randomly initialized policies"},
      {"selftest", "run the built-in invariant checks"}};
  return h.at(c);
}

inline const std::vector<std::string>& report_kinds() {
  static const std::vector<std::string> k = {"global", "episode", "interact", "language", "visual"};
  return k;
}

struct RunConfig {
  std::string command;
  /// Report kind; empty for every other command.
  std::string kind;
  std::uint64_t seed = 0;
  int episodes = 2000;
  int grid_size = 8;
  DatasetMode mode = DatasetMode::Standard;
  Family arch = Family::Recurrent;
  int epochs = 5;
  PoolNorm pool = PoolNorm::L2;
  TargetMode target = TargetMode::ArgmaxLogit;
  int bins = 10;
  int ig_steps = 128;
  bool dump_raw = false;
  std::string out;
  ReportFormat format = ReportFormat::Txt;
  std::string data;
  std::string model;
  std::string in;
  /// Number of random-init seeds.
  int seeds = 5;
  /// Reuse --seed for every sweep position instead of seed, seed+1, ...
  bool repeat_seed = false;
  /// Trajectories consumed from the data file (first ones, in file order).
  int trajectories = 100;
  SegmentMode segment = SegmentMode::Grid;
  int block = 1;
  /// Visual report: trajectory id and 1-based step.
  std::size_t trajectory = 0;
  std::size_t step = 1;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Config keys in echo order; each one is also the flag name without "--".
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> k = {
      "command", "kind",   "seed",  "episodes", "grid-size", "mode",  "arch",         "epochs",
      "pool",    "target", "bins",  "ig-steps", "dump-raw",  "out",   "format",       "data",
      "model",   "in",     "seeds", "repeat-seed", "trajectories", "segment", "block", "trajectory",
      "step"};
  return k;
}

inline bool is_switch(std::string_view key) { return key == "dump-raw" || key == "repeat-seed"; }

inline const char* segment_name(SegmentMode m) { return m == SegmentMode::Grid ? "grid" : "merge"; }

/// Defaults that depend on the command.
inline RunConfig defaults_for(const std::string& command) {
  RunConfig c;
  c.command = command;
  if (command == "gen-data") c.out = "data.txt";
  if (command == "train") c.out = "model.bin";
  if (command == "attribute") c.out = "attributions.jsonl";
  if (command == "report" || command == "sweep-init") c.out = ".";
  if (command == "sweep-init") c.trajectories = 10;
  return c;
}

using Pairs = std::map<std::string, std::string>;

inline Pairs to_pairs(const RunConfig& c) {
  auto num = [](auto v) { return std::to_string(v); };
  return {{"command", c.command},
          {"kind", c.kind},
          {"seed", num(c.seed)},
          {"episodes", num(c.episodes)},
          {"grid-size", num(c.grid_size)},
          {"mode", mode_name(c.mode)},
          {"arch", family_name(c.arch)},
          {"epochs", num(c.epochs)},
          {"pool", norm_name(c.pool)},
          {"target", target_mode_name(c.target)},
          {"bins", num(c.bins)},
          {"ig-steps", num(c.ig_steps)},
          {"dump-raw", c.dump_raw ? "true" : "false"},
          {"out", c.out},
          {"format", format_extension(c.format)},
          {"data", c.data},
          {"model", c.model},
          {"in", c.in},
          {"seeds", num(c.seeds)},
          {"repeat-seed", c.repeat_seed ? "true" : "false"},
          {"trajectories", num(c.trajectories)},
          {"segment", segment_name(c.segment)},
          {"block", num(c.block)},
          {"trajectory", num(c.trajectory)},
          {"step", num(c.step)}};
}

/// key=value lines in a fixed order; parses back through resolve_config.
inline std::string serialize(const RunConfig& c) {
  const Pairs p = to_pairs(c);
  std::string s;
  for (const auto& k : config_keys()) s += k + "=" + p.at(k) + "\n";
  return s;
}

namespace detail {

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw UsageError("invalid value for " + key + ": '" + v + "'");
  return out;
}

inline int parse_count(const std::string& key, const std::string& v, int lo) {
  const auto n = parse_unsigned<unsigned>(key, v);
  if (n < static_cast<unsigned>(lo) || n > 1'000'000'000u)
    throw UsageError(key + " must be at least " + std::to_string(lo) + ", got " + v);
  return static_cast<int>(n);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("invalid value for " + key + ": '" + v + "'");
}

template <typename F>
auto parse_enum(const std::string& key, const std::string& v, F&& parse) {
  try {
    return parse(v);
  } catch (const Error&) {
    throw UsageError("invalid value for " + key + ": '" + v + "'");
  }
}

}  // namespace detail

inline RunConfig from_pairs(const Pairs& p) {
  for (const auto& [k, _] : p)
    if (std::find(config_keys().begin(), config_keys().end(), k) == config_keys().end())
      throw UsageError("unknown config key: " + k);
  RunConfig c = defaults_for(p.count("command") ? p.at("command") : std::string());
  for (const auto& [k, v] : p) {
    using namespace detail;
    if (k == "command") c.command = v;
    else if (k == "kind") c.kind = v;
    else if (k == "seed") c.seed = parse_unsigned<std::uint64_t>(k, v);
    else if (k == "episodes") c.episodes = parse_count(k, v, 1);
    else if (k == "grid-size") c.grid_size = parse_count(k, v, 5);
    else if (k == "mode") c.mode = parse_enum(k, v, parse_mode);
    else if (k == "arch") c.arch = parse_enum(k, v, parse_family);
    else if (k == "epochs") c.epochs = parse_count(k, v, 1);
    else if (k == "pool") c.pool = parse_enum(k, v, parse_norm);
    else if (k == "target") c.target = parse_enum(k, v, parse_target_mode);
    else if (k == "bins") c.bins = parse_count(k, v, 1);
    else if (k == "ig-steps") c.ig_steps = parse_count(k, v, 1);
    else if (k == "dump-raw") c.dump_raw = parse_bool(k, v);
    else if (k == "out") c.out = v;
    else if (k == "format") c.format = parse_enum(k, v, parse_report_format);
    else if (k == "data") c.data = v;
    else if (k == "model") c.model = v;
    else if (k == "in") c.in = v;
    else if (k == "seeds") c.seeds = parse_count(k, v, 1);
    else if (k == "repeat-seed") c.repeat_seed = parse_bool(k, v);
    else if (k == "trajectories") c.trajectories = parse_count(k, v, 1);
    else if (k == "segment") c.segment = parse_enum(k, v, parse_segment_mode);
    else if (k == "block") c.block = parse_count(k, v, 1);
    else if (k == "trajectory") c.trajectory = parse_unsigned<std::size_t>(k, v);
    else if (k == "step") c.step = static_cast<std::size_t>(parse_count(k, v, 1));
  }
  return c;
}

/// Parses key=value lines; blank lines and lines starting with '#' are
/// skipped. A key given twice with different values is rejected.
inline Pairs parse_config_text(std::istream& in, const std::string& origin = "config") {
  Pairs p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto [it, inserted] = p.emplace(key, value);
    if (!inserted && it->second != value)
      throw UsageError(origin + ":" + std::to_string(lineno) + ": conflicting values for " + key);
  }
  return p;
}

inline Pairs load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file: " + path);
  return parse_config_text(in, path);
}

/// Semantic checks that need the whole config.
inline void validate(const RunConfig& c) {
  const auto& cmds = commands();
  if (std::find(cmds.begin(), cmds.end(), c.command) == cmds.end())
    throw UsageError("unknown command: '" + c.command + "'");
  if (c.command == "report") {
    const auto& kinds = report_kinds();
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
      throw UsageError("report needs a kind: global, episode, interact, language or visual");
  } else if (!c.kind.empty()) {
    throw UsageError("kind applies only to report");
  }
  auto need_file = [](const std::string& what, const std::string& path) {
    if (path.empty()) throw UsageError("--" + what + " is required");
    if (!std::filesystem::is_regular_file(path)) throw UsageError("no such file: " + path);
  };
  if (c.command == "train") need_file("data", c.data);
  if (c.command == "attribute") {
    need_file("data", c.data);
    need_file("model", c.model);
  }
  if (c.command == "sweep-init") need_file("data", c.data);
  if (c.command == "report") {
    if (c.kind == "language" || c.kind == "visual") {
      need_file("data", c.data);
      need_file("model", c.model);
    } else {
      need_file("in", c.in);
    }
    if (c.kind == "visual" && c.block > kView) throw UsageError("--block must lie within 1..7");
  }
  if (c.command != "selftest" && c.out.empty()) throw UsageError("--out is required");
}

/// Defaults, then the file (if any), then the command line.
inline RunConfig resolve_config(const std::string& command, const std::string& kind, const Pairs& cli,
                                const std::string& config_file = {}) {
  Pairs p = to_pairs(defaults_for(command));
  if (!config_file.empty())
    for (const auto& [k, v] : load_config_file(config_file)) p[k] = v;
  for (const auto& [k, v] : cli) p[k] = v;
  p["command"] = command;
  p["kind"] = kind;
  RunConfig c = from_pairs(p);
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace detail {

inline Dataset first_trajectories(Dataset data, int n) {
  if (data.empty()) throw Error("data file holds no trajectories");
  if (data.size() > static_cast<std::size_t>(n)) data.resize(static_cast<std::size_t>(n));
  return data;
}

inline PolicyDescriptor descriptor_for(const RunConfig& c, const Dataset& data) {
  PolicyDescriptor d;
  d.family = c.arch;
  d.max_tokens = static_cast<int>(data.front().steps.front().obs.tokens.size());
  return d;
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void report_recs(std::ostream& out, const std::vector<AttributionRecord>& recs) {
  std::size_t degenerate = 0;
  for (const auto& r : recs) degenerate += r.degenerate() ? 1 : 0;
  out << "records " << recs.size() << "\ndegenerate " << degenerate << "\n";
}

/// Shares under `norm`, recomputed from the stored pooled values.
inline void reselect_norm(std::vector<AttributionRecord>& recs, PoolNorm norm) {
  for (auto& r : recs) {
    try {
      r.shares = modality_shares(r.pooled_by(norm));
    } catch (const DegenerateError&) {
      r.shares.reset();
    }
  }
}

inline std::vector<std::uint64_t> sweep_seeds(const RunConfig& c) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < c.seeds; ++i) s.push_back(c.repeat_seed ? c.seed : c.seed + static_cast<std::uint64_t>(i));
  return s;
}

}  // namespace detail

inline void cmd_gen_data(const RunConfig& c, std::ostream& out) {
  EnvConfig env;
  env.grid_size = c.grid_size;
  env.mode = c.mode;
  env.validate();
  const Dataset data = generate_dataset(c.seed, static_cast<std::size_t>(c.episodes), env);
  save_trajectories(c.out, data);
  std::size_t steps = 0;
  for (const auto& t : data) steps += t.steps.size();
  out << "episodes " << data.size() << "\nsteps " << steps << "\nwrote " << c.out << "\n";
}

inline void cmd_train(const RunConfig& c, std::ostream& out) {
  const Dataset data = load_trajectories(c.data);
  if (data.empty()) throw Error("data file holds no trajectories");
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.seed = c.seed;
  out << "epoch,loss,heldout_accuracy\n";
  const TrainResult r = train(data, detail::descriptor_for(c, data), tc, [&](const EpochLog& e) {
    out << e.epoch << ',' << fmt6(e.loss) << ',' << fmt6(e.accuracy) << '\n' << std::flush;
  });
  save_policy(r.params, c.out);
  out << "wrote " << c.out << "\n";
}

inline void cmd_attribute(const RunConfig& c, std::ostream& out) {
  const PolicyParameters params = load_policy(c.model);
  const Dataset data = detail::first_trajectories(load_trajectories(c.data), c.trajectories);
  AttributionOptions opt;
  opt.mode = c.target;
  opt.norm = c.pool;
  opt.dump_raw = c.dump_raw;
  opt.seed = c.seed;
  AttributionFile file;
  file.meta.condition = "trained";
  file.meta.mode = c.target;
  file.meta.norm = c.pool;
  file.meta.seeds = {c.seed};
  file.records = attribute_dataset(params, data, opt);
  save_attributions(c.out, file);
  out << "trajectories " << data.size() << "\n";
  detail::report_recs(out, file.records);
  out << "wrote " << c.out << "\n";
}

inline std::string cmd_report(const RunConfig& c, std::ostream& out) {
  std::filesystem::create_directories(c.out);
  std::string condition = "trained";
  std::function<void(std::ostream&)> render;
  if (c.kind == "global" || c.kind == "episode" || c.kind == "interact") {
    AttributionFile file = load_attributions(c.in);
    condition = file.meta.condition;
    detail::report_recs(out, file.records);
    if (c.kind == "global") {
      if (c.pool != file.meta.norm) detail::reselect_norm(file.records, c.pool);
      AttributionMeta meta = file.meta;
      meta.norm = c.pool;
      const GlobalShareReport g = global_shares(file.records, meta);
      render = [g, &c](std::ostream& o) { write_global_report(o, g, c.format); };
    } else if (c.kind == "episode") {
      const BinnedCurve curve = episode_completion_bins(file.records, c.pool, static_cast<std::size_t>(c.bins));
      render = [curve, &c](std::ostream& o) { write_episode_report(o, curve, c.format); };
    } else {
      const InteractSplit s = interact_split_stats(file.records, c.pool);
      render = [s, &c](std::ostream& o) { write_interact_report(o, s, c.format); };
    }
  } else if (c.kind == "language") {
    const PolicyParameters params = load_policy(c.model);
    const Dataset data = detail::first_trajectories(load_trajectories(c.data), c.trajectories);
    std::vector<TokenAttribution> words;
    for (const auto& traj : data) {
      auto w = attribute_words(params, traj, c.target);
      words.insert(words.end(), w.begin(), w.end());
    }
    const FocusCurve curve = focus_curve(words, static_cast<std::size_t>(c.bins));
    out << "points " << curve.points.size() << "\ndegenerate " << curve.skipped << "\n";
    render = [curve, &c](std::ostream& o) { write_language_report(o, curve, c.format); };
  } else {
    const PolicyParameters params = load_policy(c.model);
    const Dataset data = load_trajectories(c.data);
    const auto it = std::find_if(data.begin(), data.end(), [&](const Trajectory& t) { return t.id == c.trajectory; });
    if (it == data.end()) throw Error("no trajectory with id " + std::to_string(c.trajectory));
    if (c.step > it->steps.size())
      throw Error("trajectory " + std::to_string(c.trajectory) + " has only " + std::to_string(it->steps.size()) +
                  " steps");
    Tensor hidden = initial_hidden(params.desc);
    for (std::size_t t = 0; t + 1 < c.step; ++t) hidden = policy_step(params, it->steps[t].obs, hidden).hidden();
    const auto& st = it->steps[c.step - 1];
    const IntegratedGradients ig =
        integrated_gradients(params, st.obs, hidden, c.ig_steps, c.target, static_cast<int>(st.expert));
    const RegionAttribution ra = rank_regions(cell_map(ig.channels), segment(st.obs, c.segment, c.block));
    out << "action " << action_name(static_cast<int>(ig.action)) << "\nig_total " << fmt6(ig.total())
        << "\ncompleteness_error " << fmt6(ig.completeness_error()) << "\nregions " << ra.regions.size() << "\n";
    render = [ra, &c](std::ostream& o) {
      switch (c.format) {
        case ReportFormat::Csv: write_region_csv(o, ra); break;
        case ReportFormat::Svg: write_heatmap(o, density_map(ra), ImageFormat::Svg); break;
        case ReportFormat::Txt: {
          o << "regions ranked by attribution density\n\n";
          char buf[96];
          std::snprintf(buf, sizeof buf, "%4s %5s %12s %12s\n", "rank", "area", "total", "density");
          o << buf;
          for (const auto& r : ra.regions) {
            std::snprintf(buf, sizeof buf, "%4zu %5zu %12.6g %12.6g\n", r.rank, r.area, r.total, r.density);
            o << buf;
          }
          break;
        }
      }
    };
  }
  const std::string path = detail::join(c.out, report_filename(c.kind, condition, c.format));
  write_file(path, render);
  out << "wrote " << path << "\n";
  return path;
}

inline void cmd_sweep_init(const RunConfig& c, std::ostream& out) {
  std::filesystem::create_directories(c.out);
  const Dataset data = detail::first_trajectories(load_trajectories(c.data), c.trajectories);
  const SweepResult r = random_init_sweep(detail::descriptor_for(c, data), detail::sweep_seeds(c), data, c.target, c.pool);
  AttributionFile file;
  file.meta.condition = r.report.condition;
  file.meta.mode = c.target;
  file.meta.norm = c.pool;
  file.meta.seeds = r.report.seeds;
  file.records = r.records;
  const std::string recs = detail::join(c.out, "attributions." + r.report.condition + ".jsonl");
  save_attributions(recs, file);
  const std::string path = detail::join(c.out, report_filename("global", r.report.condition, c.format));
  write_file(path, [&](std::ostream& o) { write_global_report(o, r.report, c.format); });
  detail::report_recs(out, r.records);
  for (Modality m : kModalities) {
    const auto i = static_cast<std::size_t>(m);
    out << modality_name(m) << ' ' << fmt6(r.report.mean[i]) << " +- " << fmt6(r.report.std[i]) << '\n';
  }
  out << "wrote " << recs << "\nwrote " << path << "\n";
}

// ---------------------------------------------------------------------------
// Self-test: fast invariant checks over the library.
// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::vector<Check> run_selftest() {
  std::vector<Check> checks;
  auto add = [&](std::string name, bool pass, std::string detail = {}) {
    checks.push_back({std::move(name), pass, std::move(detail)});
  };

  {
    const std::vector<double> a = {-3, 2, 1}, b = {1, -2, 3}, c = {3, 4};
    const bool ok = pool(a, PoolNorm::Linf) == 3 && pool(b, PoolNorm::L1) == 6 && pool(b, PoolNorm::L1d) == 2 &&
                    pool(c, PoolNorm::L2) == 5 && pool(c, PoolNorm::L2d) == 2.5;
    add("pooling-identities", ok);
  }
  {
    Rng rng(17);
    bool ok = true;
    for (int k = 0; k < 1000; ++k) {
      std::vector<double> v(1 + rng.below(20));
      for (double& x : v) x = rng.uniform(-5, 5);
      const double inf = pool(v, PoolNorm::Linf), l2 = pool(v, PoolNorm::L2), l1 = pool(v, PoolNorm::L1);
      ok = ok && inf <= l2 * (1 + 1e-12) && l2 <= l1 * (1 + 1e-12);
    }
    add("pooling-order", ok);
  }

  EnvConfig env;
  const Dataset data = generate_dataset(5, 4, env);
  for (Family f : {Family::Recurrent, Family::Transformer}) {
    PolicyDescriptor desc;
    desc.family = f;
    const PolicyParameters p = init_policy(desc, 3);
    const auto recs = attribute_dataset(p, data);
    double worst = 0.0;
    for (const auto& r : recs)
      if (r.shares) worst = std::max(worst, std::abs((*r.shares)[0] + (*r.shares)[1] + (*r.shares)[2] - 100.0));
    add(std::string("share-sum-") + family_name(f), worst <= 1e-6, "max deviation " + fmt6(worst));

    const Observation& obs = data.front().steps.front().obs;
    const Tensor h = initial_hidden(p.desc);
    const StepTrace trace = policy_step(p, obs, h);
    const std::size_t k = argmax(trace.logits().data());
    const Tensor g = trace.tape->backward(ad::pick(trace.out.logits, k))[trace.out.visual];
    const Tensor x0 = trace.out.visual.value();
    double err = 0.0;
    for (std::size_t i = 0; i < x0.size(); i += 37) {
      StepOptions up, down;
      up.visual = down.visual = x0;
      (*up.visual)[i] += 1e-6;
      (*down.visual)[i] -= 1e-6;
      const double fd = (policy_step(p, obs, h, up).logits()[k] - policy_step(p, obs, h, down).logits()[k]) / 2e-6;
      err = std::max(err, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
    }
    add(std::string("input-gradient-") + family_name(f), err <= 1e-4, "max relative error " + fmt6(err));
  }

  for (Modality m : kModalities) {
    PolicyParameters p = init_policy(PolicyDescriptor{}, 9);
    restrict_head_to(p, m);
    const auto recs = attribute_dataset(p, data);
    double worst = 0.0;
    for (const auto& r : recs)
      if (r.shares) worst = std::max(worst, std::abs((*r.shares)[static_cast<std::size_t>(m)] - 100.0));
    add(std::string("dominance-") + modality_name(m), worst <= 1e-9, "max deviation " + fmt6(worst));
  }

  {
    bool ok = true;
    for (std::size_t n = 1; n <= 8; ++n) {
      const double c = focus_center(std::vector<double>(n, 1.0));
      ok = ok && std::abs(c - static_cast<double>(n + 1) / (2.0 * static_cast<double>(n))) <= 1e-12;
    }
    add("focus-uniform", ok);
  }
  {
    // A linear function has a constant gradient, so one midpoint step is exact.
    const Tensor w = Tensor({4}, std::vector<double>{1.5, -2, 0.25, 3});
    const Tensor x = Tensor({4}, std::vector<double>{1, 2, 3, 4});
    const Tensor a = integrate_path(x, Tensor({4}), 1, [&](const Tensor&) { return w; });
    double total = 0.0, delta = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      total += a[i];
      delta += w[i] * x[i];
    }
    add("ig-linear", total == delta);
  }
  {
    Rng rng(4);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      CellMap m;
      double sum = 0.0;
      for (double& v : m) sum += (v = rng.uniform(-1, 1));
      for (int block : {1, 2, 3, 7}) {
        const RegionAttribution ra = rank_regions(m, segment_grid(block));
        double t = 0.0;
        for (const auto& r : ra.regions) t += r.total;
        worst = std::max(worst, std::abs(t - sum));
      }
    }
    add("region-conservation", worst <= 1e-10, "max deviation " + fmt6(worst));
  }
  return checks;
}

inline int cmd_selftest(std::ostream& out) {
  int failed = 0;
  for (const Check& c : run_selftest()) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << '\n';
    failed += c.pass ? 0 : 1;
  }
  out << (failed ? "selftest failed\n" : "selftest passed\n");
  return failed ? 1 : 0;
}

inline int execute(const RunConfig& c, std::ostream& out) {
  if (c.command == "gen-data") cmd_gen_data(c, out);
  else if (c.command == "train") cmd_train(c, out);
  else if (c.command == "attribute") cmd_attribute(c, out);
  else if (c.command == "report") cmd_report(c, out);
  else if (c.command == "sweep-init") cmd_sweep_init(c, out);
  else return cmd_selftest(out);
  return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

struct Flag {
  std::string key;
  std::string help;
};

inline const std::vector<Flag>& flags() {
  static const std::vector<Flag> f = {
      {"seed", "base seed (u64)"},
      {"episodes", "episodes to generate"},
      {"grid-size", "grid side length"},
      {"mode", "dataset mode: standard, lang-only, vision-only, two-clause"},
      {"arch", "policy family: recurrent, transformer"},
      {"epochs", "training epochs"},
      {"pool", "pooling norm: linf, l1, l1d, l2, l2d"},
      {"target", "attribution target: argmax-logit, argmax-prob, expert-action, loss"},
      {"bins", "episode-completion bins"},
      {"ig-steps", "integrated-gradient steps"},
      {"dump-raw", "keep raw per-modality attribution vectors"},
      {"out", "output file, or directory for reports"},
      {"format", "report format: txt, csv, svg"},
      {"data", "trajectory file"},
      {"model", "policy file"},
      {"in", "attribution file"},
      {"seeds", "random-init seed count"},
      {"repeat-seed", "reuse --seed for every sweep position"},
      {"trajectories", "trajectories to use from the data file"},
      {"segment", "visual partition: grid, merge"},
      {"block", "grid partition block size"},
      {"trajectory", "visual report trajectory id"},
      {"step", "visual report step (1-based)"},
  };
  return f;
}

/// Parses, resolves, echoes and runs. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Modality attribution for instruction-following policies", "maea"};
  app.require_subcommand(0, 1);
  app.set_help_all_flag("--help-all", "show help for every command");

  struct Bound {
    std::map<std::string, std::vector<std::string>> values;
    std::map<std::string, std::int64_t> switches;
    std::vector<std::string> config;
    std::string kind;
  };
  std::map<std::string, Bound> bound;
  for (const auto& name : commands()) {
    CLI::App* sub = app.add_subcommand(name, command_help(name));
    Bound& b = bound[name];
    if (name == "report") sub->add_option("kind", b.kind, "global, episode, interact, language or visual")->required();
    sub->add_option("--config", b.config, "key=value config file")->expected(1)->multi_option_policy(
        CLI::MultiOptionPolicy::TakeAll);
    for (const Flag& f : flags()) {
      if (is_switch(f.key)) {
        sub->add_flag("--" + f.key, b.switches[f.key], f.help);
      } else {
        sub->add_option("--" + f.key, b.values[f.key], f.help)
            ->expected(1)
            ->allow_extra_args(false)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
      }
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  std::string command;
  for (const auto& name : commands())
    if (app.got_subcommand(name)) command = name;
  if (command.empty()) {
    err << app.help();
    err << "error: usage: a command is required\n";
    return 2;
  }

  RunConfig cfg;
  try {
    const Bound& b = bound.at(command);
    Pairs cli;
    for (const auto& [key, vals] : b.values) {
      if (vals.empty()) continue;
      for (const auto& v : vals)
        if (v != vals.front()) throw UsageError("conflicting values for --" + key);
      cli[key] = vals.front();
    }
    for (const auto& [key, count] : b.switches)
      if (count > 0) cli[key] = "true";
    std::string config_file;
    for (const auto& v : b.config) {
      if (!config_file.empty() && v != config_file) throw UsageError("conflicting values for --config");
      config_file = v;
    }
    cfg = resolve_config(command, b.kind, cli, config_file);
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  out << serialize(cfg) << std::flush;
  try {
    return execute(cfg, out);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: runtime: " << msg << "\n";
    return 1;
  }
}

}  // namespace maea::cli
