// SPDX-License-Identifier: Apache-2.0
//
// Deterministic instruction-following gridworld with a shortest-path expert.
// All world logic is integer-only; the only randomness is the seeded Rng.
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "maea/error.hpp"
#include "maea/rng.hpp"
#include "maea/tensor.hpp"

namespace maea {

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class Action : int { MoveAhead = 0, RotateLeft = 1, RotateRight = 2, Pickup = 3, Stop = 4 };

inline constexpr int kNumActions = 5;
/// Previous-action id used at t = 1; only the embedding table knows about it.
inline constexpr int kStartAction = 5;
inline constexpr int kNumPrevActions = 6;

inline bool is_interact(Action a) { return a == Action::Pickup || a == Action::Stop; }

inline const char* action_name(int id) {
  static constexpr std::array<const char*, 6> names = {"MoveAhead", "RotateLeft", "RotateRight",
                                                       "Pickup",    "Stop",       "START"};
  if (id < 0 || id >= static_cast<int>(names.size())) throw Error("action id out of range: " + std::to_string(id));
  return names[static_cast<std::size_t>(id)];
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;

/// Fixed published vocabulary; the id of a word is its index here.
inline const std::vector<std::string_view>& vocabulary() {
  static const std::vector<std::string_view> words = {
      "<pad>", "<unk>", "go",   "to",    "the",   "pick",  "up",   "then",
      "red",   "green", "blue", "yellow", "ball", "key",   "box",  "spin",
      "left",  "right", "one",  "two",   "three", "times", "find", "it"};
  return words;
}

inline int vocab_size() { return static_cast<int>(vocabulary().size()); }

/// Whitespace split, lowercase, vocabulary lookup (UNK for unknown words),
/// PAD to `max_tokens`. Instructions longer than `max_tokens` are rejected.
inline std::vector<int> tokenize(std::string_view instruction, std::size_t max_tokens = 8) {
  std::vector<int> ids;
  std::istringstream in{std::string(instruction)};
  std::string word;
  const auto& vocab = vocabulary();
  while (in >> word) {
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    const auto it = std::find(vocab.begin() + 2, vocab.end(), word);
    ids.push_back(it == vocab.end() ? kUnk : static_cast<int>(it - vocab.begin()));
  }
  if (ids.size() > max_tokens) {
    throw Error("tokenize: instruction has " + std::to_string(ids.size()) + " words, limit " +
                std::to_string(max_tokens));
  }
  ids.resize(max_tokens, kPad);
  return ids;
}

inline std::string detokenize(const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (id == kPad) continue;
    if (id < 0 || id >= vocab_size()) throw Error("detokenize: id out of range: " + std::to_string(id));
    if (!out.empty()) out += ' ';
    out += vocabulary()[static_cast<std::size_t>(id)];
  }
  return out;
}

/// Number of non-PAD tokens.
inline std::size_t instruction_length(const std::vector<int>& ids) {
  return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [](int id) { return id != kPad; }));
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

enum class ObjectType : int { Ball = 0, Key = 1, Box = 2 };
enum class Color : int { Red = 0, Green = 1, Blue = 2, Yellow = 3 };
enum class Dir : int { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<std::string_view, 3> kTypeNames = {"ball", "key", "box"};
inline constexpr std::array<std::string_view, 4> kColorNames = {"red", "green", "blue", "yellow"};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline Cell forward_vector(Dir d) {
  switch (d) {
    case Dir::North: return {0, -1};
    case Dir::East: return {1, 0};
    case Dir::South: return {0, 1};
    case Dir::West: return {-1, 0};
  }
  return {0, 0};
}

inline Cell right_vector(Dir d) { return forward_vector(static_cast<Dir>((static_cast<int>(d) + 1) % 4)); }

struct WorldObject {
  ObjectType type = ObjectType::Ball;
  Color color = Color::Red;
  Cell cell;
  bool picked = false;
  friend bool operator==(const WorldObject&, const WorldObject&) = default;
};

enum class TaskKind : int { GoTo = 0, Pickup = 1, Sequence = 2, Spin = 3, Find = 4 };

struct Goal {
  TaskKind kind = TaskKind::GoTo;
  std::vector<std::size_t> targets;  // object indices; Sequence visits them in order
  std::size_t stage = 0;             // Sequence: current target; Spin: rotations done
  int spin_count = 0;
  Action spin_action = Action::RotateLeft;
  friend bool operator==(const Goal&, const Goal&) = default;
};

struct WorldState {
  int width = 8;
  int height = 8;
  Cell agent;
  Dir dir = Dir::North;
  std::vector<WorldObject> objects;
  Goal goal;
  bool holding = false;
  bool done = false;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }

  const WorldObject* object_at(Cell c) const {
    for (const auto& o : objects)
      if (!o.picked && o.cell == c) return &o;
    return nullptr;
  }

  Cell front() const {
    const Cell f = forward_vector(dir);
    return {agent.x + f.x, agent.y + f.y};
  }

  const WorldObject& target() const {
    const std::size_t idx = goal.kind == TaskKind::Sequence ? goal.targets.at(goal.stage) : goal.targets.at(0);
    return objects.at(idx);
  }

  bool facing_target() const { return !goal.targets.empty() && front() == target().cell; }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

/// Throws unless the state satisfies the world invariants.
inline void validate(const WorldState& s) {
  if (!s.in_bounds(s.agent)) throw Error("world: agent out of bounds");
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    if (o.picked) continue;
    if (!s.in_bounds(o.cell)) throw Error("world: object out of bounds");
    if (o.cell == s.agent) throw Error("world: object on agent cell");
    for (std::size_t j = i + 1; j < s.objects.size(); ++j)
      if (!s.objects[j].picked && s.objects[j].cell == o.cell) throw Error("world: two objects share a cell");
  }
  for (std::size_t t : s.goal.targets)
    if (t >= s.objects.size()) throw Error("world: goal references a missing object");
}

/// Sequence goals advance as soon as the agent faces the current target.
inline void advance_goal(WorldState& s) {
  if (s.goal.kind == TaskKind::Sequence) {
    while (s.goal.stage + 1 < s.goal.targets.size() && s.facing_target()) ++s.goal.stage;
  }
}

/// Applies one action. Moves into walls or objects leave the agent in place.
inline WorldState step(WorldState s, Action a) {
  switch (a) {
    case Action::MoveAhead: {
      const Cell f = s.front();
      if (s.in_bounds(f) && s.object_at(f) == nullptr) s.agent = f;
      break;
    }
    case Action::RotateLeft: s.dir = static_cast<Dir>((static_cast<int>(s.dir) + 3) % 4); break;
    case Action::RotateRight: s.dir = static_cast<Dir>((static_cast<int>(s.dir) + 1) % 4); break;
    case Action::Pickup: {
      const Cell f = s.front();
      for (auto& o : s.objects) {
        if (!o.picked && o.cell == f) {
          o.picked = true;
          s.holding = true;
          break;
        }
      }
      break;
    }
    case Action::Stop: s.done = true; break;
  }
  if (s.goal.kind == TaskKind::Spin && (a == Action::RotateLeft || a == Action::RotateRight)) ++s.goal.stage;
  advance_goal(s);
  return s;
}

namespace detail {

inline int pose_index(const WorldState& s, Cell c, Dir d) {
  return (c.y * s.width + c.x) * 4 + static_cast<int>(d);
}

}  // namespace detail

/// Minimal number of navigation actions (MoveAhead/RotateLeft/RotateRight)
/// until the agent faces its current target; nullopt if unreachable.
inline std::optional<int> navigation_distance(const WorldState& start) {
  if (start.goal.targets.empty()) throw Error("navigation_distance: goal has no target");
  const Cell target = start.target().cell;
  std::vector<int> dist(static_cast<std::size_t>(start.width * start.height * 4), -1);
  std::deque<std::pair<Cell, Dir>> queue;
  dist[static_cast<std::size_t>(detail::pose_index(start, start.agent, start.dir))] = 0;
  queue.emplace_back(start.agent, start.dir);
  WorldState probe = start;
  while (!queue.empty()) {
    auto [cell, dir] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(detail::pose_index(start, cell, dir))];
    probe.agent = cell;
    probe.dir = dir;
    if (probe.front() == target) return d;
    for (Action a : {Action::MoveAhead, Action::RotateLeft, Action::RotateRight}) {
      WorldState next = probe;
      next.goal = Goal{};  // navigation only; keep step() from touching stages
      next = step(next, a);
      auto& nd = dist[static_cast<std::size_t>(detail::pose_index(start, next.agent, next.dir))];
      if (nd < 0) {
        nd = d + 1;
        queue.emplace_back(next.agent, next.dir);
      }
    }
  }
  return std::nullopt;
}

/// Expert action on a minimal-cost path. Navigation ties are broken by action
/// id order (MoveAhead < RotateLeft < RotateRight).
inline Action plan_expert_action(const WorldState& s) {
  switch (s.goal.kind) {
    case TaskKind::Spin:
      return static_cast<int>(s.goal.stage) < s.goal.spin_count ? s.goal.spin_action : Action::Stop;
    case TaskKind::Pickup:
      if (s.holding) return Action::Stop;
      if (s.facing_target()) return Action::Pickup;
      break;
    case TaskKind::GoTo:
    case TaskKind::Find:
    case TaskKind::Sequence:
      if (s.facing_target()) return Action::Stop;
      break;
  }
  const auto here = navigation_distance(s);
  if (!here) throw Error("plan_expert_action: goal unreachable");
  // Successors are evaluated against the current target only.
  WorldState nav = s;
  nav.goal = Goal{};
  nav.goal.targets = {s.goal.kind == TaskKind::Sequence ? s.goal.targets.at(s.goal.stage) : s.goal.targets.at(0)};
  for (Action a : {Action::MoveAhead, Action::RotateLeft, Action::RotateRight}) {
    const WorldState next = step(nav, a);
    if (next.agent == s.agent && next.dir == s.dir) continue;
    const auto there = navigation_distance(next);
    if (there && *there == *here - 1) return a;
  }
  throw Error("plan_expert_action: no action decreases the distance");
}

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

inline constexpr int kChannels = 8;
inline constexpr int kView = 7;
inline constexpr int kVisualSize = kChannels * kView * kView;
inline constexpr int kWallChannel = 7;
inline constexpr int kColorChannelBase = 3;

inline constexpr std::size_t visual_index(int channel, int row, int col) {
  return static_cast<std::size_t>((channel * kView + row) * kView + col);
}

struct Observation {
  std::array<std::uint8_t, kVisualSize> visual{};
  int prev_action = kStartAction;
  std::vector<int> tokens;

  /// The visual input as an 8×7×7 tensor of 0/1 values.
  Tensor visual_tensor() const {
    std::vector<double> v(visual.begin(), visual.end());
    return Tensor({kChannels, kView, kView}, std::move(v));
  }

  std::size_t length() const { return instruction_length(tokens); }

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// World cell seen at window position (row, col). The agent sits at row 6,
/// col 3, facing up.
inline Cell window_cell(const WorldState& s, int row, int col) {
  const int ahead = kView - 1 - row;
  const int lateral = col - kView / 2;
  const Cell f = forward_vector(s.dir);
  const Cell r = right_vector(s.dir);
  return {s.agent.x + ahead * f.x + lateral * r.x, s.agent.y + ahead * f.y + lateral * r.y};
}

inline Observation render_observation(const WorldState& s, int previous, std::vector<int> tokens) {
  Observation obs;
  obs.prev_action = previous;
  obs.tokens = std::move(tokens);
  for (int row = 0; row < kView; ++row) {
    for (int col = 0; col < kView; ++col) {
      const Cell c = window_cell(s, row, col);
      if (!s.in_bounds(c)) {
        obs.visual[visual_index(kWallChannel, row, col)] = 1;
      } else if (const WorldObject* o = s.object_at(c)) {
        obs.visual[visual_index(static_cast<int>(o->type), row, col)] = 1;
        obs.visual[visual_index(kColorChannelBase + static_cast<int>(o->color), row, col)] = 1;
      }
    }
  }
  return obs;
}

/// Replaces the visual input with independent fair coin flips.
inline void fill_noise(Observation& obs, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : obs.visual) v = rng.coin() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Episodes and datasets
// ---------------------------------------------------------------------------

enum class DatasetMode { Standard, LangOnly, VisionOnly, TwoClause };

inline const char* mode_name(DatasetMode m) {
  switch (m) {
    case DatasetMode::Standard: return "standard";
    case DatasetMode::LangOnly: return "lang-only";
    case DatasetMode::VisionOnly: return "vision-only";
    case DatasetMode::TwoClause: return "two-clause";
  }
  return "?";
}

inline DatasetMode parse_mode(std::string_view s) {
  for (DatasetMode m : {DatasetMode::Standard, DatasetMode::LangOnly, DatasetMode::VisionOnly, DatasetMode::TwoClause})
    if (s == mode_name(m)) return m;
  throw Error("unknown dataset mode: " + std::string(s));
}

struct EnvConfig {
  int grid_size = 8;
  int min_objects = 1;
  int max_objects = 4;
  DatasetMode mode = DatasetMode::Standard;
  int max_steps = 64;
  int max_retries = 100;

  /// Token buffer length; two-clause instructions need eleven words.
  std::size_t max_tokens() const { return mode == DatasetMode::TwoClause ? 11 : 8; }

  void validate() const {
    if (grid_size < 5) throw Error("env config: grid size must be at least 5");
    if (min_objects < 1 || max_objects > 4 || min_objects > max_objects) {
      throw Error("env config: object count range must lie within 1..4");
    }
    if (mode == DatasetMode::TwoClause && max_objects < 2) throw Error("env config: two-clause needs 2 objects");
  }
};

struct TrajectoryStep {
  Observation obs;
  Action expert = Action::Stop;
  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
  std::size_t id = 0;
  std::string instruction;
  std::vector<TrajectoryStep> steps;
  /// Generator-side only; not serialized.
  std::optional<WorldState> initial;
  std::uint64_t noise_seed = 0;

  std::size_t length() const { return steps.size(); }
};

using Dataset = std::vector<Trajectory>;

namespace detail {

inline std::string describe(const WorldObject& o) {
  return std::string(kColorNames[static_cast<std::size_t>(o.color)]) + " " +
         std::string(kTypeNames[static_cast<std::size_t>(o.type)]);
}

/// An object whose (type, color) differs from every existing object; the
/// caller places it.
inline WorldObject random_object(Rng& rng, const WorldState& s) {
  for (;;) {
    WorldObject o;
    o.type = static_cast<ObjectType>(rng.below(3));
    o.color = static_cast<Color>(rng.below(4));
    const bool clash = std::any_of(s.objects.begin(), s.objects.end(), [&](const WorldObject& other) {
      return other.type == o.type && other.color == o.color;
    });
    if (!clash) return o;
  }
}

/// An object sharing neither type nor color with any existing object.
inline WorldObject distinct_object(Rng& rng, const WorldState& s) {
  if (s.objects.size() >= 3) throw Error("distinct_object: only three types exist");
  for (;;) {
    WorldObject o;
    o.type = static_cast<ObjectType>(rng.below(3));
    o.color = static_cast<Color>(rng.below(4));
    const bool clash = std::any_of(s.objects.begin(), s.objects.end(), [&](const WorldObject& other) {
      return other.type == o.type || other.color == o.color;
    });
    if (!clash) return o;
  }
}

inline bool occupied(const WorldState& s, Cell c) {
  return c == s.agent ||
         std::any_of(s.objects.begin(), s.objects.end(), [&](const WorldObject& o) { return o.cell == c; });
}

inline Cell random_free_cell(Rng& rng, const WorldState& s) {
  for (;;) {
    const Cell c{static_cast<int>(rng.below(static_cast<std::uint64_t>(s.width))),
                 static_cast<int>(rng.below(static_cast<std::uint64_t>(s.height)))};
    if (!occupied(s, c)) return c;
  }
}

/// In-bounds cells of the agent's current view, other than its own cell.
inline std::vector<Cell> visible_cells(const WorldState& s) {
  std::vector<Cell> cells;
  for (int row = 0; row < kView; ++row)
    for (int col = 0; col < kView; ++col) {
      const Cell c = window_cell(s, row, col);
      if (s.in_bounds(c) && c != s.agent) cells.push_back(c);
    }
  return cells;
}

/// Turns the agent toward an orientation whose view contains the first
/// target. If no orientation does, the target moves to a free visible cell.
inline void face_first_target(Rng& rng, WorldState& s) {
  WorldObject& target = s.objects[s.goal.targets.front()];
  std::vector<Dir> showing;
  for (int d = 0; d < 4; ++d) {
    WorldState probe = s;
    probe.dir = static_cast<Dir>(d);
    const auto cells = visible_cells(probe);
    if (std::find(cells.begin(), cells.end(), target.cell) != cells.end()) showing.push_back(probe.dir);
  }
  if (!showing.empty()) {
    s.dir = showing[rng.below(showing.size())];
    return;
  }
  std::vector<Cell> free;
  for (Cell c : visible_cells(s))
    if (!occupied(s, c)) free.push_back(c);
  if (free.empty()) throw Error("layout: no free visible cell for the target");
  target.cell = free[rng.below(free.size())];
}

struct Layout {
  WorldState state;
  std::string instruction;
};

inline Layout random_layout(Rng& rng, const EnvConfig& cfg) {
  Layout out;
  WorldState& s = out.state;
  s.width = s.height = cfg.grid_size;
  s.agent = {static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.grid_size))),
             static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.grid_size)))};
  s.dir = static_cast<Dir>(rng.below(4));

  switch (cfg.mode) {
    case DatasetMode::LangOnly: {
      s.goal.kind = TaskKind::Spin;
      s.goal.spin_action = rng.coin() ? Action::RotateRight : Action::RotateLeft;
      s.goal.spin_count = 1 + static_cast<int>(rng.below(3));
      static constexpr std::array<std::string_view, 3> counts = {"one", "two", "three"};
      out.instruction = std::string("spin ") + (s.goal.spin_action == Action::RotateLeft ? "left " : "right ") +
                        std::string(counts[static_cast<std::size_t>(s.goal.spin_count - 1)]) + " times";
      return out;
    }
    case DatasetMode::VisionOnly: {
      WorldObject o = random_object(rng, s);
      // Place the single object inside the initial field of view.
      const std::vector<Cell> visible = visible_cells(s);
      if (visible.empty()) throw Error("vision-only layout: no visible cell");
      o.cell = visible[rng.below(visible.size())];
      s.objects.push_back(o);
      s.goal.kind = TaskKind::Find;
      s.goal.targets = {0};
      out.instruction = "find it";
      return out;
    }
    case DatasetMode::Standard:
    case DatasetMode::TwoClause: {
      const bool two = cfg.mode == DatasetMode::TwoClause;
      // Two-clause objects differ pairwise in both type and color, so each
      // clause's words pick out one object.
      const int lo = two ? std::max(2, cfg.min_objects) : cfg.min_objects;
      const int hi = two ? std::min(3, cfg.max_objects) : cfg.max_objects;
      const int count = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
      for (int i = 0; i < count; ++i) {
        WorldObject o = two ? distinct_object(rng, s) : random_object(rng, s);
        o.cell = random_free_cell(rng, s);
        s.objects.push_back(o);
      }
      if (two) {
        const std::size_t a = rng.below(s.objects.size());
        std::size_t b = rng.below(s.objects.size() - 1);
        if (b >= a) ++b;
        s.goal.kind = TaskKind::Sequence;
        s.goal.targets = {a, b};
        out.instruction = "go to the " + describe(s.objects[a]) + " then go to the " + describe(s.objects[b]);
      } else {
        const std::size_t target = rng.below(s.objects.size());
        const bool pickup = rng.coin();
        s.goal.kind = pickup ? TaskKind::Pickup : TaskKind::GoTo;
        s.goal.targets = {target};
        out.instruction = std::string(pickup ? "pick up the " : "go to the ") + describe(s.objects[target]);
      }
      face_first_target(rng, s);
      advance_goal(s);
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Rolls out the expert from `initial`, recording one observation per step.
/// Throws if the expert fails to stop within `max_steps`.
inline Trajectory rollout_expert(const WorldState& initial, const std::string& instruction, const EnvConfig& cfg,
                                 std::uint64_t noise_seed, std::size_t id) {
  Trajectory traj;
  traj.id = id;
  traj.instruction = instruction;
  traj.initial = initial;
  traj.noise_seed = noise_seed;
  const std::vector<int> tokens = tokenize(instruction, cfg.max_tokens());
  WorldState s = initial;
  int previous = kStartAction;
  for (int t = 0; t < cfg.max_steps; ++t) {
    const Action a = plan_expert_action(s);
    Observation obs = render_observation(s, previous, tokens);
    if (cfg.mode == DatasetMode::LangOnly) fill_noise(obs, derive_seed(noise_seed, static_cast<std::uint64_t>(t)));
    traj.steps.push_back({std::move(obs), a});
    if (a == Action::Stop) return traj;
    s = step(s, a);
    previous = static_cast<int>(a);
  }
  throw Error("rollout_expert: expert did not stop within " + std::to_string(cfg.max_steps) + " steps");
}

/// One episode as a pure function of (seed, config). Unreachable layouts are
/// regenerated from the same stream up to `max_retries` times.
inline Trajectory generate_episode(std::uint64_t seed, const EnvConfig& cfg, std::size_t id = 0) {
  cfg.validate();
  Rng rng(seed);
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    detail::Layout layout = detail::random_layout(rng, cfg);
    validate(layout.state);
    if (!layout.state.goal.targets.empty()) {
      bool reachable = true;
      WorldState probe = layout.state;
      // Every stage of a sequence must be reachable from the previous one.
      for (std::size_t stage = probe.goal.stage; stage < probe.goal.targets.size(); ++stage) {
        probe.goal.stage = stage;
        if (!probe.facing_target() && !navigation_distance(probe)) {
          reachable = false;
          break;
        }
      }
      if (!reachable) continue;
    }
    return rollout_expert(layout.state, layout.instruction, cfg, rng.next(), id);
  }
  throw Error("generate_episode: no reachable layout after " + std::to_string(cfg.max_retries) + " retries");
}

inline Dataset generate_dataset(std::uint64_t seed, std::size_t episodes, const EnvConfig& cfg) {
  Dataset data;
  data.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) data.push_back(generate_episode(derive_seed(seed, i), cfg, i));
  return data;
}

/// Replays a generated trajectory's expert actions from its initial state and
/// re-renders every observation.
inline std::vector<Observation> replay_observations(const Trajectory& traj, const EnvConfig& cfg) {
  if (!traj.initial) throw Error("replay: trajectory has no initial state");
  std::vector<Observation> out;
  WorldState s = *traj.initial;
  int previous = kStartAction;
  const std::vector<int> tokens = tokenize(traj.instruction, cfg.max_tokens());
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    Observation obs = render_observation(s, previous, tokens);
    if (cfg.mode == DatasetMode::LangOnly) fill_noise(obs, derive_seed(traj.noise_seed, t));
    out.push_back(std::move(obs));
    s = step(s, traj.steps[t].expert);
    previous = static_cast<int>(traj.steps[t].expert);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory files: a header line, then one JSON record per observation step.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTrajectoryHeader = "# maea-trajectories v1";

inline void write_trajectories(std::ostream& out, const Dataset& data) {
  out << kTrajectoryHeader << '\n';
  for (const auto& traj : data) {
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& st = traj.steps[t];
      std::string bits(kVisualSize, '0');
      for (std::size_t i = 0; i < st.obs.visual.size(); ++i) bits[i] = st.obs.visual[i] ? '1' : '0';
      nlohmann::ordered_json rec;
      rec["trajectory_id"] = traj.id;
      rec["t"] = t + 1;
      rec["T"] = traj.steps.size();
      rec["instruction"] = traj.instruction;
      rec["tokens"] = st.obs.tokens;
      rec["prev_action"] = st.obs.prev_action;
      rec["expert_action"] = static_cast<int>(st.expert);
      rec["visual"] = bits;
      out << rec.dump() << '\n';
    }
  }
}

inline Dataset read_trajectories(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader) {
    throw Error("trajectory file: missing or unsupported header (expected '" + std::string(kTrajectoryHeader) + "')");
  }
  Dataset data;
  std::vector<std::size_t> expected;  // declared T per trajectory
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "trajectory file line " + std::to_string(line_no);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + ": " + e.what());
    }
    std::size_t id = 0;
    std::size_t t = 0;
    std::size_t total = 0;
    TrajectoryStep st;
    std::string instruction;
    std::string bits;
    int expert = 0;
    try {
      id = rec.at("trajectory_id").get<std::size_t>();
      t = rec.at("t").get<std::size_t>();
      total = rec.at("T").get<std::size_t>();
      instruction = rec.at("instruction").get<std::string>();
      st.obs.tokens = rec.at("tokens").get<std::vector<int>>();
      st.obs.prev_action = rec.at("prev_action").get<int>();
      expert = rec.at("expert_action").get<int>();
      bits = rec.at("visual").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(where + ": " + e.what());
    }
    if (t == 1) {
      if (!data.empty() && data.back().steps.size() != expected.back()) {
        throw Error(where + ": previous trajectory is truncated");
      }
      Trajectory traj;
      traj.id = id;
      traj.instruction = instruction;
      data.push_back(std::move(traj));
      expected.push_back(total);
    }
    if (data.empty() || data.back().id != id || t != data.back().steps.size() + 1 || total != expected.back() ||
        t > total) {
      throw Error(where + ": inconsistent trajectory_id/t/T");
    }
    if (expert < 0 || expert >= kNumActions) throw Error(where + ": expert action out of range");
    st.expert = static_cast<Action>(expert);
    if (bits.size() != static_cast<std::size_t>(kVisualSize)) throw Error(where + ": visual field has wrong length");
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != '0' && bits[i] != '1') throw Error(where + ": visual field must be 0/1 digits");
      st.obs.visual[i] = bits[i] == '1' ? 1 : 0;
    }
    data.back().steps.push_back(std::move(st));
  }
  if (!data.empty() && data.back().steps.size() != expected.back()) {
    throw Error("trajectory file: trajectory " + std::to_string(data.back().id) + " is truncated");
  }
  return data;
}

inline void save_trajectories(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  write_trajectories(out, data);
  if (!out) throw Error("write failed: " + path);
}

inline Dataset load_trajectories(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  return read_trajectories(in);
}

}  // namespace maea
