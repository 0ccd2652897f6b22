// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "maea/gridworld.hpp"

using namespace maea;

namespace {

WorldState empty_room(Cell agent, Dir dir, int size = 8) {
  WorldState s;
  s.width = s.height = size;
  s.agent = agent;
  s.dir = dir;
  return s;
}

WorldState with_target(WorldState s, Cell cell, TaskKind kind, ObjectType type = ObjectType::Ball,
                       Color color = Color::Red) {
  s.objects.push_back({type, color, cell, false});
  s.goal.kind = kind;
  s.goal.targets = {s.objects.size() - 1};
  return s;
}

// Value iteration over every (cell, orientation) pose: an oracle for the
// shortest navigation distance that shares no code with the planner's BFS.
int brute_force_distance(const WorldState& s) {
  const Cell target = s.target().cell;
  const int n = s.width * s.height * 4;
  const int inf = 1 << 20;
  std::vector<int> dist(static_cast<std::size_t>(n), inf);
  auto decode = [&](int i) {
    WorldState p = s;
    p.agent = {(i / 4) % s.width, (i / 4) / s.width};
    p.dir = static_cast<Dir>(i % 4);
    return p;
  };
  auto encode = [&](const WorldState& p) { return (p.agent.y * s.width + p.agent.x) * 4 + static_cast<int>(p.dir); };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      WorldState p = decode(i);
      if (p.object_at(p.agent) != nullptr) continue;
      int best = p.front() == target ? 0 : inf;
      for (Action a : {Action::MoveAhead, Action::RotateLeft, Action::RotateRight}) {
        WorldState q = p;
        q.goal = Goal{};
        // Manual transition.
        if (a == Action::MoveAhead) {
          const Cell f = q.front();
          if (q.in_bounds(f) && q.object_at(f) == nullptr) q.agent = f;
        } else {
          q.dir = static_cast<Dir>((static_cast<int>(q.dir) + (a == Action::RotateLeft ? 3 : 1)) % 4);
        }
        best = std::min(best, dist[static_cast<std::size_t>(encode(q))] + 1);
      }
      if (best < dist[static_cast<std::size_t>(i)]) {
        dist[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
  }
  return dist[static_cast<std::size_t>(encode(s))];
}

std::vector<Action> expert_actions(const Trajectory& traj) {
  std::vector<Action> out;
  for (const auto& st : traj.steps) out.push_back(st.expert);
  return out;
}

std::string serialize(const Dataset& d) {
  std::ostringstream out;
  write_trajectories(out, d);
  return out.str();
}

}  // namespace

TEST(Tokenize, TemplateInstruction) {
  const auto ids = tokenize("go to the red ball");
  ASSERT_EQ(ids.size(), 8u);
  EXPECT_EQ(instruction_length(ids), 5u);
  EXPECT_EQ(ids, (std::vector<int>{2, 3, 4, 8, 12, 0, 0, 0}));
}

TEST(Tokenize, EmptyIsAllPad) {
  const auto ids = tokenize("");
  EXPECT_EQ(ids, std::vector<int>(8, kPad));
  EXPECT_EQ(instruction_length(ids), 0u);
}

TEST(Tokenize, UnknownWordMapsToUnkAndCaseFolds) {
  EXPECT_EQ(tokenize("Go TO the purple ball"), (std::vector<int>{2, 3, 4, kUnk, 12, 0, 0, 0}));
}

TEST(Tokenize, TooLongIsRejected) { EXPECT_THROW(tokenize("go to the red ball then go to the box"), Error); }

TEST(Tokenize, RoundTripsEveryTemplate) {
  std::vector<std::string> all = {"find it"};
  for (auto c : kColorNames)
    for (auto t : kTypeNames) {
      const std::string obj = std::string(c) + " " + std::string(t);
      all.push_back("go to the " + obj);
      all.push_back("pick up the " + obj);
      for (auto c2 : kColorNames)
        for (auto t2 : kTypeNames) all.push_back("go to the " + obj + " then go to the " + std::string(c2) + " " + std::string(t2));
    }
  for (auto dir : {"left", "right"})
    for (auto k : {"one", "two", "three"}) all.push_back(std::string("spin ") + dir + " " + k + " times");
  for (const auto& s : all) EXPECT_EQ(detokenize(tokenize(s, 11)), s);
}

TEST(Planner, FacingAdjacentTargetPicksUp) {
  const WorldState s = with_target(empty_room({3, 3}, Dir::North), {3, 2}, TaskKind::Pickup);
  EXPECT_EQ(plan_expert_action(s), Action::Pickup);
  const Trajectory traj = rollout_expert(s, "pick up the red ball", EnvConfig{}, 0, 0);
  EXPECT_EQ(expert_actions(traj), (std::vector<Action>{Action::Pickup, Action::Stop}));
}

TEST(Planner, TargetThreeAheadMovesTwiceThenStops) {
  const WorldState s = with_target(empty_room({3, 6}, Dir::North), {3, 3}, TaskKind::GoTo);
  EXPECT_EQ(brute_force_distance(s), 2);
  const Trajectory traj = rollout_expert(s, "go to the red ball", EnvConfig{}, 0, 0);
  EXPECT_EQ(expert_actions(traj), (std::vector<Action>{Action::MoveAhead, Action::MoveAhead, Action::Stop}));
}

TEST(Planner, TargetDirectlyBehindRotatesLeft) {
  const WorldState s = with_target(empty_room({3, 3}, Dir::North), {3, 4}, TaskKind::GoTo);
  EXPECT_EQ(plan_expert_action(s), Action::RotateLeft);
}

TEST(Planner, UnreachableGoalRejected) {
  // Target boxed into a corner by two other objects.
  WorldState s = with_target(empty_room({4, 4}, Dir::North), {0, 0}, TaskKind::GoTo);
  s.objects.push_back({ObjectType::Key, Color::Blue, {1, 0}, false});
  s.objects.push_back({ObjectType::Key, Color::Green, {0, 1}, false});
  EXPECT_FALSE(navigation_distance(s).has_value());
  EXPECT_THROW(plan_expert_action(s), Error);
}

TEST(Planner, MatchesBruteForceDistanceOnRandomLayouts) {
  Rng rng(99);
  EnvConfig cfg;
  for (int trial = 0; trial < 150; ++trial) {
    const Trajectory traj = generate_episode(rng.next(), cfg);
    WorldState s = *traj.initial;
    if (s.facing_target()) continue;
    const auto planned = navigation_distance(s);
    ASSERT_TRUE(planned.has_value());
    EXPECT_EQ(*planned, brute_force_distance(s)) << "trial " << trial;
    // Following the planner realizes exactly that many navigation actions.
    int nav = 0;
    for (Action a : expert_actions(traj))
      if (a == Action::MoveAhead || a == Action::RotateLeft || a == Action::RotateRight) ++nav;
    EXPECT_EQ(nav, *planned) << "trial " << trial;
  }
}

TEST(Episode, LengthIsDistancePlusTaskConstant) {
  const EnvConfig cfg;
  const Dataset data = generate_dataset(5, 100, cfg);
  for (const auto& traj : data) {
    const WorldState& s = *traj.initial;
    const int distance = s.facing_target() ? 0 : brute_force_distance(s);
    const int constant = s.goal.kind == TaskKind::Pickup ? 2 : 1;
    EXPECT_EQ(static_cast<int>(traj.length()), distance + constant) << traj.instruction;
    EXPECT_EQ(traj.steps.back().expert, Action::Stop);
  }
}

TEST(Episode, SameSeedIsByteIdentical) {
  EnvConfig cfg;
  for (auto mode : {DatasetMode::Standard, DatasetMode::LangOnly, DatasetMode::VisionOnly, DatasetMode::TwoClause}) {
    cfg.mode = mode;
    EXPECT_EQ(serialize(generate_dataset(17, 20, cfg)), serialize(generate_dataset(17, 20, cfg))) << mode_name(mode);
  }
  cfg.mode = DatasetMode::Standard;
  EXPECT_NE(serialize(generate_dataset(17, 20, cfg)), serialize(generate_dataset(18, 20, cfg)));
}

TEST(Episode, ReplayReproducesObservations) {
  EnvConfig cfg;
  for (auto mode : {DatasetMode::Standard, DatasetMode::LangOnly, DatasetMode::VisionOnly, DatasetMode::TwoClause}) {
    cfg.mode = mode;
    for (const auto& traj : generate_dataset(23, 40, cfg)) {
      const auto replayed = replay_observations(traj, cfg);
      ASSERT_EQ(replayed.size(), traj.steps.size());
      for (std::size_t t = 0; t < replayed.size(); ++t) EXPECT_EQ(replayed[t], traj.steps[t].obs);
    }
  }
}

TEST(Episode, InvalidConfigRejected) {
  EnvConfig cfg;
  cfg.grid_size = 4;
  EXPECT_THROW(generate_episode(1, cfg), Error);
  cfg = EnvConfig{};
  cfg.max_objects = 5;
  EXPECT_THROW(generate_episode(1, cfg), Error);
}

TEST(Episode, LangOnlyFollowsTheVerb) {
  EnvConfig cfg;
  cfg.mode = DatasetMode::LangOnly;
  for (const auto& traj : generate_dataset(3, 30, cfg)) {
    const bool left = traj.instruction.find("left") != std::string::npos;
    const int k = traj.instruction.find("one") != std::string::npos ? 1 : traj.instruction.find("two") != std::string::npos ? 2 : 3;
    std::vector<Action> expected(static_cast<std::size_t>(k), left ? Action::RotateLeft : Action::RotateRight);
    expected.push_back(Action::Stop);
    EXPECT_EQ(expert_actions(traj), expected) << traj.instruction;
  }
}

TEST(Episode, VisionOnlyTargetStartsInView) {
  EnvConfig cfg;
  cfg.mode = DatasetMode::VisionOnly;
  for (const auto& traj : generate_dataset(4, 30, cfg)) {
    EXPECT_EQ(traj.instruction, "find it");
    const auto& v = traj.steps.front().obs.visual;
    int object_cells = 0;
    for (int r = 0; r < kView; ++r)
      for (int c = 0; c < kView; ++c)
        for (int ch = 0; ch < 3; ++ch) object_cells += v[visual_index(ch, r, c)];
    EXPECT_EQ(object_cells, 1);
  }
}

TEST(Episode, StandardTargetStartsInView) {
  EnvConfig cfg;
  for (const auto& traj : generate_dataset(6, 50, cfg)) {
    const WorldState& s = *traj.initial;
    const WorldObject& target = s.objects[s.goal.targets.front()];
    const auto& v = traj.steps.front().obs.visual;
    bool seen = false;
    for (int r = 0; r < kView; ++r)
      for (int c = 0; c < kView; ++c)
        seen = seen || (v[visual_index(static_cast<int>(target.type), r, c)] &&
                        v[visual_index(kColorChannelBase + static_cast<int>(target.color), r, c)]);
    EXPECT_TRUE(seen) << traj.instruction;
  }
}

TEST(Episode, TwoClauseVisitsBothTargetsInOrder) {
  EnvConfig cfg;
  cfg.mode = DatasetMode::TwoClause;
  for (const auto& traj : generate_dataset(8, 30, cfg)) {
    EXPECT_EQ(instruction_length(traj.steps.front().obs.tokens), 11u);
    WorldState s = *traj.initial;
    bool faced_first = s.front() == s.objects[s.goal.targets[0]].cell;
    for (const auto& st : traj.steps) {
      s = step(s, st.expert);
      faced_first = faced_first || s.front() == s.objects[s.goal.targets[0]].cell;
    }
    EXPECT_TRUE(faced_first);
    EXPECT_EQ(s.front(), s.objects[s.goal.targets[1]].cell);
  }
}

TEST(Episode, TwoClauseObjectsShareNeitherTypeNorColor) {
  EnvConfig cfg;
  cfg.mode = DatasetMode::TwoClause;
  for (const auto& traj : generate_dataset(10, 60, cfg)) {
    const auto& objs = traj.initial->objects;
    ASSERT_GE(objs.size(), 2u);
    ASSERT_LE(objs.size(), 3u);
    for (std::size_t i = 0; i < objs.size(); ++i)
      for (std::size_t j = i + 1; j < objs.size(); ++j) {
        EXPECT_NE(objs[i].type, objs[j].type);
        EXPECT_NE(objs[i].color, objs[j].color);
      }
  }
}

TEST(Render, EmptyRoomShowsOnlyWallsBeyondTheGrid) {
  const WorldState s = empty_room({4, 2}, Dir::North);
  const Observation obs = render_observation(s, kStartAction, tokenize("find it"));
  for (int r = 0; r < kView; ++r) {
    for (int c = 0; c < kView; ++c) {
      // Agent at (4,2) facing north: window row r covers y = 2 - (6 - r), col c covers x = 4 + (c - 3).
      const int x = 4 + (c - 3);
      const int y = 2 - (6 - r);
      const bool outside = x < 0 || x >= 8 || y < 0 || y >= 8;
      EXPECT_EQ(obs.visual[visual_index(kWallChannel, r, c)], outside ? 1 : 0) << r << "," << c;
      for (int ch = 0; ch < kWallChannel; ++ch) EXPECT_EQ(obs.visual[visual_index(ch, r, c)], 0);
    }
  }
}

TEST(Render, RedBallOneAheadSetsCellAboveCenter) {
  const WorldState s = with_target(empty_room({3, 6}, Dir::North), {3, 5}, TaskKind::GoTo);
  const Observation obs = render_observation(s, kStartAction, tokenize("go to the red ball"));
  EXPECT_EQ(obs.visual[visual_index(static_cast<int>(ObjectType::Ball), 5, 3)], 1);
  EXPECT_EQ(obs.visual[visual_index(kColorChannelBase + static_cast<int>(Color::Red), 5, 3)], 1);
  int total_object_bits = 0;
  for (int ch = 0; ch < kWallChannel; ++ch)
    for (int r = 0; r < kView; ++r)
      for (int c = 0; c < kView; ++c) total_object_bits += obs.visual[visual_index(ch, r, c)];
  EXPECT_EQ(total_object_bits, 2);
}

// Second rendering path: build an allocentric patch around the agent, rotate
// the array so the agent faces up, and crop the egocentric window.
TEST(Render, RotationConsistencyAgainstRotatedPatch) {
  Rng rng(5);
  EnvConfig cfg;
  for (int trial = 0; trial < 40; ++trial) {
    WorldState s = *generate_episode(rng.next(), cfg).initial;
    for (int d = 0; d < 4; ++d) {
      s.dir = static_cast<Dir>(d);
      const Observation obs = render_observation(s, kStartAction, tokenize("find it"));
      constexpr int R = 6;  // patch radius
      constexpr int P = 2 * R + 1;
      // patch[ch][py][px] with py, px in world-aligned offsets from the agent.
      std::vector<int> patch(static_cast<std::size_t>(kChannels * P * P), 0);
      for (int dy = -R; dy <= R; ++dy)
        for (int dx = -R; dx <= R; ++dx) {
          const Cell c{s.agent.x + dx, s.agent.y + dy};
          auto at = [&](int ch) -> int& { return patch[static_cast<std::size_t>((ch * P + dy + R) * P + dx + R)]; };
          if (!s.in_bounds(c)) at(kWallChannel) = 1;
          else if (const auto* o = s.object_at(c)) {
            at(static_cast<int>(o->type)) = 1;
            at(kColorChannelBase + static_cast<int>(o->color)) = 1;
          }
        }
      // Rotate counter-clockwise once per quarter turn the agent faces away from north.
      for (int turn = 0; turn < d; ++turn) {
        std::vector<int> rotated(patch.size());
        for (int ch = 0; ch < kChannels; ++ch)
          for (int y = 0; y < P; ++y)
            for (int x = 0; x < P; ++x)
              rotated[static_cast<std::size_t>((ch * P + (P - 1 - x)) * P + y)] =
                  patch[static_cast<std::size_t>((ch * P + y) * P + x)];
        patch = rotated;
      }
      for (int ch = 0; ch < kChannels; ++ch)
        for (int r = 0; r < kView; ++r)
          for (int c = 0; c < kView; ++c) {
            const int py = R - (kView - 1 - r);
            const int px = R + (c - kView / 2);
            EXPECT_EQ(obs.visual[visual_index(ch, r, c)], patch[static_cast<std::size_t>((ch * P + py) * P + px)])
                << "dir " << d << " ch " << ch << " r " << r << " c " << c;
          }
    }
  }
}

TEST(TrajectoryFile, RoundTrip) {
  EnvConfig cfg;
  const Dataset data = generate_dataset(12, 15, cfg);
  std::stringstream buf;
  write_trajectories(buf, data);
  const Dataset back = read_trajectories(buf);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].id, data[i].id);
    EXPECT_EQ(back[i].instruction, data[i].instruction);
    EXPECT_EQ(back[i].steps, data[i].steps);
  }
  EXPECT_EQ(serialize(back), serialize(data));
}

TEST(TrajectoryFile, RejectsBadHeaderAndTruncation) {
  std::stringstream bad("# something else\n");
  EXPECT_THROW(read_trajectories(bad), Error);

  const Dataset data = generate_dataset(1, 3, EnvConfig{});
  ASSERT_GE(data.back().length(), 2u);
  const std::string text = serialize(data);
  const std::string truncated = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  std::stringstream cut(truncated);
  EXPECT_THROW(read_trajectories(cut), Error);
}
