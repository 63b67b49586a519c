#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safepush/follower.hpp"

using namespace safepush;
using namespace safepush::follower;

namespace {

Trajectory line_traj(double spacing, int n) {
  Trajectory t;
  t.dt = 0.1;
  for (int i = 0; i < n; ++i) {
    t.x.emplace_back(i * spacing, 0.0);
    t.v.emplace_back(0.0, 0.0);
  }
  return t;
}

}  // namespace

TEST_CASE("tracking point selection") {
  const Trajectory t = line_traj(0.1, 4);  // x = 0.0, 0.1, 0.2, 0.3

  SUBCASE("first waypoint at least d_min away") {
    const TrackerState next = select_tracking_point(t, Vec2(0.0, 0.0), TrackerState{0, 0.2});
    CHECK(next.tracking_index == 2);
  }

  SUBCASE("falls back to the last waypoint") {
    const TrackerState next = select_tracking_point(t, Vec2(0.15, 0.0), TrackerState{0, 1.0});
    CHECK(next.tracking_index == 3);
  }

  SUBCASE("never walks backwards") {
    const TrackerState next = select_tracking_point(t, Vec2(0.0, 0.0), TrackerState{3, 0.2});
    CHECK(next.tracking_index == 3);
  }

  SUBCASE("index monotone under random robot motion") {
    Rng rng(9);
    const Trajectory traj = line_traj(0.07, 30);
    TrackerState tracker{0, 0.2};
    for (int step = 0; step < 200; ++step) {
      const Vec2 robot(rng.uniform(-0.5, 2.5), rng.uniform(-0.3, 0.3));
      const TrackerState next = select_tracking_point(traj, robot, tracker);
      CHECK(next.tracking_index >= tracker.tracking_index);
      tracker = next;
    }
  }
}

TEST_CASE("follow_step action") {
  const Trajectory t = line_traj(0.1, 4);

  SUBCASE("short remaining distance is taken in full") {
    // every waypoint from the tracker on is within d_min: falls back to the
    // last one, 0.05 m away, and takes the full delta
    const Vec2 robot = t.x[3] - Vec2(0.05, 0.0);
    const auto [action, tracker] = follow_step(robot, t, TrackerState{2, 0.2}, 0.1);
    CHECK(tracker.tracking_index == 3);
    CHECK(action.x() == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(action.y() == 0.0);
  }

  SUBCASE("long distance is clipped to max_step") {
    Trajectory far = line_traj(1.0, 2);
    const auto [action, tracker] = follow_step(Vec2(0.0, 0.0), far, TrackerState{0, 0.2}, 0.1);
    CHECK(action.norm() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(action.x() == doctest::Approx(0.1).epsilon(1e-12));
  }

  SUBCASE("at the final waypoint the action is zero") {
    const auto [action, tracker] = follow_step(t.x[3], t, TrackerState{2, 0.2}, 0.1);
    CHECK(tracker.tracking_index == 3);
    CHECK(action.norm() == 0.0);
  }

  SUBCASE("action magnitude never exceeds max_step") {
    Rng rng(33);
    for (int trial = 0; trial < 300; ++trial) {
      Trajectory traj;
      traj.dt = 0.1;
      const int n = 2 + static_cast<int>(rng.uniform_int(20));
      for (int i = 0; i < n; ++i) {
        traj.x.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2));
        traj.v.emplace_back(0, 0);
      }
      const Vec2 robot(rng.uniform(-2, 2), rng.uniform(-2, 2));
      const double max_step = rng.uniform(0.01, 0.2);
      const int start = static_cast<int>(rng.uniform_int(n));
      const auto [action, tracker] = follow_step(robot, traj, TrackerState{start, 0.2}, max_step);
      CHECK(action.norm() <= max_step + 1e-12);
      CHECK(tracker.tracking_index >= start);
    }
  }
}

TEST_CASE("follower reaches the end of a straight trajectory") {
  const double spacing = 0.05;
  const int n = 25;
  const Trajectory t = line_traj(spacing, n);
  const double max_step = 0.05;  // >= waypoint spacing
  Vec2 robot(0.0, 0.0);
  TrackerState tracker{0, 0.2};
  const double path_length = spacing * (n - 1);
  const int budget = n + static_cast<int>(std::ceil(path_length / max_step));
  bool reached = false;
  for (int step = 0; step < budget && !reached; ++step) {
    auto [action, next] = follow_step(robot, t, tracker, max_step);
    tracker = next;
    robot += action;
    reached = (robot - t.x.back()).norm() <= 0.2;
  }
  CHECK(reached);
}

TEST_CASE("goal following reward") {
  CHECK(goal_following_reward(Vec2(1, 0), Vec2(0.5, 0), Vec2(0, 0)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(goal_following_reward(Vec2(0.7, -0.3), Vec2(0.7, -0.3), Vec2(0, 0)) == 0.0);
  CHECK(goal_following_reward(Vec2(0.5, 0), Vec2(1, 0), Vec2(0, 0)) ==
        doctest::Approx(-0.5).epsilon(1e-12));
}
