#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safepush/world.hpp"

using namespace safepush;
using namespace safepush::world;

TEST_CASE("min_clearance closed-form values") {
  ObstacleSet obs;
  obs.obstacles = {{Vec2(3.0, 4.0), 1.0}};
  CHECK(min_clearance(Vec2(0.0, 0.0), obs) == doctest::Approx(4.0).epsilon(1e-12));

  ObstacleSet at_center;
  at_center.obstacles = {{Vec2(1.0, 1.0), 0.5}};
  CHECK(min_clearance(Vec2(1.0, 1.0), at_center) == doctest::Approx(-0.5).epsilon(1e-12));

  ObstacleSet two;
  two.obstacles = {{Vec2(2.0, 0.0), 0.0}, {Vec2(0.0, 1.2), 0.0}};
  CHECK(min_clearance(Vec2(0.0, 0.0), two) == doctest::Approx(1.2).epsilon(1e-12));

  CHECK(min_clearance(Vec2(0.0, 0.0), ObstacleSet{}) == kInfinity);
}

TEST_CASE("min_clearance is 1-Lipschitz") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    ObstacleSet obs;
    const int n = 1 + static_cast<int>(rng.uniform_int(5));
    for (int i = 0; i < n; ++i)
      obs.obstacles.push_back({Vec2(rng.uniform(-2, 2), rng.uniform(-2, 2)), rng.uniform(0.05, 0.6)});
    const Vec2 p(rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Vec2 q(rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK(std::abs(min_clearance(p, obs) - min_clearance(q, obs)) <= (p - q).norm() + 1e-12);
  }
}

TEST_CASE("planner obstacle radii") {
  WorldLayout layout = sample_layout(3, Difficulty::easy);
  const ObstacleSet obs = planner_obstacles(layout);
  REQUIRE(obs.size() == layout.hazards.size() + layout.pillars.size());
  CHECK(obs.obstacles[0].effective_radius == layout.hazards[0].radius);
  CHECK(obs.obstacles.back().effective_radius ==
        layout.pillars.back().radius + layout.robot_radius);
}

TEST_CASE("sample_layout is a pure function of the seed") {
  const WorldLayout a = sample_layout(7, Difficulty::easy);
  const WorldLayout b = sample_layout(7, Difficulty::easy);
  CHECK(serialize_layout(a) == serialize_layout(b));

  const WorldLayout c = sample_layout(8, Difficulty::easy);
  CHECK(serialize_layout(a) != serialize_layout(c));
}

TEST_CASE("difficulty controls object counts") {
  for (uint64_t seed : {1ULL, 5ULL, 99ULL}) {
    const WorldLayout l2 = sample_layout(seed, Difficulty::level2);
    CHECK(l2.hazards.size() == 6);
    CHECK(l2.pillars.size() == 2);
    const WorldLayout l1 = sample_layout(seed, Difficulty::level1);
    CHECK(l1.hazards.size() == 3);
    CHECK(l1.pillars.size() == 1);
    const WorldLayout e = sample_layout(seed, Difficulty::easy);
    CHECK(e.hazards.size() == 1);
    CHECK(e.pillars.size() == 1);
  }
}

TEST_CASE("sampled layouts pass the independent validator") {
  for (Difficulty d : {Difficulty::easy, Difficulty::level1, Difficulty::level2}) {
    for (uint64_t seed = 0; seed < 30; ++seed) {
      const WorldLayout layout = sample_layout(seed, d);
      std::string why;
      CHECK_MESSAGE(validate_layout(layout, &why), why);
      // generated free space keeps a pushable corridor between the key points
      const ObstacleSet obs = planner_obstacles(layout);
      CHECK(path_feasible(layout.robot_start, layout.box.center, obs, layout.bounds, 0.25));
      CHECK(path_feasible(layout.box.center, layout.goal.center, obs, layout.bounds, 0.25));
    }
  }
}

TEST_CASE("placement exhaustion reports an error") {
  LayoutParams p = layout_params_for(Difficulty::easy);
  p.n_pillars = 200;  // cannot fit with the pillar-pillar gap
  p.max_rounds = 50;
  CHECK_THROWS_AS(sample_layout(0, p), LayoutError);
}

TEST_CASE("layout serialization round-trips") {
  const WorldLayout a = sample_layout(11, Difficulty::level1);
  const WorldLayout b = parse_layout(serialize_layout(a));
  CHECK(serialize_layout(a) == serialize_layout(b));
  CHECK(b.hazards.size() == a.hazards.size());
  CHECK(b.robot_start == a.robot_start);
  CHECK(b.box.center == a.box.center);
  CHECK(b.goal.radius == a.goal.radius);
}

TEST_CASE("path_feasible separates blocked regions") {
  ObstacleSet wall;
  // a wall of obstacles across the arena at x = 0
  for (double y = -2.0; y <= 2.0; y += 0.2) wall.obstacles.push_back({Vec2(0.0, y), 0.3});
  const Rect bounds;
  CHECK_FALSE(path_feasible(Vec2(-1.5, 0.0), Vec2(1.5, 0.0), wall, bounds, 0.1));
  CHECK(path_feasible(Vec2(-1.5, 0.5), Vec2(-1.5, -0.5), wall, bounds, 0.1));
  CHECK_FALSE(free_space_connected(wall, bounds, 0.1));

  ObstacleSet lone;
  lone.obstacles.push_back({Vec2(0.0, 0.0), 0.3});
  CHECK(path_feasible(Vec2(-1.5, 0.0), Vec2(1.5, 0.0), lone, bounds, 0.1));
  CHECK(free_space_connected(lone, bounds, 0.1));
}
