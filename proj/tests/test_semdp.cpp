#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "safepush/semdp.hpp"

using namespace safepush;
using namespace safepush::semdp;
using world::Circle;
using world::WorldLayout;

namespace {

WorldLayout open_layout(Vec2 robot, Vec2 box, Vec2 goal) {
  WorldLayout l;
  l.bounds = Rect{};
  l.robot_radius = 0.1;
  l.robot_start = robot;
  l.box = Circle{box, 0.2};
  l.goal = Circle{goal, 0.3};
  return l;
}

SemdpParams test_params() {
  SemdpParams p;
  p.sim.horizon = 300;
  p.sim.lidar_noise_sd = 0.0;
  p.planner_noise_sd = 0.0;
  return p;
}

}  // namespace

TEST_CASE("k = 1 accumulates exactly one low-level reward") {
  SemdpParams p = test_params();
  p.k = 1;
  SemdpEnv env(open_layout(Vec2(-1, 0), Vec2(1.0, 1.0), Vec2(1.5, 1.5)), p);
  sim::EpisodeTrace trace;
  env.enable_trace(&trace);
  env.reset(5);
  const SemdpTransition tr = env.step(Vec2(0.4, 0.0));
  REQUIRE(trace.rows.size() == 1);
  CHECK(tr.r == trace.rows[0].reward);
  CHECK(tr.c == trace.rows[0].cost);
}

TEST_CASE("stationary subgoal leaves the robot in place") {
  SemdpParams p = test_params();
  SemdpEnv env(open_layout(Vec2(-1, 0), Vec2(1.0, 1.0), Vec2(1.5, 1.5)), p);
  env.reset(6);
  const Vec2 before = env.simulator().state().robot_pos;
  const SemdpTransition tr = env.step(Vec2(0.0, 0.0));
  const Vec2 after = env.simulator().state().robot_pos;
  CHECK(std::abs(tr.r) < 1e-6);
  CHECK((after - before).norm() <= p.sim.max_step * p.k);
  CHECK((after - before).norm() < 1e-6);
}

TEST_CASE("an obstacle-free subgoal 0.5 m away is reached within one macro step") {
  SemdpParams p = test_params();
  SemdpEnv env(open_layout(Vec2(0, 0), Vec2(1.5, 1.5), Vec2(-1.5, 1.5)), p);
  env.reset(7);
  const Vec2 robot = env.simulator().state().robot_pos;
  const Vec2 subgoal = robot + Vec2(0.5, 0.0);
  env.step(Vec2(0.5, 0.0));
  const double dist = (env.simulator().state().robot_pos - subgoal).norm();
  CHECK(dist <= p.d_min + 0.05);
}

TEST_CASE("macro rewards equal the sum of their low-level rewards bitwise") {
  SemdpParams p = test_params();
  p.sim.horizon = 60;
  SemdpEnv env(open_layout(Vec2(-1, 0), Vec2(0.3, 0.0), Vec2(1.2, 0.0)), p);
  sim::EpisodeTrace trace;
  env.enable_trace(&trace);
  env.reset(8);
  Rng rng(3);
  std::vector<SemdpTransition> transitions;
  while (!env.done())
    transitions.push_back(env.step(Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1))));

  size_t row = 0;
  for (const SemdpTransition& tr : transitions) {
    double sum = 0.0;
    int cost = 0;
    for (int i = 0; i < p.k && row < trace.rows.size(); ++i) {
      sum += trace.rows[row].reward;
      cost += trace.rows[row].cost;
      const bool terminal = trace.rows[row].t >= p.sim.horizon;
      ++row;
      if (terminal) break;
    }
    CHECK(tr.r == sum);  // same accumulation order: bitwise equal
    CHECK(tr.c == cost);
  }
  CHECK(row == trace.rows.size());
  CHECK(transitions.back().done);
}

TEST_CASE("executed subgoals are clipped into the action range") {
  SemdpParams p = test_params();
  SemdpEnv env(open_layout(Vec2(0, 0), Vec2(1.5, 1.5), Vec2(-1.5, 1.5)), p);
  env.reset(9);
  const SemdpTransition tr = env.step(Vec2(5.0, -7.0));
  CHECK(tr.a_prime.x() == doctest::Approx(p.subgoal_range));
  CHECK(tr.a_prime.y() == doctest::Approx(-p.subgoal_range));
}

TEST_CASE("early termination truncates the macro transition") {
  SemdpParams p = test_params();
  p.sim.horizon = 13;  // one full macro step plus a 3-step remainder
  SemdpEnv env(open_layout(Vec2(-1, 0), Vec2(1.0, 1.0), Vec2(1.5, 1.5)), p);
  sim::EpisodeTrace trace;
  env.enable_trace(&trace);
  env.reset(10);
  const SemdpTransition t1 = env.step(Vec2(0.3, 0.2));
  CHECK_FALSE(t1.done);
  const SemdpTransition t2 = env.step(Vec2(0.3, 0.2));
  CHECK(t2.done);
  CHECK(env.low_level_steps() == 13);
  CHECK(trace.rows.size() == 13);
}

TEST_CASE("replay buffer") {
  SUBCASE("stored transitions stay bitwise identical") {
    ReplayBuffer buffer(4);
    Rng rng(11);
    std::vector<SemdpTransition> originals;
    for (int i = 0; i < 3; ++i) {
      SemdpTransition t;
      t.s.lidar_hazard = {rng.uniform01(), rng.uniform01()};
      t.s.lidar_pillar = {rng.uniform01(), rng.uniform01()};
      t.s.lidar_box = {rng.uniform01(), rng.uniform01()};
      t.s.lidar_goal = {rng.uniform01(), rng.uniform01()};
      t.s_next = t.s;
      t.a_prime = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
      t.r = rng.uniform(-1, 1);
      t.c = static_cast<int>(rng.uniform_int(2));
      originals.push_back(t);
      buffer.push(t);
    }
    for (int i = 0; i < 3; ++i) {
      CHECK(buffer.at(i).a_prime == originals[i].a_prime);
      CHECK(buffer.at(i).r == originals[i].r);
      CHECK(buffer.at(i).s.lidar_hazard == originals[i].s.lidar_hazard);
    }

    // sampled rows are bitwise copies of the stored features
    Rng sample_rng(21);
    Rng replica(21);
    const sac::Batch<float> batch = buffer.sample_batch(2, sample_rng);
    const int od = observation_dim(2);
    for (int i = 0; i < batch.size; ++i) {
      const SemdpTransition& src = buffer.at(replica.uniform_int(buffer.size()));
      const std::vector<float> feat = features<float>(src.s);
      for (int j = 0; j < od; ++j) CHECK(batch.obs[i * od + j] == feat[j]);
      CHECK(batch.rew[i] == static_cast<float>(src.r));
    }
  }

  SUBCASE("ring wraps around") {
    ReplayBuffer buffer(2);
    for (int i = 0; i < 5; ++i) {
      SemdpTransition t;
      t.r = i;
      buffer.push(t);
    }
    CHECK(buffer.size() == 2);
    CHECK(buffer.at(0).r == 4.0);  // slot 0 overwritten by the fifth push
    CHECK(buffer.at(1).r == 3.0);
  }

  SUBCASE("sampling from a too-small buffer is an error") {
    ReplayBuffer buffer(8);
    buffer.push(SemdpTransition{});
    Rng rng(0);
    CHECK_THROWS_AS(buffer.sample_batch(2, rng), std::logic_error);
  }
}

TEST_CASE("warm-start shift pads the tail") {
  trajopt::Trajectory t = trajopt::straight_line_init(Vec2(0, 0), Vec2(1, 0), 5, 0.1);
  const trajopt::Trajectory shifted = shift_for_warm_start(t, 2);
  REQUIRE(shifted.n() == 5);
  CHECK(shifted.x[0] == t.x[2]);
  CHECK(shifted.x[2] == t.x[4]);
  CHECK(shifted.x[3] == t.x[4]);
  CHECK(shifted.v[4] == Vec2(0, 0));
}

TEST_CASE("a budget below warmup leaves the agent at its initialization") {
  SemdpParams p = test_params();
  TrainOptions opts;
  opts.seed = 3;
  opts.budget = 40;
  opts.warmup_steps = 1000;
  opts.batch_size = 16;
  opts.hidden = 16;
  opts.checkpoint_interval = 0;
  sac::SacAgent<float> agent = make_agent(p, opts);
  const std::vector<double> before = agent.serialize_params();
  const TrainResult result = train(p, opts, agent);
  CHECK(agent.serialize_params() == before);
  CHECK(result.steps_run == 40);
  // one curve record per episode, the trailing partial episode included
  CHECK(result.curve.size() == static_cast<size_t>(result.curve.back().episode + 1));
}

TEST_CASE("smoke training improves the episode reward") {
  SemdpParams p = test_params();
  p.sim.horizon = 150;
  TrainOptions opts;
  opts.seed = 1;
  opts.budget = 4000;
  opts.warmup_steps = 150;
  opts.batch_size = 64;
  opts.hidden = 32;
  opts.lr = 1e-3f;
  opts.checkpoint_interval = 0;
  sac::SacAgent<float> agent = make_agent(p, opts);
  const TrainResult result = train(p, opts, agent);
  REQUIRE(result.curve.size() >= 20);
  const size_t decile = result.curve.size() / 10;
  double first = 0.0, last = 0.0;
  for (size_t i = 0; i < decile; ++i) first += result.curve[i].reward;
  for (size_t i = result.curve.size() - decile; i < result.curve.size(); ++i)
    last += result.curve[i].reward;
  CHECK(last / decile > first / decile);
}

TEST_CASE("a scripted pusher succeeds on an aligned layout") {
  SemdpParams p = test_params();
  p.mode = trajopt::PlanMode::inference;
  const WorldLayout aligned = open_layout(Vec2(-1.2, 0.0), Vec2(0.0, 0.0), Vec2(1.2, 0.0));
  const Policy push_toward_goal = [](const sim::Observation& obs) {
    const Vec2 box_to_goal = obs.goal_delta - obs.box_delta;
    return Vec2(clip_to_norm(box_to_goal, 0.8));
  };
  const std::vector<WorldLayout> layouts(4, aligned);
  const EvalResult result = evaluate(push_toward_goal, layouts, p, 99);
  CHECK(result.success_rate == 1.0);
  CHECK(result.mean_cost == 0.0);
  CHECK(result.mean_reward > 1.0);

  // determinism: the exact same evaluation twice
  const EvalResult again = evaluate(push_toward_goal, layouts, p, 99);
  REQUIRE(again.episodes.size() == result.episodes.size());
  for (size_t i = 0; i < again.episodes.size(); ++i) {
    CHECK(again.episodes[i].reward == result.episodes[i].reward);
    CHECK(again.episodes[i].cost == result.episodes[i].cost);
    CHECK(again.episodes[i].success == result.episodes[i].success);
  }
}

TEST_CASE("checkpoints round-trip the agent") {
  SemdpParams p = test_params();
  TrainOptions opts;
  opts.hidden = 16;
  opts.seed = 77;
  sac::SacAgent<float> agent = make_agent(p, opts);
  const std::string blob = serialize_checkpoint(agent, "schema_version = 1\n");
  const Checkpoint ck = parse_checkpoint(blob);
  CHECK(ck.hidden == 16);
  CHECK(ck.config_text == "schema_version = 1\n");
  const sac::SacAgent<float> restored = agent_from_checkpoint(ck, 0.99f, 0.005f, 3e-4f);
  CHECK(restored.serialize_params() == agent.serialize_params());

  SUBCASE("corruption is detected") {
    std::string bad = blob;
    bad[3] ^= 0x5a;
    CHECK_THROWS(parse_checkpoint(bad));
    std::string truncated = blob.substr(0, blob.size() / 2);
    CHECK_THROWS(parse_checkpoint(truncated));
  }
}
