#pragma once

#include <string>
#include <vector>

#include "safepush/common.hpp"
#include "safepush/world.hpp"

namespace safepush::sim {

using world::ObstacleSet;
using world::WorldLayout;

struct SimConfig {
  double max_step = 0.05;       // per-step displacement cap of the agent
  double eps = 0.0;             // cost margin: cost fires when hazard surface distance < eps
  int horizon = 300;            // low-level steps per episode
  int lidar_bins = 16;
  double lidar_max_range = 3.0;
  double lidar_noise_sd = 0.01;
};

struct SimState {
  Vec2 robot_pos{0.0, 0.0};
  Vec2 box_pos{0.0, 0.0};
  Vec2 goal_pos{0.0, 0.0};
  int step_count = 0;
};

/// Pseudo-LiDAR bins per object category plus proprioception. goal_delta and
/// box_delta are the robot-relative displacements fed to the policy networks.
struct Observation {
  std::vector<double> lidar_hazard, lidar_pillar, lidar_box, lidar_goal;
  Vec2 robot_pos{0.0, 0.0};
  Vec2 goal_delta{0.0, 0.0};
  Vec2 box_delta{0.0, 0.0};
};

struct StepOutcome {
  SimState next_state;
  double reward = 0.0;
  int cost = 0;  // 0 or 1
  bool done = false;
  bool success = false;
};

/// Change in box-goal distance plus change in robot-box distance.
double push_reward(const SimState& prev, const SimState& cur);

/// 1 when the robot root is within eps of any hazard region (pillars never
/// cost), else 0.
int safety_cost(const SimState& state, const WorldLayout& layout, double eps);

/// Pure one-step transition: clipped delta move, pillar projection, quasi-static
/// box push, bounds clamping, then reward/cost/termination on the result.
StepOutcome sim_step(const WorldLayout& layout, const SimState& state, const Vec2& action,
                     const SimConfig& cfg);

/// Pseudo-LiDAR rendering of the state; draws 2 noise values per object from rng.
Observation observe(const WorldLayout& layout, const SimState& state, const SimConfig& cfg,
                    Rng& rng);

/// Planner view of the obstacles: centers perturbed by Gaussian noise, radii exact.
ObstacleSet noisy_obstacle_estimates(const WorldLayout& layout, double noise_sd, Rng& rng);

/// Owns one episode's state and noise stream; deterministic given (layout, seed,
/// action sequence).
class PushWorldSim {
 public:
  PushWorldSim(WorldLayout layout, SimConfig cfg);

  std::pair<SimState, Observation> reset(uint64_t seed);
  StepOutcome step(const Vec2& action);
  Observation observe_now();
  ObstacleSet planner_obstacle_estimates(double noise_sd);

  const SimState& state() const { return state_; }
  const WorldLayout& layout() const { return layout_; }
  const SimConfig& config() const { return cfg_; }

 private:
  WorldLayout layout_;
  SimConfig cfg_;
  SimState state_;
  Rng rng_{0};
};

/// Episode trace with enough context to replay it bit-exactly: the layout, the
/// config header, one action record and one state record per step.
struct EpisodeTrace {
  WorldLayout layout;
  SimConfig cfg;
  uint64_t seed = 0;
  std::vector<Vec2> actions;
  struct Row {
    int t;
    Vec2 robot, box;
    double reward;
    int cost;
  };
  std::vector<Row> rows;
};

std::string serialize_trace(const EpisodeTrace& trace);
EpisodeTrace parse_episode_trace(const std::string& text);

}  // namespace safepush::sim
