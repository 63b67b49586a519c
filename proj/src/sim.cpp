#include "safepush/sim.hpp"

#include <cmath>
#include <sstream>

namespace safepush::sim {

namespace {

constexpr int kContactPasses = 4;  // settle projection-vs-clamp interactions

// Push a disc of given radius out of every pillar and back inside bounds.
Vec2 resolve_disc(Vec2 pos, double radius, const WorldLayout& layout) {
  for (int pass = 0; pass < kContactPasses; ++pass) {
    for (const world::Circle& pillar : layout.pillars) {
      const double keep_out = pillar.radius + radius;
      const Vec2 diff = pos - pillar.center;
      const double dist = diff.norm();
      if (dist < keep_out)
        pos = pillar.center + (dist > 1e-12 ? Vec2(diff / dist) : Vec2(1.0, 0.0)) * keep_out;
    }
    pos = layout.bounds.clamp(pos, radius);
  }
  return pos;
}

}  // namespace

double push_reward(const SimState& prev, const SimState& cur) {
  const double box_goal = (prev.box_pos - prev.goal_pos).norm() - (cur.box_pos - cur.goal_pos).norm();
  const double robot_box = (prev.robot_pos - prev.box_pos).norm() - (cur.robot_pos - cur.box_pos).norm();
  return box_goal + robot_box;
}

int safety_cost(const SimState& state, const WorldLayout& layout, double eps) {
  for (const world::Circle& h : layout.hazards)
    if ((state.robot_pos - h.center).norm() - h.radius < eps) return 1;
  return 0;
}

StepOutcome sim_step(const WorldLayout& layout, const SimState& state, const Vec2& action,
                     const SimConfig& cfg) {
  if (!is_finite(action)) throw std::invalid_argument("non-finite action");

  Vec2 robot = state.robot_pos + clip_to_norm(action, cfg.max_step);
  robot = resolve_disc(robot, layout.robot_radius, layout);

  Vec2 box = state.box_pos;
  const double contact = layout.robot_radius + layout.box.radius;
  const Vec2 diff = box - robot;
  const double dist = diff.norm();
  if (dist < contact) {
    const Vec2 dir = dist > 1e-12 ? Vec2(diff / dist) : Vec2(1.0, 0.0);
    box += dir * (contact - dist);
    box = resolve_disc(box, layout.box.radius, layout);
  }
  robot = layout.bounds.clamp(robot, layout.robot_radius);

  StepOutcome out;
  out.next_state = SimState{robot, box, state.goal_pos, state.step_count + 1};
  out.reward = push_reward(state, out.next_state);
  out.cost = safety_cost(out.next_state, layout, cfg.eps);
  out.success = (box - state.goal_pos).norm() < layout.goal.radius;
  out.done = out.success || out.next_state.step_count >= cfg.horizon;
  return out;
}

namespace {

void lidar_category(const std::vector<world::Circle>& objects, const SimState& state,
                    const SimConfig& cfg, Rng& rng, std::vector<double>& bins) {
  bins.assign(cfg.lidar_bins, 0.0);
  for (const world::Circle& obj : objects) {
    const Vec2 noisy = obj.center + rng.normal_vec2(cfg.lidar_noise_sd);
    const Vec2 delta = noisy - state.robot_pos;
    const double dist = delta.norm();
    const double bearing = std::atan2(delta.y(), delta.x());  // (-pi, pi]
    int bin = static_cast<int>(std::floor((bearing + M_PI) / (2.0 * M_PI) * cfg.lidar_bins));
    bin = std::clamp(bin, 0, cfg.lidar_bins - 1);
    const double value = std::clamp(1.0 - dist / cfg.lidar_max_range, 0.0, 1.0);
    bins[bin] = std::max(bins[bin], value);
  }
}

}  // namespace

Observation observe(const WorldLayout& layout, const SimState& state, const SimConfig& cfg,
                    Rng& rng) {
  if (cfg.lidar_bins < 4) throw std::invalid_argument("lidar needs at least 4 bins");
  Observation obs;
  lidar_category(layout.hazards, state, cfg, rng, obs.lidar_hazard);
  lidar_category(layout.pillars, state, cfg, rng, obs.lidar_pillar);
  lidar_category({layout.box}, state, cfg, rng, obs.lidar_box);
  // the goal region is sensed at the live goal position, not the layout one
  lidar_category({{state.goal_pos, layout.goal.radius}}, state, cfg, rng, obs.lidar_goal);
  obs.robot_pos = state.robot_pos;
  obs.goal_delta = state.goal_pos - state.robot_pos;
  obs.box_delta = state.box_pos - state.robot_pos;
  return obs;
}

ObstacleSet noisy_obstacle_estimates(const WorldLayout& layout, double noise_sd, Rng& rng) {
  if (noise_sd < 0.0) throw std::invalid_argument("noise_sd must be non-negative");
  ObstacleSet obs = world::planner_obstacles(layout);
  if (noise_sd > 0.0)
    for (world::Obstacle& o : obs.obstacles) o.center += rng.normal_vec2(noise_sd);
  return obs;
}

PushWorldSim::PushWorldSim(WorldLayout layout, SimConfig cfg)
    : layout_(std::move(layout)), cfg_(cfg) {
  std::string why;
  if (!world::validate_layout(layout_, &why))
    throw std::invalid_argument("invalid layout: " + why);
}

std::pair<SimState, Observation> PushWorldSim::reset(uint64_t seed) {
  rng_ = Rng(seed_stream(seed, 0x51eeULL));
  state_ = SimState{layout_.robot_start, layout_.box.center, layout_.goal.center, 0};
  return {state_, observe_now()};
}

StepOutcome PushWorldSim::step(const Vec2& action) {
  StepOutcome out = sim_step(layout_, state_, action, cfg_);
  state_ = out.next_state;
  return out;
}

Observation PushWorldSim::observe_now() { return observe(layout_, state_, cfg_, rng_); }

ObstacleSet PushWorldSim::planner_obstacle_estimates(double noise_sd) {
  return noisy_obstacle_estimates(layout_, noise_sd, rng_);
}

std::string serialize_trace(const EpisodeTrace& trace) {
  std::string out;
  out += "sim_config " + format_double(trace.cfg.max_step) + ' ' + format_double(trace.cfg.eps) +
         ' ' + std::to_string(trace.cfg.horizon) + ' ' + std::to_string(trace.cfg.lidar_bins) +
         ' ' + format_double(trace.cfg.lidar_max_range) + ' ' +
         format_double(trace.cfg.lidar_noise_sd) + ' ' + std::to_string(trace.seed) + '\n';
  out += serialize_layout(trace.layout);
  for (const Vec2& a : trace.actions)
    out += "action " + format_double(a.x()) + ' ' + format_double(a.y()) + '\n';
  for (const EpisodeTrace::Row& r : trace.rows) {
    out += std::to_string(r.t) + ' ' + format_double(r.robot.x()) + ' ' +
           format_double(r.robot.y()) + ' ' + format_double(r.box.x()) + ' ' +
           format_double(r.box.y()) + ' ' + format_double(r.reward) + ' ' +
           std::to_string(r.cost) + '\n';
  }
  return out;
}

EpisodeTrace parse_episode_trace(const std::string& text) {
  EpisodeTrace trace;
  std::istringstream in(text);
  std::string line;
  std::string layout_text;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "sim_config") {
      ls >> trace.cfg.max_step >> trace.cfg.eps >> trace.cfg.horizon >> trace.cfg.lidar_bins >>
          trace.cfg.lidar_max_range >> trace.cfg.lidar_noise_sd >> trace.seed;
    } else if (head == "action") {
      double x, y;
      ls >> x >> y;
      trace.actions.emplace_back(x, y);
    } else if (head == "bounds_min" || head == "bounds_max" || head == "robot" ||
               head == "hazard" || head == "pillar" || head == "box" || head == "goal") {
      layout_text += line + '\n';
    } else {
      EpisodeTrace::Row row;
      std::istringstream rs(line);
      if (!(rs >> row.t >> row.robot.x() >> row.robot.y() >> row.box.x() >> row.box.y() >>
            row.reward >> row.cost))
        throw std::invalid_argument("malformed trace row: " + line);
      trace.rows.push_back(row);
    }
  }
  trace.layout = world::parse_layout(layout_text);
  return trace;
}

}  // namespace safepush::sim
