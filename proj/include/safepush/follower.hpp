#pragma once

#include "safepush/common.hpp"
#include "safepush/trajopt.hpp"

namespace safepush::follower {

using trajopt::Trajectory;

/// Index of the waypoint currently fed to the low-level controller. The index
/// never decreases over the lifetime of one trajectory.
struct TrackerState {
  int tracking_index = 0;
  double d_min = 0.2;
};

/// Walk from the current tracking index toward the end until a waypoint at
/// least d_min away from the robot is found; fall back to the last waypoint.
inline TrackerState select_tracking_point(const Trajectory& traj, const Vec2& robot_pos,
                                          TrackerState tracker) {
  const int n = traj.n();
  if (tracker.tracking_index < 0 || tracker.tracking_index >= n)
    throw std::out_of_range("tracking index out of range");
  int idx = tracker.tracking_index;
  while (idx < n && (traj.x[idx] - robot_pos).norm() < tracker.d_min) ++idx;
  tracker.tracking_index = idx < n ? idx : n - 1;
  return tracker;
}

/// One control step: pick the tracking waypoint, move straight at it with the
/// step magnitude capped. Plays the role of the goal-following policy for an
/// omnidirectional delta-position agent.
inline std::pair<Vec2, TrackerState> follow_step(const Vec2& robot_pos, const Trajectory& traj,
                                                 TrackerState tracker, double max_step) {
  if (max_step <= 0.0) throw std::invalid_argument("max_step must be positive");
  tracker = select_tracking_point(traj, robot_pos, tracker);
  const Vec2 action = clip_to_norm(traj.x[tracker.tracking_index] - robot_pos, max_step);
  return {action, tracker};
}

/// Progress made toward the goal this step; the training signal a learned
/// goal-following policy would receive.
inline double goal_following_reward(const Vec2& prev_pos, const Vec2& pos, const Vec2& goal) {
  return (prev_pos - goal).norm() - (pos - goal).norm();
}

}  // namespace safepush::follower
