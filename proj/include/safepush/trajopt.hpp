#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "safepush/common.hpp"
#include "safepush/world.hpp"

namespace safepush::trajopt {

using world::Obstacle;
using world::ObstacleSet;

/// N waypoints with per-waypoint velocities, spaced dt seconds apart. The
/// velocities exist only to express the constant-velocity smoothness cost.
struct Trajectory {
  std::vector<Vec2> x;
  std::vector<Vec2> v;
  double dt = 0.1;

  int n() const { return static_cast<int>(x.size()); }
  bool finite() const;
};

struct TrajOptProblem {
  Vec2 start{0.0, 0.0};
  Vec2 subgoal{0.0, 0.0};
  ObstacleSet obstacles;
  Rect bounds;

  double eps_prime = 0.5;     // clearance the solved path must keep
  double delta_init = 0.0;    // constraint limits; zero drives exact satisfaction
  double delta_smooth = 0.0;
  Eigen::Matrix4d smooth_metric = Eigen::Matrix4d::Identity();  // K, SPD

  int n_waypoints = 30;
  double dt = 0.1;

  double lambda_init = 10.0;
  double lambda_growth = 5.0;
  double lambda_max = 1e4;
  int max_inner_iters = 50;
  int max_outer_iters = 8;
  double clearance_tol = 1e-3;

  // Collision residuals see obstacle radii inflated by this guard so that the
  // clearance also holds between waypoints, not just at them.
  double obstacle_guard = 0.01;
};

enum class SolveStatus { safe, best_effort_unsafe, at_lambda_max };
const char* to_string(SolveStatus s);

struct SolveReport {
  Trajectory trajectory;
  SolveStatus status = SolveStatus::best_effort_unsafe;
  double final_lambda = 0.0;
  double min_clearance_dense = 0.0;
  int inner_iterations_used = 0;
};

enum class PlanMode { training, inference };

// ---- the scalar cost terms of the constrained problem ----

/// Squared distance of the last waypoint to the subgoal.
double f_goal(const std::vector<Vec2>& x, const Vec2& subgoal);

/// Squared distance of the first waypoint to the start position.
double h_init(const std::vector<Vec2>& x, const Vec2& start);

/// Constant-velocity prior violation, summed over segments under metric K.
double h_smooth(const Trajectory& traj, const Eigen::Matrix4d& K);

/// Hinge penalty of one waypoint against one obstacle: 0 beyond eps_prime
/// surface distance, squared shortfall inside.
double h_cost(const Vec2& x, const Obstacle& obstacle, double eps_prime);

/// Scalarized dual objective with a single multiplier for all constraints.
double lagrangian(const Trajectory& traj, const TrajOptProblem& problem, double lambda);

// ---- least-squares form ----

struct ResidualSystem {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;  // rows x 4N, decision vector z = (x_1..x_N, v_1..v_N)
};

/// Stacked residuals whose squared norm equals the lagrangian up to the
/// constant -lambda*(delta_init + delta_smooth). Analytic Jacobian; the hinge
/// rows use subgradient zero exactly at the clearance threshold.
ResidualSystem residuals_and_jacobian(const Trajectory& traj, const TrajOptProblem& problem,
                                      double lambda);

Eigen::VectorXd pack_decision(const Trajectory& traj);
Trajectory unpack_decision(const Eigen::VectorXd& z, double dt);

/// Gauss-Newton system H = J'J, g = J'r, f = |r|^2, assembled block-wise; the
/// inner solver runs on this instead of forming the dense Jacobian product.
void normal_equations(const Trajectory& traj, const TrajOptProblem& problem, double lambda,
                      Eigen::MatrixXd& h, Eigen::VectorXd& g, double& f);

struct InnerResult {
  Trajectory trajectory;
  int iterations = 0;
  bool stalled = false;
  double cost = 0.0;  // ||r||^2 at the returned iterate
};

/// Damped least-squares (Levenberg-Marquardt) minimization of the residual
/// system at fixed lambda. Accepted steps never increase ||r||^2.
InnerResult solve_inner(const TrajOptProblem& problem, double lambda, const Trajectory& init);

/// Minimum obstacle clearance over the piecewise-linear interpolation of the
/// waypoints, sampled at most `resolution` apart (endpoints included).
double dense_clearance(const Trajectory& traj, const ObstacleSet& obs, double resolution);

Trajectory straight_line_init(const Vec2& start, const Vec2& subgoal, int n, double dt);

/// Solver default: the straight line with a centimeter lateral bow, which
/// breaks the tie when an obstacle center sits exactly on the segment.
Trajectory default_init(const Vec2& start, const Vec2& subgoal, int n, double dt);

/// Full solve. Training mode runs a single inner solve at lambda_init.
/// Inference mode grows lambda until the dense clearance check passes or
/// lambda_max is reached (starting at lambda_max when the start itself is
/// within eps_prime of an obstacle).
SolveReport solve(const TrajOptProblem& problem, PlanMode mode,
                  const std::optional<Trajectory>& warm_start = std::nullopt);

/// Trace export: header record with lambda/status/clearance, then one record
/// per waypoint (index, x, y, vx, vy).
std::string serialize_trace(const SolveReport& report);
SolveReport parse_trace(const std::string& text);

}  // namespace safepush::trajopt
