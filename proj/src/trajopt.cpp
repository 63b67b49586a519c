#include "safepush/trajopt.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace safepush::trajopt {

namespace {

constexpr double kDenseResolution = 0.01;   // m, spacing of the clearance check
constexpr double kStepNormTol = 1e-8;       // LM convergence on step norm
constexpr double kDampingCap = 1e8;         // beyond this the solve is stalled
constexpr double kTinyDistance = 1e-12;     // degenerate waypoint-on-center case

// Obstacles as the collision residuals see them: radius inflated by the
// inter-waypoint discretization guard.
double guarded_radius(const Obstacle& o, const TrajOptProblem& p) {
  return o.effective_radius + p.obstacle_guard;
}

// Square root factor S of the metric K, so that |S u|^2 = u' K u.
Eigen::Matrix4d metric_sqrt(const Eigen::Matrix4d& K) {
  Eigen::LLT<Eigen::Matrix4d> llt(K);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("smooth_metric must be symmetric positive-definite");
  return Eigen::Matrix4d(llt.matrixL().transpose());
}

// Local Jacobian of the segment error u = (x_{i+1}-x_i-v_i dt; v_{i+1}-v_i)
// with respect to (x_i, v_i, x_{i+1}, v_{i+1}).
Eigen::Matrix<double, 4, 8> segment_jacobian(double dt) {
  Eigen::Matrix<double, 4, 8> B = Eigen::Matrix<double, 4, 8>::Zero();
  B.block<2, 2>(0, 0) = -Eigen::Matrix2d::Identity();
  B.block<2, 2>(0, 2) = -dt * Eigen::Matrix2d::Identity();
  B.block<2, 2>(0, 4) = Eigen::Matrix2d::Identity();
  B.block<2, 2>(2, 2) = -Eigen::Matrix2d::Identity();
  B.block<2, 2>(2, 6) = Eigen::Matrix2d::Identity();
  return B;
}

Eigen::Vector4d segment_error(const Trajectory& t, int i) {
  Eigen::Vector4d u;
  u.head<2>() = t.x[i + 1] - t.x[i] - t.v[i] * t.dt;
  u.tail<2>() = t.v[i + 1] - t.v[i];
  return u;
}

}  // namespace

bool Trajectory::finite() const {
  for (const Vec2& p : x)
    if (!is_finite(p)) return false;
  for (const Vec2& p : v)
    if (!is_finite(p)) return false;
  return std::isfinite(dt);
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::safe: return "safe";
    case SolveStatus::best_effort_unsafe: return "best_effort_unsafe";
    case SolveStatus::at_lambda_max: return "at_lambda_max";
  }
  return "best_effort_unsafe";
}

double f_goal(const std::vector<Vec2>& x, const Vec2& subgoal) {
  return (x.back() - subgoal).squaredNorm();
}

double h_init(const std::vector<Vec2>& x, const Vec2& start) {
  return (x.front() - start).squaredNorm();
}

double h_smooth(const Trajectory& traj, const Eigen::Matrix4d& K) {
  double sum = 0.0;
  for (int i = 0; i + 1 < traj.n(); ++i) {
    const Eigen::Vector4d u = segment_error(traj, i);
    sum += u.dot(K * u);
  }
  return sum;
}

double h_cost(const Vec2& x, const Obstacle& obstacle, double eps_prime) {
  const double d = (x - obstacle.center).norm() - obstacle.effective_radius;
  if (d > eps_prime) return 0.0;
  const double e = eps_prime - d;
  return e * e;
}

double lagrangian(const Trajectory& traj, const TrajOptProblem& problem, double lambda) {
  double collision = 0.0;
  for (const Vec2& xi : traj.x)
    for (const Obstacle& o : problem.obstacles.obstacles)
      collision += h_cost(xi, {o.center, guarded_radius(o, problem)}, problem.eps_prime);
  return f_goal(traj.x, problem.subgoal) +
         lambda * ((h_init(traj.x, problem.start) - problem.delta_init) +
                   (h_smooth(traj, problem.smooth_metric) - problem.delta_smooth) + collision);
}

Eigen::VectorXd pack_decision(const Trajectory& traj) {
  const int n = traj.n();
  Eigen::VectorXd z(4 * n);
  for (int i = 0; i < n; ++i) {
    z.segment<2>(2 * i) = traj.x[i];
    z.segment<2>(2 * n + 2 * i) = traj.v[i];
  }
  return z;
}

Trajectory unpack_decision(const Eigen::VectorXd& z, double dt) {
  const int n = static_cast<int>(z.size()) / 4;
  Trajectory t;
  t.dt = dt;
  t.x.resize(n);
  t.v.resize(n);
  for (int i = 0; i < n; ++i) {
    t.x[i] = z.segment<2>(2 * i);
    t.v[i] = z.segment<2>(2 * n + 2 * i);
  }
  return t;
}

ResidualSystem residuals_and_jacobian(const Trajectory& traj, const TrajOptProblem& problem,
                                      double lambda) {
  if (!traj.finite()) throw std::invalid_argument("non-finite trajectory");
  const int n = traj.n();
  const int m = static_cast<int>(problem.obstacles.size());
  const int dim = 4 * n;
  const int rows = 4 + 4 * (n - 1) + n * m;
  const double sl = std::sqrt(lambda);
  const Eigen::Matrix4d S = metric_sqrt(problem.smooth_metric);
  const Eigen::Matrix<double, 4, 8> B = segment_jacobian(traj.dt);

  ResidualSystem sys;
  sys.r = Eigen::VectorXd::Zero(rows);
  sys.J = Eigen::MatrixXd::Zero(rows, dim);

  auto xcol = [&](int i) { return 2 * i; };
  auto vcol = [&](int i) { return 2 * n + 2 * i; };

  // goal block
  sys.r.segment<2>(0) = traj.x.back() - problem.subgoal;
  sys.J.block<2, 2>(0, xcol(n - 1)) = Eigen::Matrix2d::Identity();

  // init block
  sys.r.segment<2>(2) = sl * (traj.x.front() - problem.start);
  sys.J.block<2, 2>(2, xcol(0)) = sl * Eigen::Matrix2d::Identity();

  // smoothness blocks
  const Eigen::Matrix<double, 4, 8> SB = S * B;
  for (int i = 0; i + 1 < n; ++i) {
    const int row = 4 + 4 * i;
    sys.r.segment<4>(row) = sl * S * segment_error(traj, i);
    sys.J.block<4, 2>(row, xcol(i)) = sl * SB.block<4, 2>(0, 0);
    sys.J.block<4, 2>(row, vcol(i)) = sl * SB.block<4, 2>(0, 2);
    sys.J.block<4, 2>(row, xcol(i + 1)) = sl * SB.block<4, 2>(0, 4);
    sys.J.block<4, 2>(row, vcol(i + 1)) = sl * SB.block<4, 2>(0, 6);
  }

  // collision hinge rows, one per (waypoint, obstacle)
  int row = 4 + 4 * (n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j, ++row) {
      const Obstacle& o = problem.obstacles.obstacles[j];
      const Vec2 diff = traj.x[i] - o.center;
      const double dist = diff.norm();
      const double d = dist - guarded_radius(o, problem);
      if (d >= problem.eps_prime) continue;  // inactive: zero residual, zero row
      sys.r(row) = sl * (problem.eps_prime - d);
      if (dist > kTinyDistance)
        sys.J.block<1, 2>(row, xcol(i)) = (-sl / dist) * diff.transpose();
      // at the exact center the direction is undefined; keep a zero gradient
    }
  }
  return sys;
}

namespace {

// Gauss-Newton data assembled block-wise: H = J'J, g = J'r, f = |r|^2.
// Equivalent to the dense system above (tested), but O(N*(M+1)) instead of a
// dense matrix product per iteration.
struct NormalEqs {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  double f = 0.0;
};

void assemble_normal_eqs(const Trajectory& traj, const TrajOptProblem& problem, double lambda,
                         const Eigen::Matrix<double, 8, 8>& BKB,
                         const Eigen::Matrix<double, 8, 4>& BK, NormalEqs& out) {
  const int n = traj.n();
  const int dim = 4 * n;
  out.H.setZero(dim, dim);
  out.g.setZero(dim);
  out.f = 0.0;

  auto xcol = [&](int i) { return 2 * i; };
  auto vcol = [&](int i) { return 2 * n + 2 * i; };

  // goal
  const Vec2 ge = traj.x.back() - problem.subgoal;
  out.H.block<2, 2>(xcol(n - 1), xcol(n - 1)) += Eigen::Matrix2d::Identity();
  out.g.segment<2>(xcol(n - 1)) += ge;
  out.f += ge.squaredNorm();

  // init
  const Vec2 ie = traj.x.front() - problem.start;
  out.H.block<2, 2>(xcol(0), xcol(0)) += lambda * Eigen::Matrix2d::Identity();
  out.g.segment<2>(xcol(0)) += lambda * ie;
  out.f += lambda * ie.squaredNorm();

  // smoothness: scatter the 8x8 local system into the four 2-column slots
  for (int i = 0; i + 1 < n; ++i) {
    const Eigen::Vector4d u = segment_error(traj, i);
    const Eigen::Matrix<double, 8, 1> gl = lambda * (BK * u);
    const int cols[4] = {xcol(i), vcol(i), xcol(i + 1), vcol(i + 1)};
    for (int a = 0; a < 4; ++a) {
      out.g.segment<2>(cols[a]) += gl.segment<2>(2 * a);
      for (int b = 0; b < 4; ++b)
        out.H.block<2, 2>(cols[a], cols[b]) += lambda * BKB.block<2, 2>(2 * a, 2 * b);
    }
    out.f += lambda * u.dot(problem.smooth_metric * u);
  }

  // collision hinges
  for (int i = 0; i < n; ++i) {
    for (const Obstacle& o : problem.obstacles.obstacles) {
      const Vec2 diff = traj.x[i] - o.center;
      const double dist = diff.norm();
      const double d = dist - guarded_radius(o, problem);
      if (d >= problem.eps_prime) continue;
      const double e = problem.eps_prime - d;
      out.f += lambda * e * e;
      if (dist > kTinyDistance) {
        const Vec2 dir = diff / dist;
        out.H.block<2, 2>(xcol(i), xcol(i)) += lambda * (dir * dir.transpose());
        out.g.segment<2>(xcol(i)) += -lambda * e * dir;
      }
    }
  }
}

}  // namespace

void normal_equations(const Trajectory& traj, const TrajOptProblem& problem, double lambda,
                      Eigen::MatrixXd& h, Eigen::VectorXd& g, double& f) {
  if (!traj.finite()) throw std::invalid_argument("non-finite trajectory");
  const Eigen::Matrix<double, 4, 8> B = segment_jacobian(traj.dt);
  const Eigen::Matrix<double, 8, 4> BK = B.transpose() * problem.smooth_metric;
  const Eigen::Matrix<double, 8, 8> BKB = BK * B;
  NormalEqs eqs;
  assemble_normal_eqs(traj, problem, lambda, BKB, BK, eqs);
  h = std::move(eqs.H);
  g = std::move(eqs.g);
  f = eqs.f;
}

InnerResult solve_inner(const TrajOptProblem& problem, double lambda, const Trajectory& init) {
  if (!init.finite()) throw std::invalid_argument("non-finite trajectory");
  if (init.n() < 2 || init.n() != static_cast<int>(init.v.size()))
    throw std::invalid_argument("trajectory needs N >= 2 waypoints with velocities");

  const Eigen::Matrix4d S = metric_sqrt(problem.smooth_metric);  // validates K
  (void)S;
  const Eigen::Matrix<double, 4, 8> B = segment_jacobian(init.dt);
  const Eigen::Matrix<double, 8, 4> BK = B.transpose() * problem.smooth_metric;
  const Eigen::Matrix<double, 8, 8> BKB = BK * B;

  Trajectory cur = init;
  NormalEqs eqs, cand_eqs;
  assemble_normal_eqs(cur, problem, lambda, BKB, BK, eqs);

  const int dim = 4 * cur.n();
  double mu = 1e-3 * std::max(eqs.H.diagonal().maxCoeff(), 1e-6);
  double nu = 2.0;

  InnerResult result;
  Eigen::VectorXd z = pack_decision(cur);
  Eigen::MatrixXd damped(dim, dim);

  while (result.iterations < problem.max_inner_iters) {
    ++result.iterations;

    damped = eqs.H;
    damped.diagonal().array() += mu;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
    Eigen::VectorXd step;
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      step = ldlt.solve(-eqs.g);
      ok = step.allFinite();
    }
    if (!ok) {  // singular damped system: raise damping and retry
      mu *= nu;
      nu *= 2.0;
      if (mu > kDampingCap) { result.stalled = true; break; }
      continue;
    }

    if (step.norm() < kStepNormTol) break;

    const Eigen::VectorXd z_new = z + step;
    const Trajectory cand = unpack_decision(z_new, cur.dt);
    assemble_normal_eqs(cand, problem, lambda, BKB, BK, cand_eqs);

    const double predicted = step.dot(mu * step - eqs.g);  // predicted drop of |r|^2
    const double actual = eqs.f - cand_eqs.f;
    if (predicted > 0.0 && actual > 0.0) {
      const double rho = actual / predicted;
      z = z_new;
      cur = cand;
      std::swap(eqs, cand_eqs);
      const double shrink = 1.0 - std::pow(2.0 * rho - 1.0, 3);
      mu = std::max(mu * std::max(1.0 / 3.0, shrink), 1e-12);
      nu = 2.0;
    } else {
      mu *= nu;
      nu *= 2.0;
      if (mu > kDampingCap) { result.stalled = true; break; }
    }
  }

  result.trajectory = std::move(cur);
  result.cost = eqs.f;
  return result;
}

double dense_clearance(const Trajectory& traj, const ObstacleSet& obs, double resolution) {
  if (resolution <= 0.0) throw std::invalid_argument("resolution must be positive");
  if (traj.x.empty()) return kInfinity;
  double best = world::min_clearance(traj.x.front(), obs);
  for (size_t i = 0; i + 1 < traj.x.size(); ++i) {
    const Vec2 a = traj.x[i];
    const Vec2 b = traj.x[i + 1];
    const double len = (b - a).norm();
    const int steps = std::max(1, static_cast<int>(std::ceil(len / resolution)));
    for (int s = 1; s <= steps; ++s) {
      const Vec2 p = a + (b - a) * (static_cast<double>(s) / steps);
      best = std::min(best, world::min_clearance(p, obs));
    }
  }
  return best;
}

Trajectory straight_line_init(const Vec2& start, const Vec2& subgoal, int n, double dt) {
  Trajectory t;
  t.dt = dt;
  t.x.resize(n);
  t.v.resize(n);
  const Vec2 vel = (subgoal - start) / ((n - 1) * dt);
  for (int i = 0; i < n; ++i) {
    t.x[i] = start + (subgoal - start) * (static_cast<double>(i) / (n - 1));
    t.v[i] = vel;
  }
  return t;
}

namespace {

// Uniform-arclength resampling of a polyline into an n-waypoint trajectory
// with finite-difference velocities.
Trajectory polyline_init(const std::vector<Vec2>& path, int n, double dt) {
  std::vector<double> cum(path.size(), 0.0);
  for (size_t i = 1; i < path.size(); ++i) cum[i] = cum[i - 1] + (path[i] - path[i - 1]).norm();
  const double total = cum.back();
  Trajectory t;
  t.dt = dt;
  t.x.resize(n);
  t.v.resize(n);
  size_t seg = 0;
  for (int i = 0; i < n; ++i) {
    const double s = total * static_cast<double>(i) / (n - 1);
    while (seg + 1 < path.size() - 1 && cum[seg + 1] < s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double frac = len > 1e-12 ? (s - cum[seg]) / len : 0.0;
    t.x[i] = path[seg] + frac * (path[seg + 1] - path[seg]);
  }
  for (int i = 0; i + 1 < n; ++i) t.v[i] = (t.x[i + 1] - t.x[i]) / dt;
  t.v[n - 1] = n > 1 ? t.v[n - 2] : Vec2::Zero();
  return t;
}

}  // namespace

Trajectory default_init(const Vec2& start, const Vec2& subgoal, int n, double dt) {
  Trajectory t = straight_line_init(start, subgoal, n, dt);
  const Vec2 dir = subgoal - start;
  const double len = dir.norm();
  if (len > 1e-9) {
    const Vec2 normal(-dir.y() / len, dir.x() / len);
    for (int i = 0; i < n; ++i)
      t.x[i] += normal * (0.01 * std::sin(M_PI * static_cast<double>(i) / (n - 1)));
  }
  return t;
}

SolveReport solve(const TrajOptProblem& problem, PlanMode mode,
                  const std::optional<Trajectory>& warm_start) {
  TrajOptProblem p = problem;
  p.subgoal = p.bounds.clamp(p.subgoal);
  if (p.n_waypoints < 2) throw std::invalid_argument("n_waypoints must be >= 2");
  if (p.eps_prime <= 0.0) throw std::invalid_argument("eps_prime must be positive");

  Trajectory init;
  if (warm_start && warm_start->n() == p.n_waypoints &&
      static_cast<int>(warm_start->v.size()) == p.n_waypoints && warm_start->finite()) {
    init = *warm_start;
    init.dt = p.dt;
  } else {
    init = default_init(p.start, p.subgoal, p.n_waypoints, p.dt);
  }

  SolveReport report;
  if (mode == PlanMode::training) {
    InnerResult res = solve_inner(p, p.lambda_init, init);
    report.trajectory = std::move(res.trajectory);
    report.inner_iterations_used = res.iterations;
    report.final_lambda = p.lambda_init;
    report.min_clearance_dense =
        dense_clearance(report.trajectory, p.obstacles, kDenseResolution);
    report.status = report.min_clearance_dense >= p.eps_prime - p.clearance_tol
                        ? SolveStatus::safe
                        : SolveStatus::best_effort_unsafe;
    return report;
  }

  // Inference: grow lambda until the dense check passes; start straight at the
  // cap when the robot is already inside the margin, to escape quickly.
  auto run_outer = [&p, &report](const Trajectory& start_traj) {
    SolveReport r;
    double lambda = world::min_clearance(p.start, p.obstacles) < p.eps_prime ? p.lambda_max
                                                                             : p.lambda_init;
    Trajectory cur = start_traj;
    r.status = SolveStatus::best_effort_unsafe;
    for (int outer = 0; outer < p.max_outer_iters; ++outer) {
      InnerResult res = solve_inner(p, lambda, cur);
      cur = std::move(res.trajectory);
      r.inner_iterations_used += res.iterations;
      r.min_clearance_dense = dense_clearance(cur, p.obstacles, kDenseResolution);
      if (r.min_clearance_dense >= p.eps_prime - p.clearance_tol) {
        r.status = SolveStatus::safe;
        break;
      }
      if (lambda >= p.lambda_max) {
        r.status = SolveStatus::at_lambda_max;
        break;
      }
      lambda = std::min(lambda * p.lambda_growth, p.lambda_max);
    }
    r.trajectory = std::move(cur);
    r.final_lambda = lambda;
    return r;
  };

  report = run_outer(init);
  if (report.status == SolveStatus::safe) return report;

  // The local solve got stuck; reseed it from a coarse grid shortest path.
  int iterations_spent = report.inner_iterations_used;
  for (double clearance : {p.eps_prime, 0.75 * p.eps_prime}) {
    const auto path = world::grid_shortest_path(p.start, p.subgoal, p.obstacles, p.bounds,
                                                clearance, 0.05);
    if (!path) continue;
    SolveReport retry = run_outer(polyline_init(*path, p.n_waypoints, p.dt));
    iterations_spent += retry.inner_iterations_used;
    if (retry.status == SolveStatus::safe ||
        retry.min_clearance_dense > report.min_clearance_dense) {
      report = std::move(retry);
    }
    if (report.status == SolveStatus::safe) break;
  }
  report.inner_iterations_used = iterations_spent;
  return report;
}

std::string serialize_trace(const SolveReport& report) {
  std::string out = "plan ";
  out += format_double(report.final_lambda);
  out += ' ';
  out += to_string(report.status);
  out += ' ';
  out += format_double(report.min_clearance_dense);
  out += ' ';
  out += format_double(report.trajectory.dt);
  out += '\n';
  for (int i = 0; i < report.trajectory.n(); ++i) {
    out += std::to_string(i);
    out += ' ';
    out += format_double(report.trajectory.x[i].x());
    out += ' ';
    out += format_double(report.trajectory.x[i].y());
    out += ' ';
    out += format_double(report.trajectory.v[i].x());
    out += ' ';
    out += format_double(report.trajectory.v[i].y());
    out += '\n';
  }
  return out;
}

SolveReport parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string tag, status;
  SolveReport report;
  if (!(in >> tag >> report.final_lambda >> status >> report.min_clearance_dense >>
        report.trajectory.dt) ||
      tag != "plan")
    throw std::invalid_argument("malformed trajectory trace header");
  if (status == "safe") report.status = SolveStatus::safe;
  else if (status == "best_effort_unsafe") report.status = SolveStatus::best_effort_unsafe;
  else if (status == "at_lambda_max") report.status = SolveStatus::at_lambda_max;
  else throw std::invalid_argument("unknown trace status: " + status);

  int idx;
  double x, y, vx, vy;
  while (in >> idx >> x >> y >> vx >> vy) {
    report.trajectory.x.emplace_back(x, y);
    report.trajectory.v.emplace_back(vx, vy);
  }
  return report;
}

}  // namespace safepush::trajopt
