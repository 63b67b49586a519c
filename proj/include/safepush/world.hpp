#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "safepush/common.hpp"

namespace safepush::world {

struct Circle {
  Vec2 center{0.0, 0.0};
  double radius = 0.0;  // > 0
};

/// Full arena description: virtual hazards (cost regions), physical pillars,
/// the pushable box, the goal region, arena bounds and the robot start.
struct WorldLayout {
  std::vector<Circle> hazards;
  std::vector<Circle> pillars;
  Circle box;
  Circle goal;
  Rect bounds;
  double robot_radius = 0.1;
  Vec2 robot_start{0.0, 0.0};
};

struct Obstacle {
  Vec2 center{0.0, 0.0};
  double effective_radius = 0.0;
};

/// Obstacles as the planner sees them. Hazards keep their own radius (cost
/// triggers on the robot root entering the region); pillars are inflated by
/// the robot body radius.
struct ObstacleSet {
  std::vector<Obstacle> obstacles;

  bool empty() const { return obstacles.empty(); }
  size_t size() const { return obstacles.size(); }
};

ObstacleSet planner_obstacles(const WorldLayout& layout);

/// Smallest surface clearance of point p over the set; negative inside,
/// +infinity for an empty set.
double min_clearance(const Vec2& p, const ObstacleSet& obs);

enum class Difficulty { easy, level1, level2 };

const char* to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& s);

/// Tunable layout-generation knobs. `sample_layout` fills them from the
/// difficulty level; tests may drive them directly.
struct LayoutParams {
  int n_hazards = 1;
  int n_pillars = 1;
  double hazard_radius = 0.2;
  double pillar_radius = 0.2;
  double box_radius = 0.2;
  double goal_radius = 0.3;
  double robot_radius = 0.1;
  Rect bounds;
  double separation = 0.25;        // extra gap between object surfaces
  double pillar_wall_inset = 0.5;  // pillar surface distance from bounds
  double pillar_pillar_gap = 0.5;  // so the box can never be wedged
  double start_clearance = 0.5;    // robot start clearance to planner obstacles
  double corridor_clearance = 0.3; // free-space definition for connectivity
  double grid_cell = 0.05;
  int max_rounds = 10000;
};

LayoutParams layout_params_for(Difficulty d);

struct LayoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic rejection sampler; throws LayoutError("placement-exhausted")
/// when no admissible layout is found within params.max_rounds.
WorldLayout sample_layout(uint64_t seed, Difficulty difficulty);
WorldLayout sample_layout(uint64_t seed, const LayoutParams& params);

/// Re-checks every WorldLayout invariant from first principles. Returns false
/// and fills `why` (if given) on the first violation.
bool validate_layout(const WorldLayout& layout, std::string* why = nullptr);

/// Occupancy-grid reachability: cells whose center has clearance >= `clearance`
/// are free; connectivity is 8-neighbor. Returns true iff both endpoints lie in
/// free cells of the same component.
bool path_feasible(const Vec2& from, const Vec2& to, const ObstacleSet& obs,
                   const Rect& bounds, double clearance, double cell = 0.05);

/// True iff the free space (same definition as path_feasible) forms a single
/// 8-connected component.
bool free_space_connected(const ObstacleSet& obs, const Rect& bounds, double clearance,
                          double cell = 0.05);

/// Shortest grid path (Dijkstra, 8-connected, diagonal cost sqrt(2)) through
/// the free space, as a polyline from `from` to `to` via cell centers. Blocked
/// endpoints snap to the nearest free cell. Empty when no path exists.
std::optional<std::vector<Vec2>> grid_shortest_path(const Vec2& from, const Vec2& to,
                                                    const ObstacleSet& obs, const Rect& bounds,
                                                    double clearance, double cell = 0.05);

/// Line-delimited text form, one object per line: kind, x, y, radius.
std::string serialize_layout(const WorldLayout& layout);
WorldLayout parse_layout(const std::string& text);

}  // namespace safepush::world
