#include "safepush/world.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <deque>
#include <queue>
#include <sstream>

namespace safepush::world {

ObstacleSet planner_obstacles(const WorldLayout& layout) {
  ObstacleSet out;
  out.obstacles.reserve(layout.hazards.size() + layout.pillars.size());
  for (const Circle& h : layout.hazards) out.obstacles.push_back({h.center, h.radius});
  for (const Circle& p : layout.pillars)
    out.obstacles.push_back({p.center, p.radius + layout.robot_radius});
  return out;
}

double min_clearance(const Vec2& p, const ObstacleSet& obs) {
  double best = kInfinity;
  for (const Obstacle& o : obs.obstacles)
    best = std::min(best, (p - o.center).norm() - o.effective_radius);
  return best;
}

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::level1: return "level1";
    case Difficulty::level2: return "level2";
  }
  return "easy";
}

Difficulty difficulty_from_string(const std::string& s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "level1") return Difficulty::level1;
  if (s == "level2") return Difficulty::level2;
  throw std::invalid_argument("unknown difficulty: " + s);
}

LayoutParams layout_params_for(Difficulty d) {
  LayoutParams p;
  switch (d) {
    case Difficulty::easy: p.n_hazards = 1; p.n_pillars = 1; break;
    case Difficulty::level1: p.n_hazards = 3; p.n_pillars = 1; break;
    case Difficulty::level2: p.n_hazards = 6; p.n_pillars = 2; break;
  }
  return p;
}

namespace {

// Occupancy grid over `bounds` at cell size `cell`; a cell is free when its
// center keeps at least `clearance` surface distance from every obstacle.
struct Grid {
  int nx = 0, ny = 0;
  double cell = 0.05;
  Vec2 origin;
  std::vector<uint8_t> free_cells;

  Grid(const ObstacleSet& obs, const Rect& bounds, double clearance, double cell_size)
      : cell(cell_size), origin(bounds.lo) {
    nx = std::max(1, static_cast<int>(std::floor(bounds.extent().x() / cell)));
    ny = std::max(1, static_cast<int>(std::floor(bounds.extent().y() / cell)));
    free_cells.assign(static_cast<size_t>(nx) * ny, 0);
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const Vec2 c = origin + Vec2((ix + 0.5) * cell, (iy + 0.5) * cell);
        free_cells[idx(ix, iy)] = min_clearance(c, obs) >= clearance ? 1 : 0;
      }
    }
  }

  size_t idx(int ix, int iy) const { return static_cast<size_t>(iy) * nx + ix; }

  bool cell_of(const Vec2& p, int& ix, int& iy) const {
    ix = static_cast<int>(std::floor((p.x() - origin.x()) / cell));
    iy = static_cast<int>(std::floor((p.y() - origin.y()) / cell));
    return ix >= 0 && iy >= 0 && ix < nx && iy < ny;
  }

  // 8-connected flood fill from (sx, sy); marks visited cells with 2.
  void flood(int sx, int sy) {
    if (!free_cells[idx(sx, sy)]) return;
    std::deque<std::pair<int, int>> queue{{sx, sy}};
    free_cells[idx(sx, sy)] = 2;
    while (!queue.empty()) {
      auto [x, y] = queue.front();
      queue.pop_front();
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x2 = x + dx, y2 = y + dy;
          if (x2 < 0 || y2 < 0 || x2 >= nx || y2 >= ny) continue;
          if (free_cells[idx(x2, y2)] == 1) {
            free_cells[idx(x2, y2)] = 2;
            queue.emplace_back(x2, y2);
          }
        }
      }
    }
  }

  bool any_unreached_free() const {
    return std::any_of(free_cells.begin(), free_cells.end(),
                       [](uint8_t v) { return v == 1; });
  }
};

double surface_gap(const Circle& a, const Circle& b) {
  return (a.center - b.center).norm() - a.radius - b.radius;
}

}  // namespace

bool path_feasible(const Vec2& from, const Vec2& to, const ObstacleSet& obs,
                   const Rect& bounds, double clearance, double cell) {
  Grid grid(obs, bounds, clearance, cell);
  int ax, ay, bx, by;
  if (!grid.cell_of(from, ax, ay) || !grid.cell_of(to, bx, by)) return false;
  if (!grid.free_cells[grid.idx(ax, ay)] || !grid.free_cells[grid.idx(bx, by)]) return false;
  grid.flood(ax, ay);
  return grid.free_cells[grid.idx(bx, by)] == 2;
}

bool free_space_connected(const ObstacleSet& obs, const Rect& bounds, double clearance,
                          double cell) {
  Grid grid(obs, bounds, clearance, cell);
  auto it = std::find(grid.free_cells.begin(), grid.free_cells.end(), uint8_t{1});
  if (it == grid.free_cells.end()) return false;  // no free space at all
  const size_t first = static_cast<size_t>(it - grid.free_cells.begin());
  grid.flood(static_cast<int>(first % grid.nx), static_cast<int>(first / grid.nx));
  return !grid.any_unreached_free();
}

std::optional<std::vector<Vec2>> grid_shortest_path(const Vec2& from, const Vec2& to,
                                                    const ObstacleSet& obs, const Rect& bounds,
                                                    double clearance, double cell) {
  Grid grid(obs, bounds, clearance, cell);
  int ax, ay, bx, by;
  if (!grid.cell_of(from, ax, ay) || !grid.cell_of(to, bx, by)) return std::nullopt;

  // snap a blocked endpoint to the nearest free cell
  auto snap = [&](int& cx, int& cy) -> bool {
    if (grid.free_cells[grid.idx(cx, cy)]) return true;
    int best_x = -1, best_y = -1;
    double best_d = kInfinity;
    for (int y = 0; y < grid.ny; ++y)
      for (int x = 0; x < grid.nx; ++x) {
        if (!grid.free_cells[grid.idx(x, y)]) continue;
        const double d = std::hypot(x - cx, y - cy);
        if (d < best_d) { best_d = d; best_x = x; best_y = y; }
      }
    if (best_x < 0) return false;
    cx = best_x;
    cy = best_y;
    return true;
  };
  if (!snap(ax, ay) || !snap(bx, by)) return std::nullopt;

  const size_t cells = grid.free_cells.size();
  std::vector<double> dist(cells, kInfinity);
  std::vector<int32_t> prev(cells, -1);
  using Node = std::pair<double, int32_t>;
  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> queue;
  const int32_t src = static_cast<int32_t>(grid.idx(ax, ay));
  const int32_t dst = static_cast<int32_t>(grid.idx(bx, by));
  dist[src] = 0.0;
  queue.emplace(0.0, src);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    if (u == dst) break;
    const int ux = u % grid.nx, uy = u / grid.nx;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int vx = ux + dx, vy = uy + dy;
        if (vx < 0 || vy < 0 || vx >= grid.nx || vy >= grid.ny) continue;
        const int32_t v = static_cast<int32_t>(grid.idx(vx, vy));
        if (!grid.free_cells[v]) continue;
        const double nd = d + (dx != 0 && dy != 0 ? M_SQRT2 : 1.0);
        if (nd < dist[v]) {
          dist[v] = nd;
          prev[v] = u;
          queue.emplace(nd, v);
        }
      }
  }
  if (dist[dst] == kInfinity) return std::nullopt;

  std::vector<Vec2> path;
  for (int32_t u = dst; u != -1; u = prev[u]) {
    const int ux = u % grid.nx, uy = u / grid.nx;
    path.push_back(grid.origin + Vec2((ux + 0.5) * grid.cell, (uy + 0.5) * grid.cell));
  }
  std::reverse(path.begin(), path.end());
  path.insert(path.begin(), from);
  path.push_back(to);
  return path;
}

WorldLayout sample_layout(uint64_t seed, Difficulty difficulty) {
  return sample_layout(seed, layout_params_for(difficulty));
}

WorldLayout sample_layout(uint64_t seed, const LayoutParams& params) {
  Rng rng(seed_stream(seed, 0xb0c5ULL + static_cast<uint64_t>(params.n_hazards) * 31 +
                                static_cast<uint64_t>(params.n_pillars)));
  const Rect& bounds = params.bounds;

  for (int round = 0; round < params.max_rounds; ++round) {
    WorldLayout layout;
    layout.bounds = bounds;
    layout.robot_radius = params.robot_radius;

    std::vector<Circle> placed;
    auto try_place = [&](double radius, double wall_inset, double pair_gap) -> bool {
      for (int attempt = 0; attempt < 100; ++attempt) {
        Circle c{rng.uniform_in_rect(bounds, radius + wall_inset), radius};
        bool ok = true;
        for (const Circle& other : placed) {
          if (surface_gap(c, other) < pair_gap) { ok = false; break; }
        }
        if (ok) { placed.push_back(c); return true; }
      }
      return false;
    };

    bool ok = try_place(params.goal_radius, 0.1, params.separation) &&
              try_place(params.box_radius, 0.1, params.separation);
    for (int i = 0; ok && i < params.n_hazards; ++i)
      ok = try_place(params.hazard_radius, 0.1, params.separation);
    for (int i = 0; ok && i < params.n_pillars; ++i)
      ok = try_place(params.pillar_radius, params.pillar_wall_inset,
                     std::max(params.separation, params.pillar_pillar_gap));
    if (!ok) continue;

    layout.goal = placed[0];
    layout.box = placed[1];
    layout.hazards.assign(placed.begin() + 2, placed.begin() + 2 + params.n_hazards);
    layout.pillars.assign(placed.begin() + 2 + params.n_hazards, placed.end());

    const ObstacleSet obs = planner_obstacles(layout);
    bool start_ok = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Vec2 s = rng.uniform_in_rect(bounds, params.robot_radius + 0.1);
      if (min_clearance(s, obs) < params.start_clearance) continue;
      if ((s - layout.box.center).norm() <
          params.robot_radius + layout.box.radius + 0.05)
        continue;
      layout.robot_start = s;
      start_ok = true;
      break;
    }
    if (!start_ok) continue;

    // Free space must be one component containing start, box and goal, so a
    // push path exists between any two free points.
    Grid grid(obs, bounds, params.corridor_clearance, params.grid_cell);
    int sx, sy;
    if (!grid.cell_of(layout.robot_start, sx, sy) || !grid.free_cells[grid.idx(sx, sy)])
      continue;
    grid.flood(sx, sy);
    if (grid.any_unreached_free()) continue;
    int bx, by, gx, gy;
    if (!grid.cell_of(layout.box.center, bx, by) || grid.free_cells[grid.idx(bx, by)] != 2)
      continue;
    if (!grid.cell_of(layout.goal.center, gx, gy) || grid.free_cells[grid.idx(gx, gy)] != 2)
      continue;

    return layout;
  }
  throw LayoutError("placement-exhausted");
}

bool validate_layout(const WorldLayout& layout, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  auto in_bounds = [&](const Circle& c) { return layout.bounds.contains(c.center); };

  for (const Circle& h : layout.hazards) {
    if (h.radius <= 0.0) return fail("hazard radius must be positive");
    if (!in_bounds(h)) return fail("hazard center outside bounds");
  }
  for (const Circle& p : layout.pillars) {
    if (p.radius <= 0.0) return fail("pillar radius must be positive");
    if (!in_bounds(p)) return fail("pillar center outside bounds");
  }
  if (layout.box.radius <= 0.0 || layout.goal.radius <= 0.0)
    return fail("box/goal radius must be positive");
  if (!in_bounds(layout.box)) return fail("box center outside bounds");
  if (!in_bounds(layout.goal)) return fail("goal center outside bounds");
  if (!layout.bounds.contains(layout.robot_start)) return fail("robot start outside bounds");
  if (layout.robot_radius <= 0.0) return fail("robot radius must be positive");

  for (const Circle& h : layout.hazards) {
    if ((layout.robot_start - h.center).norm() - h.radius <= 0.0)
      return fail("robot start inside a hazard");
  }
  for (const Circle& p : layout.pillars) {
    if ((layout.robot_start - p.center).norm() < p.radius + layout.robot_radius)
      return fail("robot start overlaps a pillar");
    if ((layout.box.center - p.center).norm() < p.radius + layout.box.radius)
      return fail("box overlaps a pillar");
    if ((layout.goal.center - p.center).norm() < p.radius + layout.goal.radius)
      return fail("goal overlaps a pillar");
  }
  if ((layout.robot_start - layout.box.center).norm() <
      layout.robot_radius + layout.box.radius)
    return fail("robot start overlaps the box");
  return true;
}

std::string serialize_layout(const WorldLayout& layout) {
  std::string out;
  auto line = [&out](const char* kind, const Vec2& p, double r) {
    out += kind;
    out += ' ';
    out += format_double(p.x());
    out += ' ';
    out += format_double(p.y());
    out += ' ';
    out += format_double(r);
    out += '\n';
  };
  line("bounds_min", layout.bounds.lo, 0.0);
  line("bounds_max", layout.bounds.hi, 0.0);
  line("robot", layout.robot_start, layout.robot_radius);
  for (const Circle& h : layout.hazards) line("hazard", h.center, h.radius);
  for (const Circle& p : layout.pillars) line("pillar", p.center, p.radius);
  line("box", layout.box.center, layout.box.radius);
  line("goal", layout.goal.center, layout.goal.radius);
  return out;
}

WorldLayout parse_layout(const std::string& text) {
  WorldLayout layout;
  std::istringstream in(text);
  std::string kind;
  double x, y, r;
  bool saw_min = false, saw_max = false, saw_robot = false;
  while (in >> kind >> x >> y >> r) {
    if (kind == "bounds_min") { layout.bounds.lo = Vec2(x, y); saw_min = true; }
    else if (kind == "bounds_max") { layout.bounds.hi = Vec2(x, y); saw_max = true; }
    else if (kind == "robot") { layout.robot_start = Vec2(x, y); layout.robot_radius = r; saw_robot = true; }
    else if (kind == "hazard") layout.hazards.push_back({Vec2(x, y), r});
    else if (kind == "pillar") layout.pillars.push_back({Vec2(x, y), r});
    else if (kind == "box") layout.box = {Vec2(x, y), r};
    else if (kind == "goal") layout.goal = {Vec2(x, y), r};
    else throw std::invalid_argument("unknown layout record: " + kind);
  }
  if (!saw_min || !saw_max || !saw_robot)
    throw std::invalid_argument("layout text missing bounds or robot record");
  return layout;
}

}  // namespace safepush::world
