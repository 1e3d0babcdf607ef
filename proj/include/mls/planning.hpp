#pragma once

#include <algorithm>
#include <atomic>
#include <limits>
#include <queue>
#include <tuple>

#include "mls/core.hpp"
#include "mls/occupancy.hpp"

// Collision-free path generation against an immutable occupancy snapshot:
// global RRT*, budget-limited local-window A*, plus path validation and
// shortcutting. The vehicle is treated as a sphere of the query's
// clearance radius.

namespace mls {

struct PlanQuery {
  Vec3 start;
  Vec3 goal;
  double clearance_radius = 0.6;
  Vec3 bounds_min;
  Vec3 bounds_max;
  bool unknown_is_obstacle = false;
};

struct Path {
  std::vector<Vec3> waypoints;  // first = start, last = goal
  double cost = 0.0;            // total Euclidean length

  static Path from_waypoints(std::vector<Vec3> wps) {
    Path p;
    p.waypoints = std::move(wps);
    p.cost = 0.0;
    for (size_t i = 1; i < p.waypoints.size(); ++i)
      p.cost += distance(p.waypoints[i - 1], p.waypoints[i]);
    return p;
  }
};

struct RrtParams {
  int max_iterations = 5000;
  double step_length = 2.0;  // eta
  double goal_bias = 0.1;
  double gamma = 30.0;  // rewiring radius constant
  double goal_tolerance = 1.0;
  int checkpoint_interval = 1000;
};

struct AstarParams {
  double grid_resolution = 0.5;
  int64_t expansion_budget = 50000;
  int neighborhood = 26;  // 6 or 26 connectivity
  double local_window = 15.0;  // half-extent of the planning box
};

enum class PlanStatus { Found, NoPath, BudgetExhausted, Cancelled };

struct PlanResult {
  PlanStatus status = PlanStatus::NoPath;
  Path path;  // populated iff status == Found
  int64_t iterations = 0;
  int64_t nodes = 0;
  // best goal-connected cost at each checkpoint (infinity until connected)
  std::vector<double> checkpoint_costs;
};

inline bool point_collision_free(const OccupancyMap& map, const Vec3& p,
                                 const PlanQuery& q) {
  return map.collision_free(p, q.clearance_radius, q.unknown_is_obstacle);
}

// Densified sphere sweep along [a, b]; both endpoints included.
inline bool segment_collision_free(const OccupancyMap& map, const Vec3& a,
                                   const Vec3& b, const PlanQuery& q,
                                   double step) {
  const double len = distance(a, b);
  const int samples = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= samples; ++i) {
    const Vec3 p = a + (b - a) * (static_cast<double>(i) / samples);
    if (!point_collision_free(map, p, q)) return false;
  }
  return true;
}

struct PathViolation {
  Vec3 point;
  size_t segment = 0;  // index of the offending waypoint segment
};

// Walks densified samples along the path; returns the first sample that
// fails the clearance check, or nullopt when the path is clean.
inline std::optional<PathViolation> validate_path(
    const Path& path, const OccupancyMap& map, double clearance, double step,
    bool unknown_is_obstacle = false) {
  if (step <= 0.0) throw std::invalid_argument("validate_path: step <= 0");
  if (path.waypoints.empty()) return std::nullopt;
  if (!map.collision_free(path.waypoints.front(), clearance,
                          unknown_is_obstacle))
    return PathViolation{path.waypoints.front(), 0};
  for (size_t s = 0; s + 1 < path.waypoints.size(); ++s) {
    const Vec3& a = path.waypoints[s];
    const Vec3& b = path.waypoints[s + 1];
    const double len = distance(a, b);
    const int samples = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 1; i <= samples; ++i) {
      const Vec3 p = a + (b - a) * (static_cast<double>(i) / samples);
      if (!map.collision_free(p, clearance, unknown_is_obstacle))
        return PathViolation{p, s};
    }
  }
  return std::nullopt;
}

// Randomized segment skipping followed by a greedy pass. The output is
// never longer than the input and stays collision-free on the snapshot.
inline Path shortcut(const Path& path, const OccupancyMap& map,
                     double clearance, Rng& rng,
                     bool unknown_is_obstacle = false, double step = -1.0) {
  if (step <= 0.0) step = map.resolution() / 2.0;
  PlanQuery q;
  q.clearance_radius = clearance;
  q.unknown_is_obstacle = unknown_is_obstacle;
  std::vector<Vec3> wps = path.waypoints;
  if (wps.size() <= 2) return Path::from_waypoints(std::move(wps));

  const int trials = 30;
  for (int t = 0; t < trials && wps.size() > 2; ++t) {
    const size_t i =
        static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(wps.size()) - 3));
    const size_t j = static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(i) + 2,
                        static_cast<int64_t>(wps.size()) - 1));
    if (segment_collision_free(map, wps[i], wps[j], q, step))
      wps.erase(wps.begin() + static_cast<int64_t>(i) + 1,
                wps.begin() + static_cast<int64_t>(j));
  }

  std::vector<Vec3> out;
  out.push_back(wps.front());
  size_t i = 0;
  while (i + 1 < wps.size()) {
    size_t best = i + 1;
    for (size_t j = wps.size() - 1; j > i + 1; --j) {
      if (segment_collision_free(map, wps[i], wps[j], q, step)) {
        best = j;
        break;
      }
    }
    out.push_back(wps[best]);
    i = best;
  }
  return Path::from_waypoints(std::move(out));
}

namespace detail {

struct RrtNode {
  Vec3 pos;
  int parent = -1;
  double cost = 0.0;
  std::vector<int> children;
};

inline void propagate_cost(std::vector<RrtNode>& nodes, int root) {
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    for (int c : nodes[static_cast<size_t>(idx)].children) {
      nodes[static_cast<size_t>(c)].cost =
          nodes[static_cast<size_t>(idx)].cost +
          distance(nodes[static_cast<size_t>(idx)].pos,
                   nodes[static_cast<size_t>(c)].pos);
      stack.push_back(c);
    }
  }
}

}  // namespace detail

// Standard RRT* with goal bias, choose-parent and rewiring inside radius
// r(n) = min(gamma * (ln n / n)^(1/3), eta), followed by shortcutting.
// Deterministic for a fixed rng stream. The optional cancel flag is
// polled every 256 iterations.
inline PlanResult plan_rrt_star(const PlanQuery& query, const OccupancyMap& map,
                                const RrtParams& params, Rng& rng,
                                const std::atomic<bool>* cancel = nullptr) {
  PlanResult result;
  const double step = map.resolution() / 2.0;
  if (!point_collision_free(map, query.start, query)) {
    result.status = PlanStatus::NoPath;
    return result;
  }

  std::vector<detail::RrtNode> nodes;
  nodes.push_back({query.start, -1, 0.0, {}});

  // nodes with a verified collision-free segment to the exact goal
  std::vector<int> goal_connected;
  const auto best_goal_cost = [&]() {
    double best = std::numeric_limits<double>::infinity();
    for (int idx : goal_connected) {
      const auto& n = nodes[static_cast<size_t>(idx)];
      best = std::min(best, n.cost + distance(n.pos, query.goal));
    }
    return best;
  };

  const Vec3 span = query.bounds_max - query.bounds_min;
  int iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    if (cancel && (iter & 255) == 0 && cancel->load(std::memory_order_relaxed)) {
      result.status = PlanStatus::Cancelled;
      result.iterations = iter;
      result.nodes = static_cast<int64_t>(nodes.size());
      return result;
    }
    if (params.checkpoint_interval > 0 && iter > 0 &&
        iter % params.checkpoint_interval == 0)
      result.checkpoint_costs.push_back(best_goal_cost());

    Vec3 sample;
    if (rng.next_unit() < params.goal_bias) {
      sample = query.goal;
    } else {
      sample = {query.bounds_min.x + span.x * rng.next_unit(),
                query.bounds_min.y + span.y * rng.next_unit(),
                query.bounds_min.z + span.z * rng.next_unit()};
    }

    int nearest = 0;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i].pos - sample).norm_sq();
      if (d < nearest_d) {
        nearest_d = d;
        nearest = static_cast<int>(i);
      }
    }

    const Vec3& from = nodes[static_cast<size_t>(nearest)].pos;
    const double dist_to_sample = distance(from, sample);
    if (dist_to_sample < 1e-9) continue;
    const Vec3 new_pos =
        dist_to_sample <= params.step_length
            ? sample
            : from + (sample - from) * (params.step_length / dist_to_sample);

    if (!point_collision_free(map, new_pos, query)) continue;
    if (!segment_collision_free(map, from, new_pos, query, step)) continue;

    const double n = static_cast<double>(nodes.size());
    const double radius =
        std::min(params.gamma * std::cbrt(std::log(n + 1.0) / (n + 1.0)),
                 params.step_length);
    std::vector<int> near;
    for (size_t i = 0; i < nodes.size(); ++i)
      if ((nodes[i].pos - new_pos).norm_sq() <= radius * radius)
        near.push_back(static_cast<int>(i));

    int parent = nearest;
    double best_cost = nodes[static_cast<size_t>(nearest)].cost +
                       distance(from, new_pos);
    for (int idx : near) {
      if (idx == nearest) continue;
      const auto& cand = nodes[static_cast<size_t>(idx)];
      const double c = cand.cost + distance(cand.pos, new_pos);
      if (c + 1e-12 < best_cost &&
          segment_collision_free(map, cand.pos, new_pos, query, step)) {
        parent = idx;
        best_cost = c;
      }
    }

    const int new_idx = static_cast<int>(nodes.size());
    nodes.push_back({new_pos, parent, best_cost, {}});
    nodes[static_cast<size_t>(parent)].children.push_back(new_idx);

    for (int idx : near) {
      auto& cand = nodes[static_cast<size_t>(idx)];
      const double through_new = best_cost + distance(new_pos, cand.pos);
      if (through_new + 1e-12 < cand.cost &&
          segment_collision_free(map, new_pos, cand.pos, query, step)) {
        auto& old_children =
            nodes[static_cast<size_t>(cand.parent)].children;
        old_children.erase(
            std::find(old_children.begin(), old_children.end(), idx));
        cand.parent = new_idx;
        cand.cost = through_new;
        nodes[static_cast<size_t>(new_idx)].children.push_back(idx);
        detail::propagate_cost(nodes, idx);
      }
    }

    const double goal_d = distance(new_pos, query.goal);
    if (goal_d <= params.goal_tolerance &&
        (goal_d < 1e-9 ||
         segment_collision_free(map, new_pos, query.goal, query, step)))
      goal_connected.push_back(new_idx);
  }

  result.iterations = iter;
  result.nodes = static_cast<int64_t>(nodes.size());
  if (params.checkpoint_interval > 0)
    result.checkpoint_costs.push_back(best_goal_cost());

  double best = std::numeric_limits<double>::infinity();
  int best_idx = -1;
  for (int idx : goal_connected) {
    const auto& node = nodes[static_cast<size_t>(idx)];
    const double c = node.cost + distance(node.pos, query.goal);
    if (c < best) {
      best = c;
      best_idx = idx;
    }
  }
  if (best_idx < 0) {
    result.status = PlanStatus::NoPath;
    return result;
  }

  std::vector<Vec3> wps;
  for (int idx = best_idx; idx >= 0; idx = nodes[static_cast<size_t>(idx)].parent)
    wps.push_back(nodes[static_cast<size_t>(idx)].pos);
  std::reverse(wps.begin(), wps.end());
  if (distance(wps.back(), query.goal) > 1e-9) wps.push_back(query.goal);

  result.status = PlanStatus::Found;
  result.path = shortcut(Path::from_waypoints(std::move(wps)), map,
                         query.clearance_radius, rng, query.unknown_is_obstacle,
                         step);
  return result;
}

// Local-window A*: discretizes a box of half-extent local_window around the
// start, plans toward the goal (or, when the goal is outside the window,
// toward the free boundary cell closest to it), and reports budget
// exhaustion as its own status. Fully deterministic; ties broken by
// heuristic then lexicographic cell index.
inline PlanResult plan_astar_local(const PlanQuery& query,
                                   const OccupancyMap& map,
                                   const AstarParams& params) {
  PlanResult result;
  const double res = params.grid_resolution;
  const int n = std::max(1, static_cast<int>(std::floor(params.local_window / res)));
  const int dim = 2 * n + 1;
  const auto idx_of = [&](int x, int y, int z) {
    return (static_cast<size_t>(z) * dim + static_cast<size_t>(y)) * dim +
           static_cast<size_t>(x);
  };
  const auto center_of = [&](int x, int y, int z) {
    return query.start + Vec3{(x - n) * res, (y - n) * res, (z - n) * res};
  };
  const auto in_query_bounds = [&](const Vec3& p) {
    return p.x >= query.bounds_min.x && p.x <= query.bounds_max.x &&
           p.y >= query.bounds_min.y && p.y <= query.bounds_max.y &&
           p.z >= query.bounds_min.z && p.z <= query.bounds_max.z;
  };

  if (!point_collision_free(map, query.start, query)) {
    result.status = PlanStatus::NoPath;
    return result;
  }
  if (distance(query.start, query.goal) < 1e-9) {
    result.status = PlanStatus::Found;
    result.path = Path::from_waypoints({query.start});
    return result;
  }

  // lazily evaluated cell freeness: 0 unseen, 1 free, 2 blocked
  std::vector<uint8_t> free_state(static_cast<size_t>(dim) * dim * dim, 0);
  const auto cell_free = [&](int x, int y, int z) {
    uint8_t& s = free_state[idx_of(x, y, z)];
    if (s == 0) {
      const Vec3 c = center_of(x, y, z);
      s = (in_query_bounds(c) && point_collision_free(map, c, query)) ? 1 : 2;
    }
    return s == 1;
  };

  // pick the target cell
  const Vec3 window_min = query.start - Vec3{n * res, n * res, n * res};
  const Vec3 window_max = query.start + Vec3{n * res, n * res, n * res};
  const bool goal_inside = query.goal.x >= window_min.x &&
                           query.goal.x <= window_max.x &&
                           query.goal.y >= window_min.y &&
                           query.goal.y <= window_max.y &&
                           query.goal.z >= window_min.z &&
                           query.goal.z <= window_max.z;
  int tx, ty, tz;
  if (goal_inside) {
    const Vec3 rel = (query.goal - query.start) / res;
    tx = std::clamp(static_cast<int>(std::lround(rel.x)) + n, 0, dim - 1);
    ty = std::clamp(static_cast<int>(std::lround(rel.y)) + n, 0, dim - 1);
    tz = std::clamp(static_cast<int>(std::lround(rel.z)) + n, 0, dim - 1);
  } else {
    // free boundary cell minimizing straight-line distance to the goal
    std::vector<std::tuple<double, int, int, int>> boundary;
    for (int z = 0; z < dim; ++z)
      for (int y = 0; y < dim; ++y)
        for (int x = 0; x < dim; ++x) {
          if (x != 0 && x != dim - 1 && y != 0 && y != dim - 1 && z != 0 &&
              z != dim - 1)
            continue;
          boundary.emplace_back(distance(center_of(x, y, z), query.goal), x, y,
                                z);
        }
    std::sort(boundary.begin(), boundary.end());
    tx = ty = tz = -1;
    for (const auto& [d, x, y, z] : boundary) {
      if (cell_free(x, y, z)) {
        tx = x;
        ty = y;
        tz = z;
        break;
      }
    }
    if (tx < 0) {
      result.status = PlanStatus::NoPath;
      return result;
    }
  }
  const Vec3 target_center = center_of(tx, ty, tz);

  struct OpenEntry {
    double f;
    double h;
    size_t idx;
    bool operator>(const OpenEntry& o) const {
      return std::tie(f, h, idx) > std::tie(o.f, o.h, o.idx);
    }
  };
  std::priority_queue<OpenEntry, std::vector<OpenEntry>, std::greater<>> open;
  std::vector<double> g(static_cast<size_t>(dim) * dim * dim,
                        std::numeric_limits<double>::infinity());
  std::vector<int32_t> parent(static_cast<size_t>(dim) * dim * dim, -1);
  std::vector<uint8_t> closed(static_cast<size_t>(dim) * dim * dim, 0);

  const auto heuristic = [&](int x, int y, int z) {
    return distance(center_of(x, y, z), target_center);
  };

  const size_t start_idx = idx_of(n, n, n);
  g[start_idx] = 0.0;
  open.push({heuristic(n, n, n), heuristic(n, n, n), start_idx});

  int64_t expansions = 0;
  bool reached = false;
  const size_t target_idx = idx_of(tx, ty, tz);

  while (!open.empty()) {
    const OpenEntry top = open.top();
    open.pop();
    if (closed[top.idx]) continue;
    closed[top.idx] = 1;
    ++expansions;
    if (expansions > params.expansion_budget) {
      result.status = PlanStatus::BudgetExhausted;
      result.iterations = expansions;
      return result;
    }
    if (top.idx == target_idx) {
      reached = true;
      break;
    }
    const int cx = static_cast<int>(top.idx % dim);
    const int cy = static_cast<int>((top.idx / dim) % dim);
    const int cz = static_cast<int>(top.idx / (static_cast<size_t>(dim) * dim));
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
          if (params.neighborhood == 6 && manhattan != 1) continue;
          const int nx = cx + dx, ny = cy + dy, nz = cz + dz;
          if (nx < 0 || nx >= dim || ny < 0 || ny >= dim || nz < 0 || nz >= dim)
            continue;
          const size_t ni = idx_of(nx, ny, nz);
          if (closed[ni]) continue;
          if (!cell_free(nx, ny, nz)) continue;
          const double move = res * std::sqrt(static_cast<double>(manhattan));
          const double ng = g[top.idx] + move;
          if (ng + 1e-12 < g[ni]) {
            g[ni] = ng;
            parent[ni] = static_cast<int32_t>(top.idx);
            const double h = heuristic(nx, ny, nz);
            open.push({ng + h, h, ni});
          }
        }
  }

  result.iterations = expansions;
  result.nodes = expansions;
  if (!reached) {
    result.status = PlanStatus::NoPath;
    return result;
  }

  std::vector<Vec3> wps;
  for (int64_t i = static_cast<int64_t>(target_idx); i >= 0;
       i = parent[static_cast<size_t>(i)]) {
    const int x = static_cast<int>(i % dim);
    const int y = static_cast<int>((i / dim) % dim);
    const int z = static_cast<int>(i / (static_cast<int64_t>(dim) * dim));
    wps.push_back(center_of(x, y, z));
    if (static_cast<size_t>(i) == start_idx) break;
  }
  std::reverse(wps.begin(), wps.end());
  wps.front() = query.start;
  if (goal_inside && distance(wps.back(), query.goal) > 1e-9) {
    PlanQuery q = query;
    const double step = map.resolution() / 2.0;
    if (segment_collision_free(map, wps.back(), query.goal, q, step))
      wps.push_back(query.goal);
  }

  result.status = PlanStatus::Found;
  result.path = Path::from_waypoints(std::move(wps));
  return result;
}

}  // namespace mls
