#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>

#include "mls/core.hpp"

// Probabilistic octree occupancy map. Leaf voxels hold clamped log-odds
// evidence; uniform regions collapse into single nodes after pruning.
// The cube is centered on the world origin with extent resolution * 2^depth.

namespace mls {

enum class OccState { Free, Occupied, Unknown };

struct PointCloud {
  Vec3 sensor_origin;
  std::vector<Vec3> points;  // world-frame hit endpoints
};

struct OccupancyParams {
  double resolution = 0.25;      // metres per leaf voxel
  int depth = 12;                // tree depth, extent = resolution * 2^depth
  double prob_hit = 0.7;
  double prob_miss = 0.4;
  double clamp_prob_min = 0.12;
  double clamp_prob_max = 0.97;
  double occupancy_prob_threshold = 0.5;
};

inline double prob_to_log_odds(double p) { return std::log(p / (1.0 - p)); }
inline double log_odds_to_prob(double l) { return 1.0 / (1.0 + std::exp(-l)); }

class MapFormatError : public std::runtime_error {
 public:
  explicit MapFormatError(const std::string& what)
      : std::runtime_error(what) {}
};

class OccupancyMap {
 public:
  explicit OccupancyMap(const OccupancyParams& params = {})
      : resolution_(params.resolution),
        depth_(params.depth),
        log_odds_hit_(prob_to_log_odds(params.prob_hit)),
        log_odds_miss_(prob_to_log_odds(params.prob_miss)),
        clamp_min_(prob_to_log_odds(params.clamp_prob_min)),
        clamp_max_(prob_to_log_odds(params.clamp_prob_max)),
        threshold_(prob_to_log_odds(params.occupancy_prob_threshold)),
        root_(std::make_unique<Node>()) {
    if (resolution_ <= 0.0 || depth_ < 1 || depth_ > 21)
      throw std::invalid_argument("occupancy: bad resolution/depth");
    if (!(clamp_min_ < 0.0 && 0.0 < clamp_max_))
      throw std::invalid_argument("occupancy: clamp bounds must straddle 0");
    if (!(log_odds_miss_ < 0.0 && 0.0 < log_odds_hit_))
      throw std::invalid_argument("occupancy: hit/miss evidence signs");
    cells_ = int64_t{1} << depth_;
    half_extent_ = resolution_ * static_cast<double>(cells_ / 2);
  }

  OccupancyMap(const OccupancyMap&) = delete;
  OccupancyMap& operator=(const OccupancyMap&) = delete;
  OccupancyMap(OccupancyMap&&) = default;
  OccupancyMap& operator=(OccupancyMap&&) = default;

  double resolution() const { return resolution_; }
  int depth() const { return depth_; }
  double half_extent() const { return half_extent_; }
  double log_odds_hit() const { return log_odds_hit_; }
  double log_odds_miss() const { return log_odds_miss_; }
  double clamp_min() const { return clamp_min_; }
  double clamp_max() const { return clamp_max_; }
  double occupancy_threshold() const { return threshold_; }

  bool in_bounds(const Vec3& p) const {
    return p.x >= -half_extent_ && p.x < half_extent_ &&
           p.y >= -half_extent_ && p.y < half_extent_ &&
           p.z >= -half_extent_ && p.z < half_extent_;
  }

  // Integrates one point cloud. Every leaf traversed by a ray gets miss
  // evidence, each endpoint leaf gets hit evidence, and no leaf is updated
  // more than once per cloud (endpoint evidence wins). Points beyond the
  // map boundary are truncated there and contribute free evidence only.
  void insert_point_cloud(const PointCloud& cloud) {
    if (!in_bounds(cloud.sensor_origin))
      throw std::invalid_argument("insert_point_cloud: origin out of bounds");
    std::unordered_set<uint64_t> hits;
    std::unordered_set<uint64_t> misses;
    for (const Vec3& p : cloud.points) {
      Vec3 end = p;
      bool truncated = false;
      if (!in_bounds(end)) {
        end = clip_to_bounds(cloud.sensor_origin, p);
        truncated = true;
      }
      walk_ray(cloud.sensor_origin, end,
               [&](uint64_t key) { misses.insert(key); });
      if (truncated)
        misses.insert(pack(voxel_of(end)));
      else
        hits.insert(pack(voxel_of(end)));
    }
    for (uint64_t key : hits) update_leaf(key, log_odds_hit_);
    for (uint64_t key : misses)
      if (!hits.count(key)) update_leaf(key, log_odds_miss_);
    prune();
  }

  OccState state_at(const Vec3& p) const {
    if (!in_bounds(p)) return OccState::Unknown;
    const Node* node = root_.get();
    VoxelKey key = voxel_of(p);
    for (int level = depth_ - 1; node->children; --level) {
      node = &(*node->children)[child_index(key, level)];
    }
    if (!node->known) return OccState::Unknown;
    return node->log_odds > threshold_ ? OccState::Occupied : OccState::Free;
  }

  bool is_occupied(const Vec3& p) const {
    return state_at(p) == OccState::Occupied;
  }

  // Log-odds of the leaf covering p, or nullopt when unknown/out of bounds.
  std::optional<float> log_odds_at(const Vec3& p) const {
    if (!in_bounds(p)) return std::nullopt;
    const Node* node = root_.get();
    VoxelKey key = voxel_of(p);
    for (int level = depth_ - 1; node->children; --level)
      node = &(*node->children)[child_index(key, level)];
    if (!node->known) return std::nullopt;
    return node->log_odds;
  }

  // True iff no leaf-voxel center within `radius` of p is occupied, and,
  // when unknown_is_obstacle is set, none is unknown either. Voxel centers
  // beyond the map boundary count as unknown.
  bool collision_free(const Vec3& p, double radius,
                      bool unknown_is_obstacle) const {
    const double r_sq = radius * radius;
    if (unknown_is_obstacle && outside_center_within(p, r_sq)) return false;
    return region_clear(*root_, -half_extent_, -half_extent_, -half_extent_,
                        resolution_ * static_cast<double>(cells_), p, r_sq,
                        unknown_is_obstacle);
  }

  // Steps leaf voxels along the ray and returns the center of the first
  // occupied one, or nullopt if the ray exits, exceeds max_range, or sees
  // nothing occupied. Unknown space does not stop the ray.
  std::optional<Vec3> cast_ray(const Ray& ray) const {
    if (!in_bounds(ray.origin))
      throw std::invalid_argument("cast_ray: origin out of bounds");
    std::optional<Vec3> hit;
    walk_ray_len(ray.origin, ray.direction, ray.max_range,
                 [&](uint64_t key) {
                   const VoxelKey k = unpack(key);
                   const Vec3 c = center_of(k);
                   if (state_at(c) == OccState::Occupied) {
                     hit = c;
                     return false;
                   }
                   return true;
                 });
    return hit;
  }

  int64_t node_count() const { return count_nodes(*root_); }

  // Re-applies pruning over the whole tree. Idempotent.
  void prune() { prune_node(*root_); }

  // Visits every known leaf as (voxel_min_key, size_in_voxels, log_odds).
  template <typename Fn>
  void visit_leaves(Fn&& fn) const {
    visit_node(*root_, 0, 0, 0, cells_, fn);
  }

  // Binary format: "OCM1" magic, little-endian f64 resolution, u8 depth,
  // f64 hit/miss/clamp_min/clamp_max/threshold, then a preorder node
  // stream of one child-mask byte per node and a raw f32 log-odds per leaf.
  std::vector<uint8_t> serialize() const {
    std::vector<uint8_t> out;
    out.reserve(64);
    out.insert(out.end(), {'O', 'C', 'M', '1'});
    append_f64(out, resolution_);
    out.push_back(static_cast<uint8_t>(depth_));
    append_f64(out, log_odds_hit_);
    append_f64(out, log_odds_miss_);
    append_f64(out, clamp_min_);
    append_f64(out, clamp_max_);
    append_f64(out, threshold_);
    write_node(out, *root_);
    return out;
  }

  static OccupancyMap deserialize(const std::vector<uint8_t>& bytes) {
    Reader r{bytes.data(), bytes.size(), 0};
    uint8_t magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "OCM1", 4) != 0)
      throw MapFormatError("occupancy stream: bad magic");
    const double resolution = r.f64();
    const uint8_t depth = r.u8();
    OccupancyParams params;
    params.resolution = resolution;
    params.depth = depth;
    if (resolution <= 0.0 || !std::isfinite(resolution) || depth < 1 ||
        depth > 21)
      throw MapFormatError("occupancy stream: bad header");
    OccupancyMap map(params);
    map.log_odds_hit_ = r.f64();
    map.log_odds_miss_ = r.f64();
    map.clamp_min_ = r.f64();
    map.clamp_max_ = r.f64();
    map.threshold_ = r.f64();
    if (!(map.clamp_min_ < 0.0 && 0.0 < map.clamp_max_) ||
        !(map.log_odds_miss_ < 0.0 && 0.0 < map.log_odds_hit_))
      throw MapFormatError("occupancy stream: bad parameters");
    map.read_node(r, *map.root_, 0);
    if (r.offset != r.size)
      throw MapFormatError("occupancy stream: trailing bytes");
    return map;
  }

  struct VoxelKey {
    int64_t x = 0, y = 0, z = 0;
  };

  VoxelKey voxel_of(const Vec3& p) const {
    return {static_cast<int64_t>(std::floor((p.x + half_extent_) / resolution_)),
            static_cast<int64_t>(std::floor((p.y + half_extent_) / resolution_)),
            static_cast<int64_t>(std::floor((p.z + half_extent_) / resolution_))};
  }

  Vec3 center_of(const VoxelKey& k) const {
    return {-half_extent_ + (static_cast<double>(k.x) + 0.5) * resolution_,
            -half_extent_ + (static_cast<double>(k.y) + 0.5) * resolution_,
            -half_extent_ + (static_cast<double>(k.z) + 0.5) * resolution_};
  }

 private:
  struct Node {
    std::unique_ptr<std::array<Node, 8>> children;
    float log_odds = 0.0f;
    bool known = false;
  };

  struct Reader {
    const uint8_t* data;
    size_t size;
    size_t offset;
    void read(void* dst, size_t n) {
      if (offset + n > size)
        throw MapFormatError("occupancy stream: truncated");
      std::memcpy(dst, data + offset, n);
      offset += n;
    }
    uint8_t u8() {
      uint8_t v;
      read(&v, 1);
      return v;
    }
    double f64() {
      uint64_t bits;
      read(&bits, 8);
      double v;
      std::memcpy(&v, &bits, 8);
      return v;
    }
    float f32() {
      uint32_t bits;
      read(&bits, 4);
      float v;
      std::memcpy(&v, &bits, 4);
      return v;
    }
  };

  static void append_f64(std::vector<uint8_t>& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i)
      out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  }
  static void append_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i)
      out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
  }

  static bool materialized(const Node& n) {
    return n.children != nullptr || n.known;
  }

  uint64_t pack(const VoxelKey& k) const {
    return static_cast<uint64_t>(k.x) | (static_cast<uint64_t>(k.y) << 21) |
           (static_cast<uint64_t>(k.z) << 42);
  }
  VoxelKey unpack(uint64_t key) const {
    constexpr uint64_t mask = (1ull << 21) - 1;
    return {static_cast<int64_t>(key & mask),
            static_cast<int64_t>((key >> 21) & mask),
            static_cast<int64_t>((key >> 42) & mask)};
  }

  static int child_index(const VoxelKey& k, int level) {
    return static_cast<int>(((k.x >> level) & 1) | (((k.y >> level) & 1) << 1) |
                            (((k.z >> level) & 1) << 2));
  }

  void update_leaf(uint64_t packed, double delta) {
    const VoxelKey key = unpack(packed);
    Node* node = root_.get();
    for (int level = depth_ - 1; level >= 0; --level) {
      if (!node->children) {
        node->children = std::make_unique<std::array<Node, 8>>();
        if (node->known) {
          // expand a pruned uniform region before touching one voxel of it
          for (Node& c : *node->children) {
            c.known = true;
            c.log_odds = node->log_odds;
          }
          node->known = false;
        }
      }
      node = &(*node->children)[child_index(key, level)];
    }
    const double updated =
        (node->known ? static_cast<double>(node->log_odds) : 0.0) + delta;
    node->log_odds =
        static_cast<float>(std::clamp(updated, clamp_min_, clamp_max_));
    node->known = true;
  }

  // Clips segment origin->target to the map cube, returning a point just
  // inside the exit face.
  Vec3 clip_to_bounds(const Vec3& origin, const Vec3& target) const {
    const Vec3 d = target - origin;
    double t_exit = 1.0;
    const double lo = -half_extent_, hi = half_extent_;
    const double o[3] = {origin.x, origin.y, origin.z};
    const double dir[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a) {
      if (dir[a] > 0.0)
        t_exit = std::min(t_exit, (hi - o[a]) / dir[a]);
      else if (dir[a] < 0.0)
        t_exit = std::min(t_exit, (lo - o[a]) / dir[a]);
    }
    t_exit = std::max(0.0, t_exit - 1e-9 / std::max(d.norm(), 1e-12));
    return origin + d * t_exit;
  }

  // Amanatides-Woo traversal over leaf voxels from origin to end
  // (end voxel excluded; both assumed in bounds).
  template <typename Fn>
  void walk_ray(const Vec3& origin, const Vec3& end, Fn&& fn) const {
    const Vec3 d = end - origin;
    const double len = d.norm();
    const VoxelKey target = voxel_of(end);
    if (len < 1e-12) return;
    const Vec3 dir = d / len;
    VoxelKey cur = voxel_of(origin);
    int64_t step[3];
    double t_max[3], t_delta[3];
    setup_traversal(origin, dir, cur, step, t_max, t_delta);
    while (true) {
      if (cur.x == target.x && cur.y == target.y && cur.z == target.z) return;
      fn(pack(cur));
      const int axis = smallest_axis(t_max);
      if (t_max[axis] > len) return;
      advance(cur, step, t_max, t_delta, axis);
      if (!key_in_grid(cur)) return;
    }
  }

  // Same traversal bounded by range; fn returns false to stop.
  template <typename Fn>
  void walk_ray_len(const Vec3& origin, const Vec3& dir, double range,
                    Fn&& fn) const {
    VoxelKey cur = voxel_of(origin);
    int64_t step[3];
    double t_max[3], t_delta[3];
    setup_traversal(origin, dir, cur, step, t_max, t_delta);
    double t = 0.0;
    while (t <= range) {
      if (!fn(pack(cur))) return;
      const int axis = smallest_axis(t_max);
      t = t_max[axis];
      advance(cur, step, t_max, t_delta, axis);
      if (!key_in_grid(cur)) return;
    }
  }

  void setup_traversal(const Vec3& origin, const Vec3& dir, const VoxelKey& cur,
                       int64_t step[3], double t_max[3],
                       double t_delta[3]) const {
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const int64_t c[3] = {cur.x, cur.y, cur.z};
    for (int a = 0; a < 3; ++a) {
      if (d[a] > 0.0) {
        step[a] = 1;
        const double boundary =
            -half_extent_ + static_cast<double>(c[a] + 1) * resolution_;
        t_max[a] = (boundary - o[a]) / d[a];
        t_delta[a] = resolution_ / d[a];
      } else if (d[a] < 0.0) {
        step[a] = -1;
        const double boundary =
            -half_extent_ + static_cast<double>(c[a]) * resolution_;
        t_max[a] = (boundary - o[a]) / d[a];
        t_delta[a] = resolution_ / -d[a];
      } else {
        step[a] = 0;
        t_max[a] = std::numeric_limits<double>::infinity();
        t_delta[a] = std::numeric_limits<double>::infinity();
      }
    }
  }

  static int smallest_axis(const double t_max[3]) {
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    return axis;
  }

  static void advance(VoxelKey& cur, const int64_t step[3], double t_max[3],
                      const double t_delta[3], int axis) {
    if (axis == 0) cur.x += step[0];
    if (axis == 1) cur.y += step[1];
    if (axis == 2) cur.z += step[2];
    t_max[axis] += t_delta[axis];
  }

  bool key_in_grid(const VoxelKey& k) const {
    return k.x >= 0 && k.x < cells_ && k.y >= 0 && k.y < cells_ && k.z >= 0 &&
           k.z < cells_;
  }

  // Does some leaf-voxel center inside box [bx,bx+size)x... lie within
  // radius of p? Separable per axis: clamp p into the box's lattice range.
  bool box_center_within(double bx, double by, double bz, double size,
                         const Vec3& p, double r_sq) const {
    const double b[3] = {bx, by, bz};
    const double q[3] = {p.x, p.y, p.z};
    double dist_sq = 0.0;
    for (int a = 0; a < 3; ++a) {
      const int64_t n = static_cast<int64_t>(std::llround(size / resolution_));
      int64_t i = static_cast<int64_t>(
          std::floor((q[a] - b[a]) / resolution_));
      i = std::clamp<int64_t>(i, 0, n - 1);
      const double c = b[a] + (static_cast<double>(i) + 0.5) * resolution_;
      const double d = q[a] - c;
      dist_sq += d * d;
    }
    return dist_sq <= r_sq;
  }

  // Any lattice center beyond the map cube within radius of p?
  bool outside_center_within(const Vec3& p, double r_sq) const {
    const double q[3] = {p.x, p.y, p.z};
    double in_axis[3];
    for (int a = 0; a < 3; ++a) {
      int64_t i = static_cast<int64_t>(
          std::floor((q[a] + half_extent_) / resolution_));
      i = std::clamp<int64_t>(i, 0, cells_ - 1);
      in_axis[a] =
          -half_extent_ + (static_cast<double>(i) + 0.5) * resolution_;
    }
    for (int out = 0; out < 3; ++out) {
      const double below = -half_extent_ - 0.5 * resolution_;
      const double above = half_extent_ + 0.5 * resolution_;
      const double forced =
          std::abs(q[out] - below) < std::abs(q[out] - above) ? below : above;
      double dist_sq = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double c = (a == out) ? forced : in_axis[a];
        const double d = q[a] - c;
        dist_sq += d * d;
      }
      if (dist_sq <= r_sq) return true;
    }
    return false;
  }

  bool region_clear(const Node& node, double bx, double by, double bz,
                    double size, const Vec3& p, double r_sq,
                    bool unknown_is_obstacle) const {
    // sphere vs box rejection
    double d_sq = 0.0;
    const double b[3] = {bx, by, bz};
    const double q[3] = {p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      const double lo = b[a], hi = b[a] + size;
      if (q[a] < lo)
        d_sq += (lo - q[a]) * (lo - q[a]);
      else if (q[a] > hi)
        d_sq += (q[a] - hi) * (q[a] - hi);
    }
    if (d_sq > r_sq) return true;

    if (node.children) {
      const double h = size * 0.5;
      for (int i = 0; i < 8; ++i) {
        const double cx = bx + ((i & 1) ? h : 0.0);
        const double cy = by + ((i & 2) ? h : 0.0);
        const double cz = bz + ((i & 4) ? h : 0.0);
        if (!region_clear((*node.children)[i], cx, cy, cz, h, p, r_sq,
                          unknown_is_obstacle))
          return false;
      }
      return true;
    }
    if (node.known) {
      if (node.log_odds > threshold_ &&
          box_center_within(bx, by, bz, size, p, r_sq))
        return false;
      return true;
    }
    if (unknown_is_obstacle && box_center_within(bx, by, bz, size, p, r_sq))
      return false;
    return true;
  }

  static int64_t count_nodes(const Node& node) {
    int64_t n = 1;
    if (node.children)
      for (const Node& c : *node.children)
        if (materialized(c)) n += count_nodes(c);
    return n;
  }

  bool prune_node(Node& node) {
    if (!node.children) return true;  // already a leaf
    bool collapsible = true;
    for (Node& c : *node.children) {
      if (!prune_node(c)) collapsible = false;
    }
    if (!collapsible) return false;
    const Node& first = (*node.children)[0];
    if (!first.known) return false;
    for (int i = 1; i < 8; ++i) {
      const Node& c = (*node.children)[i];
      if (!c.known || c.log_odds != first.log_odds) return false;
    }
    node.log_odds = first.log_odds;
    node.known = true;
    node.children.reset();
    return true;
  }

  template <typename Fn>
  void visit_node(const Node& node, int64_t kx, int64_t ky, int64_t kz,
                  int64_t size, Fn& fn) const {
    if (node.children) {
      const int64_t h = size / 2;
      for (int i = 0; i < 8; ++i) {
        visit_node((*node.children)[i], kx + ((i & 1) ? h : 0),
                   ky + ((i & 2) ? h : 0), kz + ((i & 4) ? h : 0), h, fn);
      }
      return;
    }
    if (node.known) fn(VoxelKey{kx, ky, kz}, size, node.log_odds);
  }

  void write_node(std::vector<uint8_t>& out, const Node& node) const {
    uint8_t mask = 0;
    if (node.children) {
      for (int i = 0; i < 8; ++i)
        if (materialized((*node.children)[i])) mask |= uint8_t{1} << i;
    }
    out.push_back(mask);
    if (mask == 0) {
      if (node.known) {
        append_f32(out, node.log_odds);
      } else {
        // unknown leaf (empty-map root); fixed quiet-NaN pattern
        out.push_back(0x00);
        out.push_back(0x00);
        out.push_back(0xc0);
        out.push_back(0x7f);
      }
      return;
    }
    for (int i = 0; i < 8; ++i)
      if (mask & (uint8_t{1} << i)) write_node(out, (*node.children)[i]);
  }

  void read_node(Reader& r, Node& node, int level) {
    const uint8_t mask = r.u8();
    if (mask == 0) {
      const float v = r.f32();
      if (std::isnan(v)) {
        if (level != 0)
          throw MapFormatError("occupancy stream: unknown leaf below root");
        node.known = false;
      } else {
        node.known = true;
        node.log_odds = v;
      }
      return;
    }
    if (level >= depth_)
      throw MapFormatError("occupancy stream: children below max depth");
    node.children = std::make_unique<std::array<Node, 8>>();
    for (int i = 0; i < 8; ++i)
      if (mask & (uint8_t{1} << i))
        read_node(r, (*node.children)[i], level + 1);
  }

  double resolution_;
  int depth_;
  double log_odds_hit_;
  double log_odds_miss_;
  double clamp_min_;
  double clamp_max_;
  double threshold_;
  int64_t cells_ = 0;
  double half_extent_ = 0.0;
  std::unique_ptr<Node> root_;
};

}  // namespace mls
