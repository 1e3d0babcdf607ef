#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

// Shared geometry, camera and randomness primitives.
//
// Conventions used throughout: world frame is x east, y north, z up;
// camera frame is z forward, x right, y down. Distances are metres,
// angles radians, times seconds. Double precision everywhere.

namespace mls {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x; y -= o.y; z -= o.z;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double norm_sq() const { return dot(*this); }
  double norm_xy() const { return std::sqrt(x * x + y * y); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }
inline double distance_xy(const Vec3& a, const Vec3& b) {
  return (a - b).norm_xy();
}

// Unit quaternion, scalar-first.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quat identity() { return {}; }

  static Quat from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Quat conjugate() const { return {w, -x, -y, -z}; }

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }
};

// Rotates v by unit quaternion q.
inline Vec3 quat_rotate(const Quat& q, const Vec3& v) {
  // v' = v + 2 u x (u x v + w v), u = (x,y,z)
  const Vec3 u{q.x, q.y, q.z};
  const Vec3 t = u.cross(Vec3{u.y * v.z - u.z * v.y + q.w * v.x,
                              u.z * v.x - u.x * v.z + q.w * v.y,
                              u.x * v.y - u.y * v.x + q.w * v.z});
  return {v.x + 2.0 * t.x, v.y + 2.0 * t.y, v.z + 2.0 * t.z};
}

struct Pose {
  Vec3 position;
  Quat orientation;

  Vec3 transform(const Vec3& local) const {
    return position + quat_rotate(orientation, local);
  }
  Vec3 inverse_transform(const Vec3& world) const {
    return quat_rotate(orientation.conjugate(), world - position);
  }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
  double max_range = 0.0;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
};

// Pinhole projection of a camera-frame point (z forward). Returns nullopt
// for points at or behind the camera plane.
inline std::optional<PixelCoord> project(const CameraIntrinsics& intr,
                                         const Vec3& p_cam) {
  if (p_cam.z <= 1e-6) return std::nullopt;
  return PixelCoord{intr.fx * (p_cam.x / p_cam.z) + intr.cx,
                    intr.fy * (p_cam.y / p_cam.z) + intr.cy};
}

// Camera-frame direction of the ray through pixel (u, v), unit length.
inline Vec3 unproject_dir(const CameraIntrinsics& intr, double u, double v) {
  return Vec3{(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0}
      .normalized();
}

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  uint8_t at(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  uint8_t& at(int x, int y) {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// Counter-based pseudo-random stream. Output i of stream k is a pure
// function of (k, i), so identical seeds reproduce identical sequences on
// every platform. fork(label) derives an independent child stream; the
// fork itself advances the parent, so repeated forks of the same label
// also differ.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(detail::splitmix64(seed ^ kKeyDomain)) {}

  uint64_t next_u64() {
    return detail::splitmix64(key_ ^ (counter_++ * 0xd1342543de82ef95ull));
  }

  // Uniform in [0, 1).
  double next_unit() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller; stateless apart from the counter.
  double gaussian() {
    double u1 = next_unit();
    const double u2 = next_unit();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Vec3 gaussian_vec3() {
    const double a = gaussian();
    const double b = gaussian();
    const double c = gaussian();
    return {a, b, c};
  }

  bool bernoulli(double p) { return next_unit() < p; }

  Rng fork(std::string_view label) {
    const uint64_t child =
        detail::splitmix64(key_ ^ detail::fnv1a64(label) ^
                           (counter_ * 0x9e3779b97f4a7c15ull) ^ kForkDomain);
    ++counter_;
    return Rng(child, 0);
  }

 private:
  static constexpr uint64_t kKeyDomain = 0x6d6c732d726e6701ull;
  static constexpr uint64_t kForkDomain = 0x666f726b00000001ull;

  Rng(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace mls
