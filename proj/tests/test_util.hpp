#pragma once

// Shared helpers for building synthetic occupancy scenes in tests.

#include "mls/occupancy.hpp"

namespace mls::testing {

// Marks every voxel whose center lies in [lo, hi] as occupied by inserting
// hit endpoints sensed from inside the box, keeping free evidence out of
// the surrounding space.
inline void fill_box(mls::OccupancyMap& map, const mls::Vec3& lo,
                     const mls::Vec3& hi) {
  const double res = map.resolution();
  mls::PointCloud cloud;
  const mls::Vec3 mid = (lo + hi) * 0.5;
  const auto snap = [&](double v) {
    return (std::floor(v / res) + 0.5) * res;
  };
  cloud.sensor_origin = {snap(mid.x), snap(mid.y), snap(mid.z)};
  for (double x = snap(lo.x); x <= hi.x; x += res)
    for (double y = snap(lo.y); y <= hi.y; y += res)
      for (double z = snap(lo.z); z <= hi.z; z += res)
        cloud.points.push_back({x, y, z});
  map.insert_point_cloud(cloud);
}

inline mls::OccupancyParams plan_map_params() {
  mls::OccupancyParams p;
  p.resolution = 0.25;
  p.depth = 9;  // 128 m cube
  return p;
}

}  // namespace mls::testing
