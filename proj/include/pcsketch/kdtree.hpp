#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcsketch/geometry.hpp"

namespace pcsketch {

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Exact nearest-neighbor search over a fixed point set. Among equidistant
/// points the lowest index wins, so results match a linear scan bit for bit.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  struct Hit {
    std::uint32_t index = 0;
    double dist2 = 0.0;
  };

  Hit nearest(const Vec3& query) const;

 private:
  struct Node {
    std::uint32_t begin = 0;  // range into order_
    std::uint32_t end = 0;
    std::int32_t left = -1;   // -1 for leaves
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace pcsketch
