#include "pcsketch/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "pcsketch/error.hpp"

namespace pcsketch {
namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw Error(ErrorKind::Validation, "kd-tree needs at least one point");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, 0, 0.0});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as a leaf

  const auto mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
  // Left holds coordinates <= split, right holds >= split.
  const double split = points_[order_[mid]][axis];
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  auto& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  Hit best{std::numeric_limits<std::uint32_t>::max(), std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

void KdTree::search(std::int32_t id, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.left < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      const auto idx = order_[i];
      const double d2 = squared_distance(q, points_[idx]);
      if (d2 < best.dist2 || (d2 == best.dist2 && idx < best.index)) best = {idx, d2};
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const auto near = diff <= 0.0 ? node.left : node.right;
  const auto far = diff <= 0.0 ? node.right : node.left;
  search(near, q, best);
  // Equality still descends: an equidistant point with a lower index may live there.
  if (diff * diff <= best.dist2) search(far, q, best);
}

}  // namespace pcsketch
