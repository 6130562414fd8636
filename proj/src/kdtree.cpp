#include "radarflow/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace radarflow {

namespace {
constexpr std::uint32_t kLeafSize = 16;
}

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 4);
    root_ = build(0, std::uint32_t(points_.size()));
  }
}

std::int32_t KdTree3::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin > kLeafSize) {
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    Vec3 extent = hi - lo;
    std::uint8_t axis = 0;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent(axis)) axis = 2;

    if (extent(axis) > 0.0) {
      const std::uint32_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = points_[a](axis), pb = points_[b](axis);
                         return pa < pb || (pa == pb && a < b);
                       });
      node.axis = axis;
      node.split = points_[order_[mid]](axis);
      node.left = build(begin, mid);
      node.right = build(mid, end);
    }
  }
  nodes_.push_back(node);
  return std::int32_t(nodes_.size()) - 1;
}

std::vector<KdTree3::Neighbor> KdTree3::knn(const Vec3& query, std::uint32_t k) const {
  std::vector<Neighbor> heap;  // max-heap on (dist2, index)
  if (k == 0 || points_.empty()) return heap;
  heap.reserve(k + 1);
  search(root_, query, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

void KdTree3::search(std::int32_t id, const Vec3& query, std::uint32_t k,
                     std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[id];
  if (node.left < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t idx = order_[i];
      const Neighbor cand{(points_[idx] - query).squaredNorm(), idx};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double delta = query(node.axis) - node.split;
  const std::int32_t near = delta < 0.0 ? node.left : node.right;
  const std::int32_t far = delta < 0.0 ? node.right : node.left;
  search(near, query, k, heap);
  if (heap.size() < k || delta * delta <= heap.front().dist2) {
    search(far, query, k, heap);
  }
}

}  // namespace radarflow
