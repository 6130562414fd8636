#pragma once

#include <cstdint>
#include <vector>

#include "radarflow/core.hpp"

namespace radarflow {

/// Exact k-nearest-neighbor search over a fixed set of 3D points.
/// Neighbors are ordered by (squared distance, index) ascending, so ties on
/// distance deterministically prefer the lower index — brute-force search
/// with the same comparator returns the identical list.
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::uint32_t i) const { return points_[i]; }

  struct Neighbor {
    double dist2;
    std::uint32_t index;
    bool operator<(const Neighbor& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };

  std::vector<Neighbor> knn(const Vec3& query, std::uint32_t k) const;

 private:
  struct Node {
    std::int32_t left = -1, right = -1;
    std::uint32_t begin = 0, end = 0;  // leaf range into order_
    std::uint8_t axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& query, std::uint32_t k,
              std::vector<Neighbor>& heap) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace radarflow
