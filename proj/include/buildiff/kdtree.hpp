#pragma once

#include <cstddef>
#include <vector>

#include "buildiff/geometry.hpp"
#include "buildiff/kernels.hpp"

namespace buildiff {

// Balanced 3D k-d tree over a snapshot of a cloud. Immutable after
// construction; concurrent queries are safe.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud);

  std::size_t size() const { return points_.size() / 3; }

  // Exact nearest neighbour by squared distance; ties go to the lowest index.
  kernels::NearestHit nearest(const Point3& query) const;

 private:
  struct Node {
    std::size_t point;  // index into the original cloud
    int axis;
    std::ptrdiff_t left = -1;
    std::ptrdiff_t right = -1;
  };

  std::ptrdiff_t build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi, int depth);
  void search(std::ptrdiff_t node, const Point3& q, kernels::NearestHit& best) const;

  std::vector<double> points_;
  std::vector<Node> nodes_;
  std::ptrdiff_t root_ = -1;
};

}  // namespace buildiff
