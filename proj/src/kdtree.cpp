#include "buildiff/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace buildiff {

KdTree::KdTree(const PointCloud& cloud) : points_(cloud.vec()) {
  if (cloud.empty()) throw std::invalid_argument("KdTree: empty cloud");
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  nodes_.reserve(idx.size());
  root_ = build(idx, 0, idx.size(), 0);
}

std::ptrdiff_t KdTree::build(std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                             int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                   idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi),
                   [&](std::size_t a, std::size_t b) {
                     const double va = points_[3 * a + axis], vb = points_[3 * b + axis];
                     return va < vb || (va == vb && a < b);
                   });
  const auto self = static_cast<std::ptrdiff_t>(nodes_.size());
  nodes_.push_back(Node{idx[mid], axis});
  const auto left = build(idx, lo, mid, depth + 1);
  const auto right = build(idx, mid + 1, hi, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(std::ptrdiff_t node, const Point3& q, kernels::NearestHit& best) const {
  if (node < 0) return;
  const auto& n = nodes_[static_cast<std::size_t>(node)];
  const double* p = &points_[3 * n.point];
  const double dx = q[0] - p[0], dy = q[1] - p[1], dz = q[2] - p[2];
  const double d = dx * dx + dy * dy + dz * dz;
  if (d < best.sq_dist || (d == best.sq_dist && n.point < best.index)) best = {n.point, d};

  const double diff = q[n.axis] - p[n.axis];
  const auto near = diff < 0 ? n.left : n.right;
  const auto far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  // Equality keeps the far side alive so a lower-index tie is never pruned.
  if (diff * diff <= best.sq_dist) search(far, q, best);
}

kernels::NearestHit KdTree::nearest(const Point3& query) const {
  kernels::NearestHit best{0, std::numeric_limits<double>::infinity()};
  search(root_, query, best);
  kernels::add_nn_queries(1);
  return best;
}

}  // namespace buildiff
