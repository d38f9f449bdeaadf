#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "buildiff/autodiff.hpp"

namespace buildiff {

using Point3 = std::array<double, 3>;

// Ordered 3D points stored as flat xyz triples; all coordinates finite.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<double> xyz, std::string meta = {});
  static PointCloud from_points(std::span<const Point3> points, std::string meta = {});
  // (n x 3) tensor.
  static PointCloud from_tensor(const ad::Tensor& t, std::string meta = {});

  std::size_t size() const { return xyz_.size() / 3; }
  bool empty() const { return xyz_.empty(); }
  Point3 point(std::size_t i) const { return {xyz_[3 * i], xyz_[3 * i + 1], xyz_[3 * i + 2]}; }
  std::span<const double> flat() const { return xyz_; }
  std::span<double> flat() { return xyz_; }
  const std::vector<double>& vec() const { return xyz_; }
  ad::Tensor as_tensor() const;

  const std::string& meta() const { return meta_; }
  void set_meta(std::string meta) { meta_ = std::move(meta); }

  // Every coordinate in [-1, 1].
  bool is_normalized() const;

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.xyz_ == b.xyz_; }

 private:
  std::vector<double> xyz_;
  std::string meta_;
};

// Ground-plane projection of a cloud: z is exactly 0 everywhere.
struct Footprint {
  PointCloud points;
};

struct UnitCubeTransform {
  Point3 center{0.0, 0.0, 0.0};
  double scale = 1.0;  // half of the largest axis range

  Point3 apply(const Point3& p) const;
  Point3 invert(const Point3& p) const;
};

struct NormalizedCloud {
  PointCloud cloud;
  UnitCubeTransform transform;
};

// Centers the bounding box at the origin and scales uniformly so the largest
// axis range becomes [-1, 1]. Rejects clouds with zero extent.
NormalizedCloud normalize_unit_cube(const PointCloud& cloud);
PointCloud invert_unit_cube(const PointCloud& cloud, const UnitCubeTransform& transform);

Footprint project_footprint(const PointCloud& cloud);

// Greedy farthest point sampling. The first point is drawn from `seed`; each
// later point maximizes the distance to the selected set (ties: lowest
// index). Returns the selected indices in selection order.
std::vector<std::size_t> farthest_point_indices(const PointCloud& cloud, std::size_t k,
                                                std::uint64_t seed);
PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k, std::uint64_t seed);

// Subset in the given index order.
PointCloud select(const PointCloud& cloud, std::span<const std::size_t> indices);

// Seeded uniform subset without replacement (order randomized).
std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace buildiff
