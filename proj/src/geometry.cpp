#include "buildiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "buildiff/rng.hpp"

namespace buildiff {

PointCloud::PointCloud(std::vector<double> xyz, std::string meta)
    : xyz_(std::move(xyz)), meta_(std::move(meta)) {
  if (xyz_.size() % 3 != 0)
    throw std::invalid_argument("point cloud: coordinate count " + std::to_string(xyz_.size()) +
                                " is not a multiple of 3");
  for (double v : xyz_)
    if (!std::isfinite(v)) throw std::invalid_argument("point cloud: non-finite coordinate");
}

PointCloud PointCloud::from_points(std::span<const Point3> points, std::string meta) {
  std::vector<double> xyz;
  xyz.reserve(points.size() * 3);
  for (const auto& p : points) xyz.insert(xyz.end(), p.begin(), p.end());
  return PointCloud(std::move(xyz), std::move(meta));
}

PointCloud PointCloud::from_tensor(const ad::Tensor& t, std::string meta) {
  if (t.rank() != 2 || t.cols() != 3)
    throw std::invalid_argument("point cloud: expected (n x 3) tensor, got " +
                                ad::shape_str(t.shape()));
  return PointCloud(t.vec(), std::move(meta));
}

ad::Tensor PointCloud::as_tensor() const {
  if (empty()) throw std::invalid_argument("point cloud: empty cloud has no tensor form");
  return ad::Tensor::matrix(size(), 3, xyz_);
}

bool PointCloud::is_normalized() const {
  return std::all_of(xyz_.begin(), xyz_.end(), [](double v) { return v >= -1.0 && v <= 1.0; });
}

Point3 UnitCubeTransform::apply(const Point3& p) const {
  return {(p[0] - center[0]) / scale, (p[1] - center[1]) / scale, (p[2] - center[2]) / scale};
}

Point3 UnitCubeTransform::invert(const Point3& p) const {
  return {p[0] * scale + center[0], p[1] * scale + center[1], p[2] * scale + center[2]};
}

NormalizedCloud normalize_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("normalize_unit_cube: empty cloud");
  Point3 lo, hi;
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.point(i);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  double range = 0.0;
  for (int a = 0; a < 3; ++a) range = std::max(range, hi[a] - lo[a]);
  if (!(range > 0.0)) throw std::invalid_argument("normalize_unit_cube: all points identical");

  UnitCubeTransform tf;
  for (int a = 0; a < 3; ++a) tf.center[a] = 0.5 * (lo[a] + hi[a]);
  tf.scale = 0.5 * range;

  std::vector<double> xyz(cloud.flat().begin(), cloud.flat().end());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto q = tf.apply(cloud.point(i));
    for (int a = 0; a < 3; ++a) xyz[3 * i + a] = std::clamp(q[a], -1.0, 1.0);
  }
  return {PointCloud(std::move(xyz), cloud.meta()), tf};
}

PointCloud invert_unit_cube(const PointCloud& cloud, const UnitCubeTransform& transform) {
  std::vector<double> xyz(cloud.flat().begin(), cloud.flat().end());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto q = transform.invert(cloud.point(i));
    for (int a = 0; a < 3; ++a) xyz[3 * i + a] = q[a];
  }
  return PointCloud(std::move(xyz), cloud.meta());
}

Footprint project_footprint(const PointCloud& cloud) {
  std::vector<double> xyz(cloud.flat().begin(), cloud.flat().end());
  for (std::size_t i = 0; i < cloud.size(); ++i) xyz[3 * i + 2] = 0.0;
  return {PointCloud(std::move(xyz), cloud.meta())};
}

std::vector<std::size_t> farthest_point_indices(const PointCloud& cloud, std::size_t k,
                                                std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (k < 1 || k > n)
    throw std::invalid_argument("farthest_point_sample: k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(n) + "]");
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  chosen.push_back(static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1)));

  const auto xyz = cloud.flat();
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    const std::size_t last = chosen.back();
    const double px = xyz[3 * last], py = xyz[3 * last + 1], pz = xyz[3 * last + 2];
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 4096)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const double dx = xyz[3 * i] - px, dy = xyz[3 * i + 1] - py, dz = xyz[3 * i + 2] - pz;
      min_d[i] = std::min(min_d[i], dx * dx + dy * dy + dz * dz);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (min_d[i] > min_d[best]) best = i;
    chosen.push_back(best);
  }
  return chosen;
}

PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t k, std::uint64_t seed) {
  const auto idx = farthest_point_indices(cloud, k, seed);
  auto out = select(cloud, idx);
  out.set_meta(cloud.meta());
  return out;
}

PointCloud select(const PointCloud& cloud, std::span<const std::size_t> indices) {
  std::vector<double> xyz;
  xyz.reserve(indices.size() * 3);
  for (auto i : indices) {
    if (i >= cloud.size()) throw std::out_of_range("select: index out of range");
    const auto p = cloud.point(i);
    xyz.insert(xyz.end(), p.begin(), p.end());
  }
  return PointCloud(std::move(xyz), cloud.meta());
}

std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw std::invalid_argument("random_subset: k exceeds n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(n) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace buildiff
