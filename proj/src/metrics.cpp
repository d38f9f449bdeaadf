#include "buildiff/metrics.hpp"

#include <stdexcept>
#include <vector>

#include "buildiff/assignment.hpp"
#include "buildiff/kdtree.hpp"
#include "buildiff/kernels.hpp"

namespace buildiff {

namespace {

// Brute force below this many point pairs, k-d tree above.
constexpr std::size_t kBruteForcePairs = std::size_t{1} << 20;

std::vector<double> nearest_sq_dists(const PointCloud& queries, const PointCloud& refs) {
  std::vector<double> out(queries.size());
  if (queries.size() * refs.size() <= kBruteForcePairs) {
    std::vector<kernels::NearestHit> hits(queries.size());
    kernels::nearest(queries.flat(), refs.flat(), hits);
    for (std::size_t i = 0; i < hits.size(); ++i) out[i] = hits[i].sq_dist;
    return out;
  }
  const KdTree tree(refs);
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[i] = tree.nearest(queries.point(static_cast<std::size_t>(i))).sq_dist;
  return out;
}

void require_nonempty(const PointCloud& a, const PointCloud& b, const char* who) {
  if (a.empty() || b.empty()) throw std::invalid_argument(std::string(who) + ": empty point cloud");
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, b, "chamfer");
  double ab = 0.0, ba = 0.0;
  for (double d : nearest_sq_dists(a, b)) ab += d;
  for (double d : nearest_sq_dists(b, a)) ba += d;
  return ab / static_cast<double>(a.size()) + ba / static_cast<double>(b.size());
}

EmdMode parse_emd_mode(const std::string& s) {
  if (s == "exact") return EmdMode::kExact;
  if (s == "approx") return EmdMode::kApprox;
  if (s == "auto") return EmdMode::kAuto;
  throw std::invalid_argument("unknown EMD mode '" + s + "' (expected exact|approx|auto)");
}

EmdResult emd(const PointCloud& a, const PointCloud& b, EmdMode mode, std::uint64_t seed) {
  require_nonempty(a, b, "emd");
  EmdResult result;
  PointCloud pa = a, pb = b;
  if (a.size() != b.size()) {
    const std::size_t n = std::min(a.size(), b.size());
    if (a.size() > n) pa = select(a, random_subset(a.size(), n, seed));
    if (b.size() > n) pb = select(b, random_subset(b.size(), n, seed + 1));
    result.resampled = true;
  }
  const std::size_t n = pa.size();
  result.points = n;
  if (mode == EmdMode::kAuto) mode = n <= kMaxExactEmd ? EmdMode::kExact : EmdMode::kApprox;
  if (mode == EmdMode::kExact && n > kMaxExactEmd)
    throw std::invalid_argument("emd: exact mode supports at most " + std::to_string(kMaxExactEmd) +
                                " points, got " + std::to_string(n));
  std::vector<double> cost(n * n);
  kernels::distance_matrix(pa.flat(), pb.flat(), cost);
  const auto match = mode == EmdMode::kExact ? hungarian(cost, n) : auction(cost, n);
  result.value = match.total_cost / static_cast<double>(n);
  return result;
}

double fscore(const PointCloud& pred, const PointCloud& ref, double tau) {
  require_nonempty(pred, ref, "fscore");
  if (!(tau > 0.0)) throw std::invalid_argument("fscore: tau must be positive");
  auto hit_rate = [tau](const std::vector<double>& d) {
    std::size_t hits = 0;
    for (double v : d) hits += v <= tau ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(d.size());
  };
  const double precision = hit_rate(nearest_sq_dists(pred, ref));
  const double recall = hit_rate(nearest_sq_dists(ref, pred));
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

PairReport evaluate_pair(const PointCloud& pred, const PointCloud& ref,
                         const EvalOptions& options) {
  const PointCloud p = options.normalize ? normalize_unit_cube(pred).cloud : pred;
  const PointCloud r = options.normalize ? normalize_unit_cube(ref).cloud : ref;
  PairReport report;
  report.n_pred = p.size();
  report.n_ref = r.size();
  report.cd_scaled = chamfer(p, r) * 100.0;
  const auto e = emd(p, r, options.emd_mode, options.seed);
  report.emd_scaled = e.value * 100.0;
  report.emd_resampled = e.resampled;
  report.f1 = fscore(p, r, options.tau);
  return report;
}

}  // namespace buildiff
