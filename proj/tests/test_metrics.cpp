#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "buildiff/assignment.hpp"
#include "buildiff/metrics.hpp"
#include "buildiff/rng.hpp"

using namespace buildiff;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xyz(3 * n);
  for (auto& v : xyz) v = rng.uniform(-1.0, 1.0);
  return PointCloud(std::move(xyz));
}

double sq(const Point3& a, const Point3& b) {
  return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
}

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
  auto one = [](const PointCloud& x, const PointCloud& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < y.size(); ++j) best = std::min(best, sq(x.point(i), y.point(j)));
      s += best;
    }
    return s / static_cast<double>(x.size());
  };
  return one(a, b) + one(b, a);
}

double brute_emd(const PointCloud& a, const PointCloud& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += std::sqrt(sq(a.point(i), b.point(perm[i])));
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

}  // namespace

TEST(Chamfer, Examples) {
  const auto c = random_cloud(30, 1);
  EXPECT_EQ(chamfer(c, c), 0.0);
  const std::vector<Point3> a{{0, 0, 0}}, b{{1, 0, 0}};
  EXPECT_EQ(chamfer(PointCloud::from_points(a), PointCloud::from_points(b)), 2.0);
  EXPECT_THROW(chamfer(PointCloud(), c), std::invalid_argument);
}

TEST(Chamfer, MatchesBruteForceAndSymmetric) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = random_cloud(1 + s % 16, s), b = random_cloud(1 + (s * 7) % 16, s + 1000);
    EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-12);
    EXPECT_NEAR(chamfer(a, b), chamfer(b, a), 1e-12);
    EXPECT_GE(chamfer(a, b), 0.0);
  }
}

TEST(Chamfer, LargeCloudsUseTreeAndAgree) {
  const auto a = random_cloud(1500, 3), b = random_cloud(1200, 4);
  EXPECT_NEAR(chamfer(a, b), brute_chamfer(a, b), 1e-12);
}

TEST(Emd, TwoPointExample) {
  const std::vector<Point3> a{{0, 0, 0}, {1, 0, 0}}, b{{0.5, 0, 0}, {1.5, 0, 0}};
  const auto r = emd(PointCloud::from_points(a), PointCloud::from_points(b), EmdMode::kExact);
  EXPECT_NEAR(r.value, 0.5, 1e-15);
  EXPECT_FALSE(r.resampled);
  const auto c = random_cloud(40, 8);
  EXPECT_EQ(emd(c, c, EmdMode::kExact).value, 0.0);
  EXPECT_THROW(emd(PointCloud(), c), std::invalid_argument);
}

TEST(Emd, ExactMatchesPermutationEnumeration) {
  for (std::uint64_t s = 0; s < 40; ++s) {
    const std::size_t n = 1 + s % 8;
    const auto a = random_cloud(n, s), b = random_cloud(n, s + 500);
    EXPECT_NEAR(emd(a, b, EmdMode::kExact).value, brute_emd(a, b), 1e-10);
    EXPECT_NEAR(emd(a, b, EmdMode::kExact).value, emd(b, a, EmdMode::kExact).value, 1e-12);
  }
}

TEST(Emd, ApproxWithinTwoPercentAt256) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto a = random_cloud(256, s), b = random_cloud(256, s + 77);
    const double exact = emd(a, b, EmdMode::kExact).value;
    const double approx = emd(a, b, EmdMode::kApprox).value;
    EXPECT_GE(approx, exact - 1e-12);
    EXPECT_LE(std::abs(approx - exact) / exact, 0.02);
  }
}

TEST(Emd, UnequalCountsAreResampled) {
  const auto a = random_cloud(20, 1), b = random_cloud(12, 2);
  const auto r = emd(a, b, EmdMode::kExact, 5);
  EXPECT_TRUE(r.resampled);
  EXPECT_EQ(r.points, 12u);
  EXPECT_EQ(r.value, emd(a, b, EmdMode::kExact, 5).value);
  EXPECT_THROW(emd(random_cloud(600, 1), random_cloud(600, 2), EmdMode::kExact), std::invalid_argument);
}

TEST(Assignment, HungarianAndAuctionAgree) {
  Rng rng(17);
  const std::size_t n = 30;
  std::vector<double> cost(n * n);
  for (auto& c : cost) c = rng.uniform(0, 10);
  const auto h = hungarian(cost, n);
  const auto a = auction(cost, n, 1e-7);
  EXPECT_NEAR(h.total_cost, a.total_cost, n * 1e-6 * 10);
  std::vector<std::size_t> cols = h.row_to_col;
  std::sort(cols.begin(), cols.end());
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(cols[i], i);
}

TEST(FScore, Examples) {
  const auto c = random_cloud(25, 3);
  EXPECT_EQ(fscore(c, c, 0.001), 100.0);
  std::vector<double> far(c.vec());
  for (auto& v : far) v += 10.0;
  EXPECT_EQ(fscore(c, PointCloud(far), 0.001), 0.0);

  // pred = ref plus one outlier, n_ref = 9: P = 90, R = 100.
  const auto ref = random_cloud(9, 5);
  std::vector<double> pred(ref.vec());
  pred.insert(pred.end(), {50.0, 50.0, 50.0});
  EXPECT_NEAR(fscore(PointCloud(pred), ref, 0.001), 2 * 90.0 * 100.0 / 190.0, 1e-12);
  EXPECT_NEAR(fscore(PointCloud(pred), ref, 0.001), 94.7368, 1e-4);
}

TEST(FScore, ThresholdOnSquaredDistance) {
  const std::vector<Point3> a{{0, 0, 0}}, b{{0.03, 0, 0}};
  // 0.03^2 = 0.0009 <= 0.001 although 0.03 > 0.001.
  EXPECT_EQ(fscore(PointCloud::from_points(a), PointCloud::from_points(b), 0.001), 100.0);
}

TEST(FScore, MonotoneInTau) {
  const auto a = random_cloud(100, 1), b = random_cloud(100, 2);
  double prev = 0.0;
  for (double tau : {1e-4, 1e-3, 1e-2, 0.05, 0.1, 1.0}) {
    const double f = fscore(a, b, tau);
    EXPECT_GE(f, prev);
    prev = f;
  }
}

TEST(EvaluatePair, IdenticalAndScaled) {
  const auto c = random_cloud(64, 12);
  const auto r = evaluate_pair(c, c);
  EXPECT_EQ(r.cd_scaled, 0.0);
  EXPECT_EQ(r.emd_scaled, 0.0);
  EXPECT_EQ(r.f1, 100.0);
  const std::vector<Point3> a{{0, 0, 0}, {1, 0, 0}}, b{{0.5, 0, 0}, {1.5, 0, 0}};
  const auto s = evaluate_pair(PointCloud::from_points(a), PointCloud::from_points(b));
  EXPECT_NEAR(s.emd_scaled, 50.0, 1e-12);
  EXPECT_NEAR(s.cd_scaled, 50.0, 1e-12);  // 0.25 per direction
}

// Pinned on first run; guards against silent metric changes.
TEST(EvaluatePair, RegressionFixture) {
  const auto a = random_cloud(128, 2024), b = random_cloud(128, 2025);
  EvalOptions o;
  o.tau = 0.05;
  const auto r = evaluate_pair(a, b, o);
  EXPECT_NEAR(r.cd_scaled, 13.101099429331, 1e-9);
  EXPECT_NEAR(r.emd_scaled, 31.206224949802, 1e-9);
  EXPECT_NEAR(r.f1, 45.619658119658, 1e-9);
  EXPECT_FALSE(r.emd_resampled);
}
