#pragma once

// Pairwise point-set metrics: Chamfer distance, Earth Mover's Distance and
// F1 at a squared-distance threshold.

#include <cstddef>
#include <cstdint>
#include <string>

#include "buildiff/geometry.hpp"

namespace buildiff {

// Mean squared nearest-neighbour distance a->b plus b->a.
double chamfer(const PointCloud& a, const PointCloud& b);

enum class EmdMode { kExact, kApprox, kAuto };

EmdMode parse_emd_mode(const std::string& s);

// Largest problem the exact solver accepts.
inline constexpr std::size_t kMaxExactEmd = 512;

struct EmdResult {
  double value = 0.0;       // mean Euclidean matched distance
  std::size_t points = 0;   // matched pairs
  bool resampled = false;   // counts differed; both reduced to the smaller count
};

// Unequal counts are reduced to min(count) by seeded uniform subsampling.
EmdResult emd(const PointCloud& a, const PointCloud& b, EmdMode mode = EmdMode::kAuto,
              std::uint64_t seed = 0);

inline constexpr double kDefaultTau = 0.001;

// F1 in percent. A point hits when its squared distance to the nearest point
// of the other cloud is <= tau.
double fscore(const PointCloud& pred, const PointCloud& ref, double tau = kDefaultTau);

struct PairReport {
  double cd_scaled = 0.0;   // CD x 10^2
  double emd_scaled = 0.0;  // EMD x 10^2
  double f1 = 0.0;          // percent
  std::size_t n_pred = 0;
  std::size_t n_ref = 0;
  bool emd_resampled = false;
};

struct EvalOptions {
  EmdMode emd_mode = EmdMode::kAuto;
  double tau = kDefaultTau;
  bool normalize = false;  // map each cloud into [-1,1]^3 first
  std::uint64_t seed = 0;
};

PairReport evaluate_pair(const PointCloud& pred, const PointCloud& ref,
                         const EvalOptions& options = {});

}  // namespace buildiff
