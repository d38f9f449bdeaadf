#include "buildiff/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>
#include <vector>

namespace buildiff::kernels {

namespace {

std::atomic<std::uint64_t> g_nn_queries{0};

// All three products reduce to register tiles
//   out(r, j) (op)= sum over s of x(r, s) * y(s, j),
// with s ascending, so each output element has one fixed summation order no
// matter how the tiles are scheduled.
enum class TileMode {
  kStore,      // out = sum
  kAddSum,     // out += sum
  kAccumulate  // out = ((out + t0) + t1) + ...
};

struct TileArgs {
  const double* x;
  std::size_t x_row, x_step;
  const double* y;
  std::size_t y_step;
  std::size_t len;
  double* out;
  std::size_t out_row;
};

template <std::size_t R, std::size_t J>
inline void tile_fixed(const TileArgs& t, TileMode mode) {
  double acc[R][J];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < J; ++j)
      acc[r][j] = mode == TileMode::kAccumulate ? t.out[r * t.out_row + j] : 0.0;
  for (std::size_t s = 0; s < t.len; ++s) {
    const double* y = t.y + s * t.y_step;
    for (std::size_t r = 0; r < R; ++r) {
      const double xv = t.x[r * t.x_row + s * t.x_step];
      for (std::size_t j = 0; j < J; ++j) acc[r][j] += xv * y[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < J; ++j) {
      double& o = t.out[r * t.out_row + j];
      o = mode == TileMode::kAddSum ? o + acc[r][j] : acc[r][j];
    }
}

inline void tile_any(const TileArgs& t, std::size_t rows, std::size_t cols, TileMode mode) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = mode == TileMode::kAccumulate ? t.out[r * t.out_row + j] : 0.0;
      for (std::size_t s = 0; s < t.len; ++s)
        acc += t.x[r * t.x_row + s * t.x_step] * t.y[s * t.y_step + j];
      double& o = t.out[r * t.out_row + j];
      o = mode == TileMode::kAddSum ? o + acc : acc;
    }
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 4;

// One band of up to kTileRows output rows across all `cols` columns.
inline void band(TileArgs t, std::size_t rows, std::size_t cols, TileMode mode) {
  std::size_t j = 0;
  for (; j + kTileCols <= cols; j += kTileCols) {
    TileArgs u = t;
    u.y += j;
    u.out += j;
    if (rows == kTileRows) tile_fixed<kTileRows, kTileCols>(u, mode);
    else tile_any(u, rows, kTileCols, mode);
  }
  if (j < cols) {
    t.y += j;
    t.out += j;
    tile_any(t, rows, cols - j, mode);
  }
}

std::size_t bands(std::size_t rows) { return (rows + kTileRows - 1) / kTileRows; }
std::size_t band_rows(std::size_t b, std::size_t rows) {
  return std::min(kTileRows, rows - b * kTileRows);
}

// Band b of C = A B.
inline void matmul_band(const double* a, const double* b, double* c, std::size_t bi,
                        std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t i0 = bi * kTileRows;
  band({a + i0 * k, k, 1, b, n, k, c + i0 * n, n}, band_rows(bi, m), n, TileMode::kStore);
}

// Band b of C(m x k) += G B^T, given bt = B^T (n x k).
inline void matmul_bt_band(const double* g, const double* bt, double* c, std::size_t bi,
                           std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t i0 = bi * kTileRows;
  band({g + i0 * n, n, 1, bt, k, n, c + i0 * k, k}, band_rows(bi, m), k, TileMode::kAddSum);
}

// Band b of C(k x n) += A^T G.
inline void matmul_at_band(const double* a, const double* g, double* c, std::size_t bi,
                           std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t p0 = bi * kTileRows;
  band({a + p0, 1, k, g, n, m, c + p0 * n, n}, band_rows(bi, k), n, TileMode::kAccumulate);
}

std::vector<double> transpose(std::span<const double> b, std::size_t k, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  return bt;
}

inline NearestHit nearest_one(const double* q, std::span<const double> refs) {
  NearestHit best{0, std::numeric_limits<double>::infinity()};
  const std::size_t nr = refs.size() / 3;
  for (std::size_t j = 0; j < nr; ++j) {
    const double dx = q[0] - refs[3 * j];
    const double dy = q[1] - refs[3 * j + 1];
    const double dz = q[2] - refs[3 * j + 2];
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best.sq_dist) best = {j, d};
  }
  return best;
}

inline void distance_row(const double* p, std::span<const double> b, double* out) {
  const std::size_t nb = b.size() / 3;
  for (std::size_t j = 0; j < nb; ++j) {
    const double dx = p[0] - b[3 * j];
    const double dy = p[1] - b[3 * j + 1];
    const double dz = p[2] - b[3 * j + 2];
    out[j] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
}

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace

std::uint64_t nn_query_count() { return g_nn_queries.load(); }
void add_nn_queries(std::uint64_t n) { g_nn_queries.fetch_add(n); }

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
  for (std::size_t bi = 0; bi < bands(m); ++bi) matmul_band(a.data(), b.data(), c.data(), bi, m, k, n);
}

void matmul_add_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const auto bt = transpose(b, k, n);
  for (std::size_t bi = 0; bi < bands(m); ++bi) matmul_bt_band(g.data(), bt.data(), c.data(), bi, m, k, n);
}

void matmul_add_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t bi = 0; bi < bands(k); ++bi) matmul_at_band(a.data(), g.data(), c.data(), bi, m, k, n);
}

void nearest(std::span<const double> queries, std::span<const double> refs,
             std::span<NearestHit> out) {
  const std::size_t nq = queries.size() / 3;
  for (std::size_t i = 0; i < nq; ++i) out[i] = nearest_one(&queries[3 * i], refs);
  add_nn_queries(nq);
}

void distance_matrix(std::span<const double> a, std::span<const double> b,
                     std::span<double> out) {
  const std::size_t na = a.size() / 3;
  const std::size_t nb = b.size() / 3;
  for (std::size_t i = 0; i < na; ++i) distance_row(&a[3 * i], b, &out[i * nb]);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
  const auto nb = static_cast<std::ptrdiff_t>(bands(m));
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::ptrdiff_t bi = 0; bi < nb; ++bi)
    matmul_band(a.data(), b.data(), c.data(), static_cast<std::size_t>(bi), m, k, n);
}

void matmul_add_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const auto bt = transpose(b, k, n);
  const auto nb = static_cast<std::ptrdiff_t>(bands(m));
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::ptrdiff_t bi = 0; bi < nb; ++bi)
    matmul_bt_band(g.data(), bt.data(), c.data(), static_cast<std::size_t>(bi), m, k, n);
}

void matmul_add_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const auto nb = static_cast<std::ptrdiff_t>(bands(k));
#pragma omp parallel for schedule(static) if (m * k * n > kParallelThreshold)
  for (std::ptrdiff_t bi = 0; bi < nb; ++bi)
    matmul_at_band(a.data(), g.data(), c.data(), static_cast<std::size_t>(bi), m, k, n);
}

void nearest(std::span<const double> queries, std::span<const double> refs,
             std::span<NearestHit> out) {
  const auto nq = static_cast<std::ptrdiff_t>(queries.size() / 3);
#pragma omp parallel for schedule(static) if (queries.size() * refs.size() > 9 * kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < nq; ++i) out[i] = nearest_one(&queries[3 * i], refs);
  add_nn_queries(static_cast<std::uint64_t>(nq));
}

void distance_matrix(std::span<const double> a, std::span<const double> b,
                     std::span<double> out) {
  const auto na = static_cast<std::ptrdiff_t>(a.size() / 3);
  const std::size_t nb = b.size() / 3;
#pragma omp parallel for schedule(static) if (a.size() * b.size() > 9 * kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < na; ++i) distance_row(&a[3 * i], b, &out[i * nb]);
}

}  // namespace parallel

}  // namespace buildiff::kernels
