#include "buildiff/assignment.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace buildiff {

namespace {

void check_square(std::span<const double> cost, std::size_t n, const char* who) {
  if (n == 0) throw std::invalid_argument(std::string(who) + ": empty problem");
  if (cost.size() != n * n)
    throw std::invalid_argument(std::string(who) + ": cost matrix is not n x n");
}

double total(std::span<const double> cost, std::size_t n, const std::vector<std::size_t>& r2c) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += cost[i * n + r2c[i]];
  return s;
}

}  // namespace

Assignment hungarian(std::span<const double> cost, std::size_t n) {
  check_square(cost, n, "hungarian");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.row_to_col[match[j] - 1] = j - 1;
  out.total_cost = total(cost, n, out.row_to_col);
  return out;
}

Assignment auction(std::span<const double> cost, std::size_t n, double rel_eps) {
  check_square(cost, n, "auction");
  if (!(rel_eps > 0.0)) throw std::invalid_argument("auction: rel_eps must be positive");
  const double max_cost = *std::max_element(cost.begin(), cost.end());
  if (max_cost <= 0.0) {
    Assignment out;
    for (std::size_t i = 0; i < n; ++i) out.row_to_col.push_back(i);
    out.total_cost = total(cost, n, out.row_to_col);
    return out;
  }
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  const double final_eps = rel_eps * max_cost;
  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n), r2c(n);
  double eps = std::max(final_eps, max_cost / 4.0);
  while (true) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::fill(r2c.begin(), r2c.end(), kNone);
    std::vector<std::size_t> queue(n);
    for (std::size_t i = 0; i < n; ++i) queue[i] = n - 1 - i;
    while (!queue.empty()) {
      const std::size_t i = queue.back();
      queue.pop_back();
      // Maximize value = -cost - price.
      double best = -std::numeric_limits<double>::infinity();
      double second = best;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double val = -cost[i * n + j] - price[j];
        if (val > best) {
          second = best;
          best = val;
          best_j = j;
        } else if (val > second) {
          second = val;
        }
      }
      const double increment = (n == 1 ? 0.0 : best - second) + eps;
      price[best_j] += increment;
      if (owner[best_j] != kNone) {
        r2c[owner[best_j]] = kNone;
        queue.push_back(owner[best_j]);
      }
      owner[best_j] = i;
      r2c[i] = best_j;
    }
    if (eps <= final_eps) break;
    eps = std::max(final_eps, eps / 5.0);
  }
  Assignment out;
  out.row_to_col = std::move(r2c);
  out.total_cost = total(cost, n, out.row_to_col);
  return out;
}

}  // namespace buildiff
