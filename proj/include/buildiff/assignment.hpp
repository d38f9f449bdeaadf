#pragma once

// Linear assignment on dense square cost matrices (row-major, n x n).

#include <cstddef>
#include <span>
#include <vector>

namespace buildiff {

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double total_cost = 0.0;
};

// Exact minimum-cost perfect matching (Hungarian method with potentials),
// O(n^3).
Assignment hungarian(std::span<const double> cost, std::size_t n);

// Forward auction with epsilon scaling. Always returns a perfect matching
// whose total cost is within n * final_eps of the optimum, where
// final_eps = rel_eps * max(cost).
Assignment auction(std::span<const double> cost, std::size_t n, double rel_eps = 1e-4);

}  // namespace buildiff
