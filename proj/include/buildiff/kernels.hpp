#pragma once

// Dense inner loops used by training, sampling and evaluation.
//
// Every kernel exists twice: `serial::` runs on one thread and is the
// reference, `parallel::` splits the outer loop across OpenMP threads. Each
// output element is produced by exactly one thread with the same summation
// order as the serial loop, so the two agree bitwise. The matmuls use small
// register tiles but still sum over the inner index in ascending order, which
// is what a naive triple loop does.

#include <cstddef>
#include <cstdint>
#include <span>

namespace buildiff::kernels {

struct NearestHit {
  std::size_t index = 0;
  double sq_dist = 0.0;
};

namespace serial {

// C(m x n) = A(m x k) * B(k x n), row-major. C is overwritten.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
// C(m x k) += G(m x n) * B(k x n)^T
void matmul_add_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
// C(k x n) += A(m x k)^T * G(m x n)
void matmul_add_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);

// For each query (xyz triple) the nearest reference point by squared
// Euclidean distance; ties resolve to the lowest reference index.
void nearest(std::span<const double> queries, std::span<const double> refs,
             std::span<NearestHit> out);

// Row-major (na x nb) Euclidean distance matrix between xyz triples.
void distance_matrix(std::span<const double> a, std::span<const double> b,
                     std::span<double> out);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_add_bt(std::span<const double> g, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_add_at(std::span<const double> a, std::span<const double> g, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void nearest(std::span<const double> queries, std::span<const double> refs,
             std::span<NearestHit> out);
void distance_matrix(std::span<const double> a, std::span<const double> b,
                     std::span<double> out);

}  // namespace parallel

// Default dispatch used by the library (the parallel variants).
using parallel::distance_matrix;
using parallel::matmul;
using parallel::matmul_add_at;
using parallel::matmul_add_bt;
using parallel::nearest;

// Number of nearest-neighbour queries answered so far (all kernels plus the
// k-d tree). Used to verify that zero-weight loss terms are skipped.
std::uint64_t nn_query_count();
void add_nn_queries(std::uint64_t n);

}  // namespace buildiff::kernels
