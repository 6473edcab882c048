#pragma once

// Dense kernels used by the MLP, FINCH and aggregation code. Every kernel
// has a serial reference and an OpenMP version. Both accumulate each output
// element in the same order, so their results are bit-identical regardless of
// thread count; the unit tests hold them to exact equality.

#include <cstddef>
#include <span>
#include <vector>

#include "clusmfl/matrix.hpp"

namespace clusmfl::kernels {

namespace serial {

// C = A * B^T, A is m x k, B is n x k.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// C = A * B, A is m x k, B is k x n.
Matrix matmul_nn(const Matrix& a, const Matrix& b);
// C = A^T * B, A is k x m, B is k x n.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// D(i, j) = squared Euclidean distance between rows i and j.
Matrix pairwise_sq_distances(const Matrix& points);
// For each row, index of the nearest other row (ties -> smallest index).
// A single row maps to itself.
std::vector<std::size_t> nearest_neighbors(const Matrix& points);
// out[e] = sum_i weights[i] * inputs[i][e], summed in ascending i.
void weighted_sum(std::span<const std::span<const double>> inputs,
                  std::span<const double> weights, std::span<double> out);

}  // namespace serial

namespace omp {

Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix pairwise_sq_distances(const Matrix& points);
std::vector<std::size_t> nearest_neighbors(const Matrix& points);
void weighted_sum(std::span<const std::span<const double>> inputs,
                  std::span<const double> weights, std::span<double> out);

}  // namespace omp

// Default entry points; these use the OpenMP versions, which fall back to a
// single thread for small problems or when already inside a parallel region.
using omp::matmul_nn;
using omp::matmul_nt;
using omp::matmul_tn;
using omp::nearest_neighbors;
using omp::pairwise_sq_distances;
using omp::weighted_sum;

}  // namespace clusmfl::kernels
