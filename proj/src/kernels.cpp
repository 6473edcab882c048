#include "clusmfl/kernels.hpp"

#include <limits>

namespace clusmfl::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
}
void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul_nn: inner dimensions differ");
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
}
void check_weighted(std::span<const std::span<const double>> inputs,
                    std::span<const double> weights, std::span<double> out) {
  if (inputs.size() != weights.size()) {
    throw ShapeError("weighted_sum: one weight per input required");
  }
  for (const auto& in : inputs) {
    if (in.size() != out.size()) throw ShapeError("weighted_sum: length mismatch");
  }
}

// Row kernels shared by both variants so the arithmetic is literally the same.
inline void nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k = a.cols();
  const double* ar = a.row(i).data();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* br = b.row(j).data();
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) acc += ar[t] * br[t];
    c(i, j) = acc;
  }
}

inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* cr = c.row(i).data();
  const std::size_t n = b.cols();
  for (std::size_t t = 0; t < a.cols(); ++t) {
    const double at = a(i, t);
    const double* br = b.row(t).data();
    for (std::size_t j = 0; j < n; ++j) cr[j] += at * br[j];
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  double* cr = c.row(i).data();
  const std::size_t n = b.cols();
  for (std::size_t t = 0; t < a.rows(); ++t) {
    const double at = a(t, i);
    const double* br = b.row(t).data();
    for (std::size_t j = 0; j < n; ++j) cr[j] += at * br[j];
  }
}

inline void dist_row(const Matrix& p, Matrix& d, std::size_t i) {
  const double* pi = p.row(i).data();
  for (std::size_t j = 0; j < p.rows(); ++j) {
    const double* pj = p.row(j).data();
    double acc = 0.0;
    for (std::size_t t = 0; t < p.cols(); ++t) {
      const double diff = pi[t] - pj[t];
      acc += diff * diff;
    }
    d(i, j) = acc;
  }
}

inline std::size_t nearest_of(const Matrix& p, std::size_t i) {
  const std::size_t n = p.rows();
  if (n == 1) return i;
  const double* pi = p.row(i).data();
  std::size_t best = n;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    const double* pj = p.row(j).data();
    double acc = 0.0;
    for (std::size_t t = 0; t < p.cols(); ++t) {
      const double diff = pi[t] - pj[t];
      acc += diff * diff;
    }
    // strict '<' keeps the smallest index among ties
    if (best == n || acc < best_d) {
      best = j;
      best_d = acc;
    }
  }
  return best;
}

inline double weighted_elem(std::span<const std::span<const double>> inputs,
                            std::span<const double> weights, std::size_t e) {
  double acc = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) acc += weights[i] * inputs[i][e];
  return acc;
}

}  // namespace

namespace serial {

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) nt_row(a, b, c, i);
  return c;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, c, i);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) tn_row(a, b, c, i);
  return c;
}

Matrix pairwise_sq_distances(const Matrix& points) {
  Matrix d(points.rows(), points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) dist_row(points, d, i);
  return d;
}

std::vector<std::size_t> nearest_neighbors(const Matrix& points) {
  std::vector<std::size_t> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) out[i] = nearest_of(points, i);
  return out;
}

void weighted_sum(std::span<const std::span<const double>> inputs,
                  std::span<const double> weights, std::span<double> out) {
  check_weighted(inputs, weights, out);
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = weighted_elem(inputs, weights, e);
}

}  // namespace serial

namespace omp {

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix c(a.rows(), b.rows());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool par = a.rows() * b.rows() * a.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nt_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix c(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool par = a.rows() * b.cols() * a.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix c(a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
  const bool par = a.rows() * b.cols() * a.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) tn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}

Matrix pairwise_sq_distances(const Matrix& points) {
  Matrix d(points.rows(), points.rows());
  const auto rows = static_cast<std::ptrdiff_t>(points.rows());
  const bool par = points.rows() * points.rows() * points.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) dist_row(points, d, static_cast<std::size_t>(i));
  return d;
}

std::vector<std::size_t> nearest_neighbors(const Matrix& points) {
  std::vector<std::size_t> out(points.rows());
  const auto rows = static_cast<std::ptrdiff_t>(points.rows());
  const bool par = points.rows() * points.rows() * points.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    out[static_cast<std::size_t>(i)] = nearest_of(points, static_cast<std::size_t>(i));
  }
  return out;
}

void weighted_sum(std::span<const std::span<const double>> inputs,
                  std::span<const double> weights, std::span<double> out) {
  check_weighted(inputs, weights, out);
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  const bool par = out.size() * inputs.size() >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    out[static_cast<std::size_t>(e)] =
        weighted_elem(inputs, weights, static_cast<std::size_t>(e));
  }
}

}  // namespace omp

}  // namespace clusmfl::kernels
