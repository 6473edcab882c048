#pragma once

#include <cstddef>
#include <vector>

#include "clusmfl/matrix.hpp"

namespace clusmfl {

// One flat clustering: cluster id per input point, ids 0..K-1 numbered in
// order of each cluster's smallest member index.
using Partition = std::vector<std::size_t>;

struct FinchResult {
  Partition assignments;           // of the selected level
  Matrix centers;                  // K x d, member means
  std::vector<std::size_t> sizes;  // K
  std::vector<Partition> hierarchy;  // finest first
  std::size_t level = 0;           // index into hierarchy that was exported

  std::size_t num_clusters() const noexcept { return sizes.size(); }
};

// Index of the Euclidean first neighbour of every row; ties go to the
// smallest index and a lone point is its own neighbour.
std::vector<std::size_t> first_neighbors(const Matrix& points);

// Connected components of the first-neighbour graph: i ~ j when
// kappa(i) == j, kappa(j) == i or kappa(i) == kappa(j).
Partition first_neighbor_components(const std::vector<std::size_t>& neighbors);

// Runs FINCH: the first partition from the points, then repeated merging on
// cluster means until one cluster remains or the partition stops changing.
// `level` picks the exported partition (clamped to the coarsest). Throws
// InvalidInput on an empty point set.
FinchResult finch_partition(const Matrix& points, std::size_t level = 0);

// Member means and counts for a given partition.
void cluster_means(const Matrix& points, const Partition& partition, Matrix& centers,
                   std::vector<std::size_t>& sizes);

}  // namespace clusmfl
