#include "clusmfl/finch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clusmfl/kernels.hpp"

namespace clusmfl {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

// Renumbers ids so cluster ids follow first appearance.
Partition canonical(const std::vector<std::size_t>& roots) {
  Partition out(roots.size());
  std::vector<std::size_t> remap(roots.size(), roots.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < roots.size(); ++i) {
    auto& id = remap[roots[i]];
    if (id == roots.size()) id = next++;
    out[i] = id;
  }
  return out;
}

std::size_t count_clusters(const Partition& p) {
  return p.empty() ? 0 : *std::max_element(p.begin(), p.end()) + 1;
}

}  // namespace

std::vector<std::size_t> first_neighbors(const Matrix& points) {
  for (double v : points.values()) {
    if (!std::isfinite(v)) throw NumericError("first_neighbors: non-finite coordinate");
  }
  return kernels::nearest_neighbors(points);
}

Partition first_neighbor_components(const std::vector<std::size_t>& neighbors) {
  const std::size_t n = neighbors.size();
  DisjointSets sets(n);
  // kappa(i) == j and kappa(j) == i both give the edge (i, kappa(i));
  // kappa(i) == kappa(j) puts i and j in the component of their shared
  // neighbour, which the first edge already covers.
  for (std::size_t i = 0; i < n; ++i) sets.unite(i, neighbors[i]);
  std::vector<std::size_t> roots(n);
  for (std::size_t i = 0; i < n; ++i) roots[i] = sets.find(i);
  return canonical(roots);
}

void cluster_means(const Matrix& points, const Partition& partition, Matrix& centers,
                   std::vector<std::size_t>& sizes) {
  if (partition.size() != points.rows()) throw ShapeError("cluster_means: partition length");
  const std::size_t k = count_clusters(partition);
  centers = Matrix(k, points.cols());
  sizes.assign(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto c = centers.row(partition[i]);
    auto p = points.row(i);
    for (std::size_t t = 0; t < p.size(); ++t) c[t] += p[t];
    ++sizes[partition[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    const double inv = 1.0 / static_cast<double>(sizes[c]);
    for (double& v : centers.row(c)) v *= inv;
  }
}

FinchResult finch_partition(const Matrix& points, std::size_t level) {
  if (points.rows() == 0) throw InvalidInput("finch_partition: empty input");

  FinchResult result;
  result.hierarchy.push_back(first_neighbor_components(first_neighbors(points)));

  Matrix centers;
  std::vector<std::size_t> sizes;
  while (true) {
    const Partition& current = result.hierarchy.back();
    const std::size_t k = count_clusters(current);
    if (k <= 1) break;
    cluster_means(points, current, centers, sizes);
    const Partition merge = first_neighbor_components(first_neighbors(centers));
    if (count_clusters(merge) == k) break;
    Partition next(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) next[i] = merge[current[i]];
    result.hierarchy.push_back(canonical(next));
  }

  result.level = std::min(level, result.hierarchy.size() - 1);
  result.assignments = result.hierarchy[result.level];
  cluster_means(points, result.assignments, result.centers, result.sizes);
  return result;
}

}  // namespace clusmfl
