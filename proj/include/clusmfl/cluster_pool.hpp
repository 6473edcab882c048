#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "clusmfl/instance.hpp"
#include "clusmfl/matrix.hpp"
#include "clusmfl/model.hpp"

namespace clusmfl {

// Centers and sizes for one (modality, label) pair.
struct ClusterSet {
  Matrix centers;                  // K x d
  std::vector<std::size_t> sizes;  // K
  std::vector<std::size_t> clients;  // K, contributing client per center (pool only)

  std::size_t count() const noexcept { return sizes.size(); }
  bool empty() const noexcept { return sizes.empty(); }
  std::size_t total_size() const noexcept;
};

// What one client uploads: per (modality, label) cluster centers of its own
// embeddings, empty where it has no such data.
struct LocalClusters {
  std::size_t client_id = 0;
  std::size_t embed_dim = 0;
  std::vector<ClusterSet> sets[2];  // [modality][label]

  const ClusterSet& at(Modality m, int label) const;
};

// Server-side concatenation of all clients' clusters, ascending client
// order, each client's internal order preserved.
class ClusterPool {
 public:
  ClusterPool() = default;
  ClusterPool(std::size_t num_classes, std::size_t embed_dim);

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t embed_dim() const noexcept { return embed_dim_; }

  // Empty set for labels the pool has never seen.
  const ClusterSet& at(Modality m, int label) const;
  ClusterSet& mutable_at(Modality m, int label);
  std::size_t total_centers(Modality m) const;
  bool empty() const;

 private:
  std::size_t num_classes_ = 0;
  std::size_t embed_dim_ = 0;
  std::vector<ClusterSet> sets_[2];
};

// Embeds the client's data for every present (modality, label) pair with
// the given model and clusters it with FINCH at `finch_level`.
LocalClusters compute_local_clusters(const MultimodalModel& model,
                                     std::span<const Instance> client_data,
                                     std::size_t client_id, std::size_t num_classes,
                                     std::size_t finch_level = 0);

// Throws ProtocolError on embedding-dimension disagreement.
ClusterPool assemble_global_pool(std::span<const LocalClusters> locals,
                                 std::size_t num_classes, std::size_t embed_dim);

// modality,label,index,client,size,c_0..c_{d-1}
void write_pool_csv(std::ostream& out, const ClusterPool& pool);

}  // namespace clusmfl
