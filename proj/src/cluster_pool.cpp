#include "clusmfl/cluster_pool.hpp"

#include <array>
#include <charconv>
#include <numeric>
#include <ostream>

#include "clusmfl/finch.hpp"

namespace clusmfl {

namespace {

const ClusterSet& empty_set() {
  static const ClusterSet kEmpty;
  return kEmpty;
}

}  // namespace

std::size_t ClusterSet::total_size() const noexcept {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

const ClusterSet& LocalClusters::at(Modality m, int label) const {
  const auto& v = sets[static_cast<int>(m)];
  if (label < 0 || static_cast<std::size_t>(label) >= v.size()) return empty_set();
  return v[static_cast<std::size_t>(label)];
}

ClusterPool::ClusterPool(std::size_t num_classes, std::size_t embed_dim)
    : num_classes_(num_classes), embed_dim_(embed_dim) {
  for (auto& s : sets_) {
    s.resize(num_classes);
    for (auto& set : s) set.centers = Matrix(0, embed_dim);
  }
}

const ClusterSet& ClusterPool::at(Modality m, int label) const {
  const auto& v = sets_[static_cast<int>(m)];
  if (label < 0 || static_cast<std::size_t>(label) >= v.size()) return empty_set();
  return v[static_cast<std::size_t>(label)];
}

ClusterSet& ClusterPool::mutable_at(Modality m, int label) {
  auto& v = sets_[static_cast<int>(m)];
  if (label < 0 || static_cast<std::size_t>(label) >= v.size()) {
    throw InvalidInput("ClusterPool: label out of range");
  }
  return v[static_cast<std::size_t>(label)];
}

std::size_t ClusterPool::total_centers(Modality m) const {
  std::size_t n = 0;
  for (const auto& s : sets_[static_cast<int>(m)]) n += s.count();
  return n;
}

bool ClusterPool::empty() const {
  return total_centers(Modality::kPet) == 0 && total_centers(Modality::kMri) == 0;
}

LocalClusters compute_local_clusters(const MultimodalModel& model,
                                     std::span<const Instance> client_data,
                                     std::size_t client_id, std::size_t num_classes,
                                     std::size_t finch_level) {
  LocalClusters out;
  out.client_id = client_id;
  out.embed_dim = model.embed_dim;
  for (Modality m : kModalities) {
    const auto& enc = model.encoder(m);
    auto& sets = out.sets[static_cast<int>(m)];
    sets.resize(num_classes);
    for (std::size_t j = 0; j < num_classes; ++j) {
      Matrix x(0, enc.in_dim());
      for (const auto& inst : client_data) {
        if (inst.label == static_cast<int>(j) && inst.has(m)) x.append_row(inst.features(m));
      }
      if (x.rows() == 0) {
        sets[j].centers = Matrix(0, model.embed_dim);
        continue;
      }
      FinchResult fr = finch_partition(mlp_apply(enc, x), finch_level);
      sets[j].centers = std::move(fr.centers);
      sets[j].sizes = std::move(fr.sizes);
      sets[j].clients.assign(sets[j].sizes.size(), client_id);
    }
  }
  return out;
}

ClusterPool assemble_global_pool(std::span<const LocalClusters> locals,
                                 std::size_t num_classes, std::size_t embed_dim) {
  ClusterPool pool(num_classes, embed_dim);
  for (const auto& local : locals) {
    for (Modality m : kModalities) {
      for (std::size_t j = 0; j < num_classes; ++j) {
        const ClusterSet& src = local.at(m, static_cast<int>(j));
        if (src.empty()) continue;
        if (src.centers.cols() != embed_dim) {
          throw ProtocolError("assemble_global_pool: client " + std::to_string(local.client_id) +
                              " sent centers of dimension " +
                              std::to_string(src.centers.cols()) + ", expected " +
                              std::to_string(embed_dim));
        }
        if (src.centers.rows() != src.sizes.size()) {
          throw ProtocolError("assemble_global_pool: centers and sizes differ in count");
        }
        ClusterSet& dst = pool.mutable_at(m, static_cast<int>(j));
        for (std::size_t k = 0; k < src.count(); ++k) {
          dst.centers.append_row(src.centers.row(k));
          dst.sizes.push_back(src.sizes[k]);
          dst.clients.push_back(local.client_id);
        }
      }
    }
  }
  return pool;
}

void write_pool_csv(std::ostream& out, const ClusterPool& pool) {
  out << "modality,label,index,client,size";
  for (std::size_t t = 0; t < pool.embed_dim(); ++t) out << ",c_" << t;
  out << '\n';
  std::array<char, 32> buf{};
  for (Modality m : kModalities) {
    for (std::size_t j = 0; j < pool.num_classes(); ++j) {
      const auto& set = pool.at(m, static_cast<int>(j));
      for (std::size_t k = 0; k < set.count(); ++k) {
        out << to_string(m) << ',' << j << ',' << k << ',' << set.clients[k] << ','
            << set.sizes[k];
        for (double v : set.centers.row(k)) {
          const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
          out << ',';
          out.write(buf.data(), res.ptr - buf.data());
        }
        out << '\n';
      }
    }
  }
}

}  // namespace clusmfl
