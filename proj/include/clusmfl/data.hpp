#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "clusmfl/instance.hpp"

namespace clusmfl {

// ---------------------------------------------------------------------------
// Dataset CSV
//
//   id,label,p_0,...,p_{D-1},m_0,...,m_{D-1}
//
// A missing modality leaves all of its D cells empty. Labels are 0-based.
// ---------------------------------------------------------------------------

std::vector<Instance> read_csv(std::istream& in);
std::vector<Instance> load_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, std::span<const Instance> data, std::size_t feature_dim);
void save_csv(const std::filesystem::path& path, std::span<const Instance> data,
              std::size_t feature_dim);

// Feature width of a dataset (first present vector); 0 when empty.
std::size_t feature_dim_of(std::span<const Instance> data);
std::size_t num_classes_of(std::span<const Instance> data);

// ---------------------------------------------------------------------------
// Synthetic ROI-like data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::vector<std::size_t> class_counts = {297, 451, 167};
  std::size_t feature_dim = 90;
  double separation = 2.0;  // class-mean spread, in noise units
  double noise = 1.0;       // within-class standard deviation
  double coupling = 0.7;    // share of the within-class noise common to both modalities
  std::uint64_t seed = 0;

  void validate() const;
};

// Every class gets a latent mean; each modality is a fixed per-ROI affine
// map of (mean + noise), where the noise mixes a shared component (weight
// `coupling`) with a modality-private one. All instances are multimodal.
std::vector<Instance> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct Fold {
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// kCrossValidation: test = one fold (1/k), train = the rest.
// kLiteral: train = one fold, test = the rest.
enum class SplitReading { kCrossValidation, kLiteral };

// Label-stratified k-fold split. Throws InvalidInput if a class has fewer
// than k members or the data is empty.
std::vector<Fold> stratified_folds(std::span<const Instance> data, std::size_t k,
                                   std::uint64_t seed,
                                   SplitReading reading = SplitReading::kCrossValidation);

Fold split_train_test(std::span<const Instance> data, std::uint64_t seed, std::size_t fold = 0,
                      std::size_t k = 5,
                      SplitReading reading = SplitReading::kCrossValidation);

enum class InstanceType { kPetOnly, kMriOnly, kMultimodal };

InstanceType type_of(const Instance& inst);

// Spreads `counts[t]` items of each type over sum(counts) positions so every
// prefix stays as close to the target proportions as possible.
std::vector<InstanceType> spread_types(std::size_t pet_only, std::size_t mri_only,
                                       std::size_t multimodal);

// Makes floor(n/3) test instances PET-only, floor(n/3) MRI-only and the rest
// multimodal, stratified by label. Input instances must be multimodal.
std::vector<Instance> apply_test_modality_mix(std::vector<Instance> test, std::uint64_t seed);

struct PartitionSpec {
  std::size_t num_clients = 10;
  double alpha_pet = 0.0;  // share of PET-only clients
  double alpha_mri = 0.0;  // share of MRI-only clients
  double beta_pet = 0.0;   // share of PET-only instances on multimodal clients
  double beta_mri = 0.0;   // share of MRI-only instances on multimodal clients

  static PartitionSpec symmetric(std::size_t n, double alpha, double beta) {
    return {n, alpha, alpha, beta, beta};
  }

  std::size_t pet_only_clients() const;
  std::size_t mri_only_clients() const;
  void validate() const;
};

// floor(x) that does not lose an integer to representation error
// (0.4 * 10 -> 4, not 3).
std::size_t floor_count(double share, std::size_t n);

// Label-stratified equal shards; the first floor(alpha_pet*N) clients become
// PET-only, the next floor(alpha_mri*N) MRI-only, the rest multimodal with
// floor(beta*n) PET-only / MRI-only instances each.
std::vector<std::vector<Instance>> partition_clients(std::span<const Instance> train,
                                                     const PartitionSpec& spec,
                                                     std::uint64_t seed);

}  // namespace clusmfl
