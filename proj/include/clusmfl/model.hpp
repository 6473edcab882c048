#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "clusmfl/instance.hpp"
#include "clusmfl/matrix.hpp"
#include "clusmfl/mlp.hpp"
#include "clusmfl/random.hpp"

namespace clusmfl {

struct ModelDims {
  std::size_t input_dim = 90;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t classifier_hidden = 32;
  std::size_t num_classes = 3;
};

// Two modality encoders and a classifier over [z_PET, z_MRI]. The PET
// embedding always occupies the first embed_dim classifier inputs.
struct MultimodalModel {
  MlpParams enc_pet;
  MlpParams enc_mri;
  MlpParams classifier;
  std::size_t embed_dim = 0;

  MlpParams& encoder(Modality m) { return m == Modality::kPet ? enc_pet : enc_mri; }
  const MlpParams& encoder(Modality m) const {
    return m == Modality::kPet ? enc_pet : enc_mri;
  }
  std::size_t num_classes() const { return classifier.out_dim(); }
  std::size_t parameter_count() const {
    return enc_pet.parameter_count() + enc_mri.parameter_count() +
           classifier.parameter_count();
  }
  void validate() const;

  friend bool operator==(const MultimodalModel&, const MultimodalModel&) = default;
};

MultimodalModel make_model(const ModelDims& dims, Rng& rng);
MultimodalModel zeros_like(const MultimodalModel& model);

// enc_pet, enc_mri, classifier, each as in flatten(MlpParams).
std::vector<double> flatten(const MultimodalModel& model);
void assign_flat(MultimodalModel& model, std::span<const double> values);
void add_scaled(MultimodalModel& dst, double scale, const MultimodalModel& src);

std::vector<double> encode(const MultimodalModel& model, Modality modality,
                           std::span<const double> x);
Matrix encode_batch(const MultimodalModel& model, Modality modality, const Matrix& x);

// Zero-fill inference: a missing modality's embedding is the zero vector.
// Throws InvalidInput when neither modality is present.
std::vector<double> predict(const MultimodalModel& model, const Instance& instance);
Matrix predict_batch(const MultimodalModel& model, std::span<const Instance> instances);

// Classifier applied to the available embedding with `proxy` in the missing
// slot.
std::vector<double> predict_with_proxy(const MultimodalModel& model,
                                       std::span<const double> available_embedding,
                                       Modality available_modality,
                                       std::span<const double> proxy_center);

// Classifier input rows [pet_slot, mri_slot] for a batch.
Matrix fuse_slots(const Matrix& pet_slot, const Matrix& mri_slot);

// Versioned JSON checkpoint; see README for the layout.
std::string checkpoint_to_json(const MultimodalModel& model);
MultimodalModel checkpoint_from_json(const std::string& text);
void save_checkpoint(const MultimodalModel& model, const std::filesystem::path& path);
MultimodalModel load_checkpoint(const std::filesystem::path& path);

}  // namespace clusmfl
