#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clusmfl/cluster_pool.hpp"
#include "clusmfl/instance.hpp"
#include "clusmfl/matrix.hpp"
#include "clusmfl/model.hpp"

namespace clusmfl {

struct LossWeights {
  double lambda1 = 1.0;  // contrastive alignment
  double lambda2 = 1.0;  // modality completion
  double tau = 0.1;      // contrastive temperature

  void validate() const;
};

// Which terms of the client objective are active.
struct ObjectiveTerms {
  bool ce = true;
  bool ctr = false;
  bool mc = false;
};

struct CrossEntropyResult {
  double loss = 0.0;
  Matrix grad;  // w.r.t. logits
  std::vector<double> row_loss;  // unweighted per-row CE
};

// Mean over rows of -log softmax(logits)[label].
CrossEntropyResult cross_entropy(const Matrix& logits, std::span<const int> labels);

// sum_r weights[r] * CE_r; the gradient rows are scaled the same way.
CrossEntropyResult weighted_cross_entropy(const Matrix& logits, std::span<const int> labels,
                                          std::span<const double> weights);

// Local embeddings followed by every pool center of the modality, label by
// label. Only the local rows are trainable.
struct AugmentedBatch {
  Matrix embeddings;
  std::vector<int> labels;
  std::vector<bool> trainable;

  std::size_t trainable_count() const;
};

AugmentedBatch build_augmented_batch(const Matrix& embeddings, std::span<const int> labels,
                                     const ClusterPool& pool, Modality modality);

struct ContrastiveResult {
  double loss = 0.0;
  Matrix grad;  // same shape as the batch, zero on non-trainable rows
  std::size_t anchors = 0;  // anchors with at least one positive
};

// Supervised contrastive loss over cosine similarities at temperature tau.
// Anchors without a same-label partner are left out of the mean; if none
// remain the loss is 0. A zero row has similarity 0 with everything.
ContrastiveResult supervised_contrastive(const AugmentedBatch& batch, double tau);

// (n_pet * L_pet + n_mri * L_mri) / (n_pet + n_mri). Throws InvalidInput if
// both counts are zero.
double contrastive_combined(double loss_pet, std::size_t n_pet, double loss_mri,
                            std::size_t n_mri);

struct CombinedContrastive {
  double loss = 0.0;
  double loss_pet = 0.0;
  double loss_mri = 0.0;
  Matrix grad_pet;
  Matrix grad_mri;
};

// Both modality terms with their pool augmentation, combined by batch size.
CombinedContrastive contrastive_combined(const Matrix& z_pet, std::span<const int> y_pet,
                                         const Matrix& z_mri, std::span<const int> y_mri,
                                         const ClusterPool* pool, double tau);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double ctr = 0.0;
  double mc = 0.0;
  std::size_t mc_covered = 0;  // single-modality instances with a proxy pool
  std::size_t mc_skipped = 0;  // single-modality instances without one
};

struct LossResult {
  LossBreakdown parts;
  MultimodalModel grads;
};

// CE over zero-fill predictions + lambda1 * contrastive + lambda2 * mean
// modality-completion loss over the batch's single-modality instances.
// Terms that are switched off or carry a zero weight contribute nothing.
LossResult overall_loss(const MultimodalModel& model, std::span<const Instance> batch,
                        const ClusterPool* pool, const LossWeights& weights,
                        const ObjectiveTerms& terms);

// Size-weighted CE of one single-modality instance with each pool center of
// the missing modality (same label) as proxy. Returns zero loss with
// mc_skipped = 1 if the pool has no such centers.
LossResult modality_completion(const MultimodalModel& model, const Instance& instance,
                               const ClusterPool& pool);

}  // namespace clusmfl
