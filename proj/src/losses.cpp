#include "clusmfl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clusmfl/kernels.hpp"

namespace clusmfl {

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw InvalidInput("tau must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw InvalidInput("lambda1 and lambda2 must be non-negative");
  }
}

CrossEntropyResult weighted_cross_entropy(const Matrix& logits, std::span<const int> labels,
                                          std::span<const double> weights) {
  if (logits.rows() == 0) throw InvalidInput("cross_entropy: empty batch");
  if (labels.size() != logits.rows() || weights.size() != logits.rows()) {
    throw ShapeError("cross_entropy: one label and weight per row required");
  }
  const std::size_t classes = logits.cols();
  CrossEntropyResult res;
  res.grad = Matrix(logits.rows(), classes);
  res.row_loss.assign(logits.rows(), 0.0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InvalidInput("cross_entropy: label out of range");
    }
    auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double log_norm = mx + std::log(sum);
    res.row_loss[r] = log_norm - z[static_cast<std::size_t>(y)];
    res.loss += weights[r] * res.row_loss[r];
    auto g = res.grad.row(r);
    for (std::size_t c = 0; c < classes; ++c) g[c] = weights[r] * std::exp(z[c] - log_norm);
    g[static_cast<std::size_t>(y)] -= weights[r];
  }
  return res;
}

CrossEntropyResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw InvalidInput("cross_entropy: empty batch");
  const std::vector<double> w(logits.rows(), 1.0 / static_cast<double>(logits.rows()));
  return weighted_cross_entropy(logits, labels, w);
}

std::size_t AugmentedBatch::trainable_count() const {
  return static_cast<std::size_t>(std::count(trainable.begin(), trainable.end(), true));
}

AugmentedBatch build_augmented_batch(const Matrix& embeddings, std::span<const int> labels,
                                     const ClusterPool& pool, Modality modality) {
  if (labels.size() != embeddings.rows()) {
    throw ShapeError("build_augmented_batch: one label per embedding required");
  }
  AugmentedBatch batch;
  batch.embeddings = embeddings;
  batch.labels.assign(labels.begin(), labels.end());
  batch.trainable.assign(embeddings.rows(), true);
  for (std::size_t j = 0; j < pool.num_classes(); ++j) {
    const auto& set = pool.at(modality, static_cast<int>(j));
    if (set.empty()) continue;
    if (set.centers.cols() != embeddings.cols() && embeddings.rows() > 0) {
      throw ShapeError("build_augmented_batch: center dimension differs from embeddings");
    }
    for (std::size_t k = 0; k < set.count(); ++k) {
      batch.embeddings.append_row(set.centers.row(k));
      batch.labels.push_back(static_cast<int>(j));
      batch.trainable.push_back(false);
    }
  }
  return batch;
}

ContrastiveResult supervised_contrastive(const AugmentedBatch& batch, double tau) {
  if (!(tau > 0.0)) throw InvalidInput("supervised_contrastive: tau must be positive");
  const Matrix& z = batch.embeddings;
  const std::size_t n = z.rows();
  const std::size_t d = z.cols();
  if (batch.labels.size() != n || batch.trainable.size() != n) {
    throw ShapeError("supervised_contrastive: labels/mask length mismatch");
  }
  ContrastiveResult res;
  res.grad = Matrix(n, d);
  if (n < 2) return res;

  // Unit rows; zero rows stay zero.
  Matrix u(n, d);
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : z.row(i)) s += v * v;
    norm[i] = std::sqrt(s);
    if (norm[i] > 0.0) {
      for (std::size_t t = 0; t < d; ++t) u(i, t) = z(i, t) / norm[i];
    }
  }
  const Matrix sim = kernels::matmul_nt(u, u);

  std::vector<std::size_t> positives(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i && batch.labels[a] == batch.labels[i]) ++positives[i];
    }
    if (positives[i] > 0) ++res.anchors;
  }
  if (res.anchors == 0) return res;
  const double inv_anchors = 1.0 / static_cast<double>(res.anchors);

  // coef(i, a) = d loss / d sim(i, a)
  Matrix coef(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (positives[i] == 0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i) mx = std::max(mx, sim(i, a) / tau);
    }
    double denom = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a != i) denom += std::exp(sim(i, a) / tau - mx);
    }
    const double log_denom = mx + std::log(denom);
    const double inv_pos = 1.0 / static_cast<double>(positives[i]);
    double pos_sum = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const bool pos = batch.labels[a] == batch.labels[i];
      if (pos) pos_sum += sim(i, a) / tau;
      const double q = std::exp(sim(i, a) / tau - log_denom);
      coef(i, a) = inv_anchors / tau * (q - (pos ? inv_pos : 0.0));
    }
    res.loss += inv_anchors * (log_denom - inv_pos * pos_sum);
  }

  // d loss / d u_i = sum_a (coef(i,a) + coef(a,i)) u_a
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < n; ++a) sym(i, a) = coef(i, a) + coef(a, i);
  }
  const Matrix du = kernels::matmul_nn(sym, u);
  for (std::size_t i = 0; i < n; ++i) {
    if (!batch.trainable[i] || norm[i] == 0.0) continue;
    double proj = 0.0;
    for (std::size_t t = 0; t < d; ++t) proj += u(i, t) * du(i, t);
    for (std::size_t t = 0; t < d; ++t) {
      res.grad(i, t) = (du(i, t) - proj * u(i, t)) / norm[i];
    }
  }
  return res;
}

double contrastive_combined(double loss_pet, std::size_t n_pet, double loss_mri,
                            std::size_t n_mri) {
  if (n_pet + n_mri == 0) throw InvalidInput("contrastive_combined: both modalities empty");
  return (static_cast<double>(n_pet) * loss_pet + static_cast<double>(n_mri) * loss_mri) /
         static_cast<double>(n_pet + n_mri);
}

CombinedContrastive contrastive_combined(const Matrix& z_pet, std::span<const int> y_pet,
                                         const Matrix& z_mri, std::span<const int> y_mri,
                                         const ClusterPool* pool, double tau) {
  const std::size_t n_pet = z_pet.rows();
  const std::size_t n_mri = z_mri.rows();
  if (n_pet + n_mri == 0) throw InvalidInput("contrastive_combined: both modalities empty");
  CombinedContrastive out;
  out.grad_pet = Matrix(n_pet, z_pet.cols());
  out.grad_mri = Matrix(n_mri, z_mri.cols());
  const double total = static_cast<double>(n_pet + n_mri);

  auto one = [&](const Matrix& z, std::span<const int> y, Modality m, double& loss,
                 Matrix& grad) {
    if (z.rows() == 0) return;
    AugmentedBatch batch = pool ? build_augmented_batch(z, y, *pool, m)
                                : AugmentedBatch{z, {y.begin(), y.end()},
                                                 std::vector<bool>(z.rows(), true)};
    ContrastiveResult r = supervised_contrastive(batch, tau);
    loss = r.loss;
    const double w = static_cast<double>(z.rows()) / total;
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t t = 0; t < z.cols(); ++t) grad(i, t) = w * r.grad(i, t);
    }
  };
  one(z_pet, y_pet, Modality::kPet, out.loss_pet, out.grad_pet);
  one(z_mri, y_mri, Modality::kMri, out.loss_mri, out.grad_mri);
  out.loss = contrastive_combined(out.loss_pet, n_pet, out.loss_mri, n_mri);
  return out;
}

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// One classifier input row and where its embedding slots came from.
struct FusedRow {
  std::size_t pet_row = kNone;  // row of Z_PET feeding the PET slot, if any
  std::size_t mri_row = kNone;
  const double* proxy = nullptr;  // pool center filling the other slot, if any
  int label = 0;
  double weight = 0.0;
  bool completion = false;
};

}  // namespace

LossResult overall_loss(const MultimodalModel& model, std::span<const Instance> batch,
                        const ClusterPool* pool, const LossWeights& weights,
                        const ObjectiveTerms& terms) {
  if (batch.empty()) throw InvalidInput("overall_loss: empty batch");
  weights.validate();
  const std::size_t d = model.embed_dim;
  const std::size_t b = batch.size();

  // Encoder forward passes over the rows that carry each modality.
  std::vector<std::size_t> enc_row[2] = {std::vector<std::size_t>(b, kNone),
                                         std::vector<std::size_t>(b, kNone)};
  MlpForward fwd[2];
  std::vector<int> enc_labels[2];
  for (Modality m : kModalities) {
    const int mi = static_cast<int>(m);
    const auto& enc = model.encoder(m);
    Matrix x(0, enc.in_dim());
    for (std::size_t i = 0; i < b; ++i) {
      const auto& inst = batch[i];
      if (!inst.pet && !inst.mri) throw InvalidInput("overall_loss: instance has no modality");
      if (!inst.has(m)) continue;
      if (inst.features(m).size() != enc.in_dim()) {
        throw ShapeError("overall_loss: feature length mismatch");
      }
      enc_row[mi][i] = x.rows();
      x.append_row(inst.features(m));
      enc_labels[mi].push_back(inst.label);
    }
    if (x.rows() > 0) {
      fwd[mi] = mlp_forward(enc, x);
    } else {
      fwd[mi].output = Matrix(0, d);
    }
  }
  const Matrix& z_pet = fwd[0].output;
  const Matrix& z_mri = fwd[1].output;

  LossResult result;
  result.grads = zeros_like(model);
  Matrix dz[2] = {Matrix(z_pet.rows(), d), Matrix(z_mri.rows(), d)};

  // Classifier rows: zero-fill CE rows, then proxy-completion rows.
  std::vector<FusedRow> rows;
  if (terms.ce) {
    for (std::size_t i = 0; i < b; ++i) {
      rows.push_back({enc_row[0][i], enc_row[1][i], nullptr, batch[i].label,
                      1.0 / static_cast<double>(b), false});
    }
  }
  const bool use_mc = terms.mc && pool != nullptr && weights.lambda2 != 0.0;
  if (terms.mc && pool != nullptr) {
    std::vector<std::size_t> covered;
    for (std::size_t i = 0; i < b; ++i) {
      const auto& inst = batch[i];
      if (!inst.single_modality()) continue;
      if (pool->at(other(inst.available()), inst.label).empty()) {
        ++result.parts.mc_skipped;
      } else {
        covered.push_back(i);
      }
    }
    result.parts.mc_covered = covered.size();
    if (use_mc && !covered.empty()) {
      const double per_instance = weights.lambda2 / static_cast<double>(covered.size());
      for (std::size_t i : covered) {
        const auto& inst = batch[i];
        const Modality avail = inst.available();
        const auto& set = pool->at(other(avail), inst.label);
        if (set.centers.cols() != d) throw ShapeError("overall_loss: pool dimension mismatch");
        const double total = static_cast<double>(set.total_size());
        for (std::size_t k = 0; k < set.count(); ++k) {
          FusedRow r;
          r.pet_row = avail == Modality::kPet ? enc_row[0][i] : kNone;
          r.mri_row = avail == Modality::kMri ? enc_row[1][i] : kNone;
          r.proxy = set.centers.row(k).data();
          r.label = inst.label;
          r.weight = per_instance * static_cast<double>(set.sizes[k]) / total;
          r.completion = true;
          rows.push_back(r);
        }
      }
    }
  }

  if (!rows.empty()) {
    Matrix fused(rows.size(), 2 * d);
    std::vector<int> labels(rows.size());
    std::vector<double> row_w(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& fr = rows[r];
      auto out = fused.row(r);
      if (fr.pet_row != kNone) {
        std::copy_n(z_pet.row(fr.pet_row).data(), d, out.begin());
      } else if (fr.proxy) {
        std::copy_n(fr.proxy, d, out.begin());
      }
      if (fr.mri_row != kNone) {
        std::copy_n(z_mri.row(fr.mri_row).data(), d, out.begin() + static_cast<std::ptrdiff_t>(d));
      } else if (fr.proxy) {
        std::copy_n(fr.proxy, d, out.begin() + static_cast<std::ptrdiff_t>(d));
      }
      labels[r] = fr.label;
      row_w[r] = fr.weight;
    }
    const MlpForward clf = mlp_forward(model.classifier, fused);
    CrossEntropyResult ce = weighted_cross_entropy(clf.output, labels, row_w);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double contrib = row_w[r] * ce.row_loss[r];
      (rows[r].completion ? result.parts.mc : result.parts.ce) += contrib;
    }
    if (use_mc) result.parts.mc /= weights.lambda2;

    MlpBackward back = mlp_backward(model.classifier, clf.cache, ce.grad);
    result.grads.classifier = std::move(back.param_grads);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto g = back.input_grad.row(r);
      if (rows[r].pet_row != kNone) {
        auto dst = dz[0].row(rows[r].pet_row);
        for (std::size_t t = 0; t < d; ++t) dst[t] += g[t];
      }
      if (rows[r].mri_row != kNone) {
        auto dst = dz[1].row(rows[r].mri_row);
        for (std::size_t t = 0; t < d; ++t) dst[t] += g[d + t];
      }
    }
  }

  if (terms.ctr && weights.lambda1 != 0.0) {
    CombinedContrastive ctr = contrastive_combined(z_pet, enc_labels[0], z_mri, enc_labels[1],
                                                   pool, weights.tau);
    result.parts.ctr = ctr.loss;
    const Matrix* g[2] = {&ctr.grad_pet, &ctr.grad_mri};
    for (int mi = 0; mi < 2; ++mi) {
      auto dst = dz[mi].values();
      auto src = g[mi]->values();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += weights.lambda1 * src[e];
    }
  }

  for (Modality m : kModalities) {
    const int mi = static_cast<int>(m);
    if (dz[mi].rows() == 0) continue;
    MlpBackward back = mlp_backward(model.encoder(m), fwd[mi].cache, dz[mi]);
    result.grads.encoder(m) = std::move(back.param_grads);
  }

  result.parts.total = result.parts.ce + weights.lambda1 * result.parts.ctr +
                       (use_mc ? weights.lambda2 * result.parts.mc : 0.0);
  return result;
}

LossResult modality_completion(const MultimodalModel& model, const Instance& instance,
                               const ClusterPool& pool) {
  if (!instance.single_modality()) {
    throw InvalidInput("modality_completion: instance must carry exactly one modality");
  }
  LossWeights w;
  w.lambda1 = 0.0;
  w.lambda2 = 1.0;
  return overall_loss(model, std::span<const Instance>(&instance, 1), &pool, w,
                      ObjectiveTerms{false, false, true});
}

}  // namespace clusmfl
