#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "clusmfl/cluster_pool.hpp"
#include "clusmfl/losses.hpp"
#include "clusmfl/model.hpp"
#include "oracles.hpp"

using namespace clusmfl;

namespace {

constexpr ModelDims kSmall{5, 4, 3, 4, 3};

// Direct supervised contrastive value: every row with a positive is an
// anchor, the loss is the mean over anchors.
double contrastive_oracle(const Matrix& z, const std::vector<int>& y, double tau) {
  const std::size_t n = z.rows();
  auto cosine = [&](std::size_t a, std::size_t b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t t = 0; t < z.cols(); ++t) {
      dot += z(a, t) * z(b, t);
      na += z(a, t) * z(a, t);
      nb += z(b, t) * z(b, t);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
  };
  double total = 0.0;
  std::size_t anchors = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    std::vector<std::size_t> pos;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      denom += std::exp(cosine(i, a) / tau);
      if (y[a] == y[i]) pos.push_back(a);
    }
    if (pos.empty()) continue;
    double li = 0.0;
    for (auto p : pos) li -= std::log(std::exp(cosine(i, p) / tau) / denom);
    total += li / static_cast<double>(pos.size());
    ++anchors;
  }
  return anchors == 0 ? 0.0 : total / static_cast<double>(anchors);
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Mixed batch: multimodal, PET-only and MRI-only rows over three labels.
std::vector<Instance> random_batch(std::size_t n, std::mt19937_64& rng) {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 3);
    auto pet = random_vec(kSmall.input_dim, rng);
    auto mri = random_vec(kSmall.input_dim, rng);
    if (i % 4 == 1) pet.clear();
    if (i % 4 == 2) mri.clear();
    out.push_back(oracle::make_instance(i, label, pet, mri));
  }
  return out;
}

ClusterPool random_pool(std::mt19937_64& rng, std::size_t max_per_set = 3) {
  ClusterPool pool(3, kSmall.embed_dim);
  std::uniform_int_distribution<std::size_t> count(1, max_per_set), size(1, 9);
  for (Modality m : kModalities) {
    for (int j = 0; j < 3; ++j) {
      auto& set = pool.mutable_at(m, j);
      const std::size_t k = count(rng);
      for (std::size_t c = 0; c < k; ++c) {
        set.centers.append_row(random_vec(kSmall.embed_dim, rng));
        set.sizes.push_back(size(rng));
        set.clients.push_back(c);
      }
    }
  }
  return pool;
}

double mc_oracle(const MultimodalModel& model, const Instance& inst, const ClusterPool& pool) {
  const Modality avail = inst.available();
  const auto z = encode(model, avail, inst.features(avail));
  const auto& set = pool.at(other(avail), inst.label);
  double total = 0.0, weighted = 0.0;
  for (std::size_t k = 0; k < set.count(); ++k) {
    const auto logits = predict_with_proxy(model, z, avail, set.centers.row(k));
    weighted += static_cast<double>(set.sizes[k]) * oracle::cross_entropy_row(logits, inst.label);
    total += static_cast<double>(set.sizes[k]);
  }
  return weighted / total;
}

// The objective assembled from independently evaluated pieces.
double overall_oracle(const MultimodalModel& model, const std::vector<Instance>& batch,
                      const ClusterPool& pool, const LossWeights& w) {
  double ce = 0.0;
  for (const auto& inst : batch) ce += oracle::cross_entropy_row(predict(model, inst), inst.label);
  ce /= static_cast<double>(batch.size());

  double ctr_num = 0.0;
  std::size_t ctr_den = 0;
  for (Modality m : kModalities) {
    Matrix z;
    std::vector<int> y;
    for (const auto& inst : batch) {
      if (!inst.has(m)) continue;
      z.append_row(encode(model, m, inst.features(m)));
      y.push_back(inst.label);
    }
    if (y.empty()) continue;
    const std::size_t local = y.size();
    for (int j = 0; j < 3; ++j) {
      const auto& set = pool.at(m, j);
      for (std::size_t k = 0; k < set.count(); ++k) {
        z.append_row(set.centers.row(k));
        y.push_back(j);
      }
    }
    ctr_num += static_cast<double>(local) * contrastive_oracle(z, y, w.tau);
    ctr_den += local;
  }
  const double ctr = ctr_num / static_cast<double>(ctr_den);

  double mc = 0.0;
  std::size_t covered = 0;
  for (const auto& inst : batch) {
    if (!inst.single_modality() || pool.at(other(inst.available()), inst.label).empty()) continue;
    mc += mc_oracle(model, inst, pool);
    ++covered;
  }
  if (covered > 0) mc /= static_cast<double>(covered);
  return ce + w.lambda1 * ctr + w.lambda2 * mc;
}

MultimodalModel small_model(std::uint64_t seed) {
  Rng rng(seed);
  return make_model(kSmall, rng);
}

// Zero-initialised biases let a row with all hidden units off embed to
// exactly zero, where cosine similarity is discontinuous. Jitter every
// parameter so finite differences never straddle that point.
MultimodalModel jittered_model(std::uint64_t seed, std::mt19937_64& rng) {
  auto model = small_model(seed);
  auto flat = flatten(model);
  std::normal_distribution<double> d(0.0, 0.1);
  for (auto& v : flat) v += d(rng);
  assign_flat(model, flat);
  return model;
}

double total_at(MultimodalModel model, std::span<const double> flat,
                const std::vector<Instance>& batch, const ClusterPool* pool,
                const LossWeights& w, const ObjectiveTerms& terms) {
  assign_flat(model, flat);
  return overall_loss(model, batch, pool, w, terms).parts.total;
}

}  // namespace

TEST_CASE("cross entropy closed forms") {
  const Matrix uniform{{0.0, 0.0, 0.0}};
  CHECK(cross_entropy(uniform, std::vector<int>{1}).loss == doctest::Approx(std::log(3.0)));
  const Matrix confident{{30.0, 0.0, 0.0}};
  CHECK(cross_entropy(confident, std::vector<int>{0}).loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(Matrix(0, 3), std::vector<int>{}), InvalidInput);
  CHECK_THROWS_AS(cross_entropy(uniform, std::vector<int>{3}), InvalidInput);
}

TEST_CASE("cross entropy gradient matches finite differences") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix logits = oracle::random_matrix(4, 3, rng, 2.0);
    const std::vector<int> y{0, 2, 1, 2};
    const auto res = cross_entropy(logits, y);
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> v) {
          return cross_entropy(Matrix(4, 3, {v.begin(), v.end()}), y).loss;
        },
        {logits.values().begin(), logits.values().end()});
    CHECK(oracle::compare_gradients(res.grad.values(), numeric).worst <= 1e-4);
  }
}

TEST_CASE("weighted cross entropy is the weighted sum of row losses") {
  std::mt19937_64 rng(2);
  const Matrix logits = oracle::random_matrix(3, 3, rng);
  const std::vector<int> y{2, 0, 1};
  const std::vector<double> w{0.5, 0.25, 2.0};
  const auto res = weighted_cross_entropy(logits, y, w);
  double want = 0.0;
  for (std::size_t r = 0; r < 3; ++r) want += w[r] * oracle::cross_entropy_row(logits.row(r), y[r]);
  CHECK(res.loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("augmented batch layout") {
  const Matrix z{{1, 0, 0}, {0, 1, 0}};
  const std::vector<int> y{1, 0};
  ClusterPool empty(3, 3);
  const auto same = build_augmented_batch(z, y, empty, Modality::kPet);
  CHECK(same.embeddings == z);
  CHECK(same.labels == y);
  CHECK(same.trainable_count() == 2);

  ClusterPool pool(3, 3);
  pool.mutable_at(Modality::kPet, 0) = {Matrix{{0, 0, 1}}, {4}, {0}};
  pool.mutable_at(Modality::kPet, 1) = {Matrix{{1, 1, 0}, {0, 1, 1}}, {2, 3}, {0, 1}};
  pool.mutable_at(Modality::kMri, 2) = {Matrix{{9, 9, 9}}, {1}, {0}};
  const auto aug = build_augmented_batch(z, y, pool, Modality::kPet);
  CHECK(aug.embeddings.rows() == 5);
  CHECK(aug.labels == std::vector<int>{1, 0, 0, 1, 1});
  CHECK(aug.trainable == std::vector<bool>{true, true, false, false, false});
  CHECK(aug.embeddings(4, 2) == 1.0);
}

TEST_CASE("augmented batch keeps pool client order") {
  std::vector<LocalClusters> locals(3);
  for (std::size_t c = 0; c < 3; ++c) {
    locals[c].client_id = c;
    locals[c].embed_dim = 2;
    for (auto& sets : locals[c].sets) sets.resize(1);
    ClusterSet& s = locals[c].sets[0][0];
    for (std::size_t k = 0; k <= c; ++k) {
      s.centers.append_row(std::vector<double>{static_cast<double>(c), static_cast<double>(k)});
      s.sizes.push_back(1);
    }
  }
  const auto pool = assemble_global_pool(locals, 1, 2);
  const auto aug = build_augmented_batch(Matrix{{5, 5}}, std::vector<int>{0}, pool, Modality::kPet);
  REQUIRE(aug.embeddings.rows() == 7);
  for (std::size_t r = 2; r < 7; ++r) CHECK(aug.embeddings(r - 1, 0) <= aug.embeddings(r, 0));
}

TEST_CASE("contrastive hand value") {
  AugmentedBatch b{Matrix{{1, 0}, {1, 0}, {0, 1}}, {0, 0, 1}, {true, true, true}};
  const auto r = supervised_contrastive(b, 1.0);
  CHECK(r.anchors == 2);
  CHECK(std::abs(r.loss - std::log(1.0 + std::exp(-1.0))) <= 1e-6);
  CHECK(std::abs(r.loss - 0.31326) <= 1e-5);
}

TEST_CASE("contrastive degenerate cases") {
  AugmentedBatch twins{Matrix{{0.3, 0.4}, {0.3, 0.4}}, {2, 2}, {true, true}};
  CHECK(supervised_contrastive(twins, 0.5).loss == doctest::Approx(0.0).epsilon(1e-12));
  AugmentedBatch lonely{Matrix{{1, 0}, {0, 1}}, {0, 1}, {true, true}};
  const auto r = supervised_contrastive(lonely, 0.1);
  CHECK(r.loss == 0.0);
  CHECK(r.anchors == 0);
  for (double g : r.grad.values()) CHECK(g == 0.0);
  AugmentedBatch zero_row{Matrix{{0, 0}, {1, 0}, {1, 1}}, {0, 0, 0}, {true, true, true}};
  const auto z = supervised_contrastive(zero_row, 0.5);
  CHECK(std::isfinite(z.loss));
  CHECK(z.grad(0, 0) == 0.0);
  CHECK_THROWS_AS(supervised_contrastive(twins, 0.0), InvalidInput);
}

TEST_CASE("contrastive value matches the oracle and gradients match finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> label(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 6);
    const std::size_t centers = trial % 2 == 0 ? 0 : 3;
    AugmentedBatch b;
    b.embeddings = oracle::random_matrix(n + centers, 4, rng);
    for (std::size_t i = 0; i < n + centers; ++i) {
      b.labels.push_back(label(rng));
      b.trainable.push_back(i < n);
    }
    const double tau = trial % 3 == 0 ? 0.1 : 0.5;
    const auto r = supervised_contrastive(b, tau);
    CHECK(r.loss == doctest::Approx(contrastive_oracle(b.embeddings, b.labels, tau)).epsilon(1e-10));
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> v) {
          AugmentedBatch c = b;
          std::copy(v.begin(), v.end(), c.embeddings.values().begin());
          return supervised_contrastive(c, tau).loss;
        },
        {b.embeddings.values().begin(), b.embeddings.values().end()});
    // Centers are constants: compare trainable rows only, and require zero elsewhere.
    const std::size_t split = n * 4;
    CHECK(oracle::compare_gradients(r.grad.values().first(split),
                                    std::span<const double>(numeric).first(split))
              .worst <= 1e-4);
    for (std::size_t e = split; e < r.grad.size(); ++e) CHECK(r.grad.values()[e] == 0.0);
  }
}

TEST_CASE("contrastive loss is scale and permutation invariant") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    AugmentedBatch b{oracle::random_matrix(6, 3, rng), {0, 1, 0, 2, 1, 0},
                     std::vector<bool>(6, true)};
    const double base = supervised_contrastive(b, 0.2).loss;
    AugmentedBatch scaled = b;
    for (double& v : scaled.embeddings.row(trial % 6)) v *= 7.5;
    CHECK(std::abs(supervised_contrastive(scaled, 0.2).loss - base) <= 1e-9);

    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    AugmentedBatch p;
    for (auto i : perm) {
      p.embeddings.append_row(b.embeddings.row(i));
      p.labels.push_back(b.labels[i]);
      p.trainable.push_back(true);
    }
    CHECK(std::abs(supervised_contrastive(p, 0.2).loss - base) <= 1e-9);
  }
}

TEST_CASE("contrastive_combined weighting") {
  CHECK(contrastive_combined(0.4, 10, 0.8, 30) == doctest::Approx(0.7));
  CHECK(contrastive_combined(0.4, 10, 123.0, 0) == 0.4);
  CHECK(contrastive_combined(0.2, 5, 0.6, 5) == doctest::Approx(0.4));
  CHECK_THROWS_AS(contrastive_combined(0.1, 0, 0.2, 0), InvalidInput);
}

TEST_CASE("modality completion: one center is plain CE with the proxy") {
  const auto model = small_model(10);
  std::mt19937_64 rng(11);
  const auto inst = oracle::make_instance(0, 2, random_vec(5, rng), {});
  ClusterPool pool(3, 3);
  pool.mutable_at(Modality::kMri, 2) = {Matrix{{0.5, -0.2, 1.0}}, {17}, {0}};
  const auto r = modality_completion(model, inst, pool);
  const auto z = encode(model, Modality::kPet, *inst.pet);
  const double want = oracle::cross_entropy_row(
      predict_with_proxy(model, z, Modality::kPet, pool.at(Modality::kMri, 2).centers.row(0)), 2);
  CHECK(r.parts.mc == doctest::Approx(want).epsilon(1e-12));
  CHECK(r.parts.mc_covered == 1);
}

TEST_CASE("modality completion: sizes 1 and 3 weight the per-center CE") {
  const auto model = small_model(12);
  std::mt19937_64 rng(13);
  const auto inst = oracle::make_instance(0, 1, {}, random_vec(5, rng));
  ClusterPool pool(3, 3);
  pool.mutable_at(Modality::kPet, 1) = {Matrix{{1, 0, 0}, {0, 2, -1}}, {1, 3}, {0, 1}};
  const auto z = encode(model, Modality::kMri, *inst.mri);
  const auto& set = pool.at(Modality::kPet, 1);
  const double l1 = oracle::cross_entropy_row(
      predict_with_proxy(model, z, Modality::kMri, set.centers.row(0)), 1);
  const double l2 = oracle::cross_entropy_row(
      predict_with_proxy(model, z, Modality::kMri, set.centers.row(1)), 1);
  CHECK(modality_completion(model, inst, pool).parts.mc ==
        doctest::Approx((l1 + 3 * l2) / 4).epsilon(1e-12));
}

TEST_CASE("modality completion: zero center reduces to zero-fill CE") {
  const auto model = small_model(14);
  std::mt19937_64 rng(15);
  const auto inst = oracle::make_instance(0, 0, random_vec(5, rng), {});
  ClusterPool pool(3, 3);
  pool.mutable_at(Modality::kMri, 0) = {Matrix{{0, 0, 0}}, {2}, {0}};
  CHECK(modality_completion(model, inst, pool).parts.mc ==
        doctest::Approx(oracle::cross_entropy_row(predict(model, inst), 0)).epsilon(1e-12));
}

TEST_CASE("modality completion: uncovered instances are skipped, multimodal rejected") {
  const auto model = small_model(16);
  std::mt19937_64 rng(17);
  const auto inst = oracle::make_instance(0, 0, random_vec(5, rng), {});
  ClusterPool pool(3, 3);
  const auto r = modality_completion(model, inst, pool);
  CHECK(r.parts.mc == 0.0);
  CHECK(r.parts.mc_skipped == 1);
  CHECK(r.parts.mc_covered == 0);
  const auto both = oracle::make_instance(1, 0, random_vec(5, rng), random_vec(5, rng));
  CHECK_THROWS_AS(modality_completion(model, both, pool), InvalidInput);
}

TEST_CASE("modality completion gradient matches finite differences") {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = jittered_model(100 + static_cast<std::uint64_t>(trial), rng);
    const auto pool = random_pool(rng);
    auto pet = random_vec(5, rng);
    auto mri = random_vec(5, rng);
    (trial % 2 == 0 ? mri : pet).clear();
    const auto inst = oracle::make_instance(0, trial % 3, pet, mri);
    const std::vector<Instance> batch{inst};
    const LossWeights w{0.0, 1.0, 0.1};
    const ObjectiveTerms terms{false, false, true};
    const auto r = modality_completion(model, inst, pool);
    CHECK(r.parts.mc == doctest::Approx(mc_oracle(model, inst, pool)).epsilon(1e-10));
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> v) { return total_at(model, v, batch, &pool, w, terms); },
        flatten(model));
    CHECK(oracle::compare_gradients(flatten(r.grads), numeric).worst <= 1e-4);
  }
}

TEST_CASE("overall loss reductions") {
  const auto model = small_model(20);
  std::mt19937_64 rng(21);
  const auto batch = random_batch(8, rng);
  const auto pool = random_pool(rng);
  const ObjectiveTerms all{true, true, true};

  const auto plain = overall_loss(model, batch, &pool, LossWeights{0.0, 0.0, 0.1}, all);
  const auto ce = cross_entropy(predict_batch(model, batch), [&] {
    std::vector<int> y;
    for (const auto& i : batch) y.push_back(i.label);
    return y;
  }());
  CHECK(plain.parts.total == ce.loss);
  CHECK(flatten(plain.grads) ==
        flatten(overall_loss(model, batch, nullptr, LossWeights{}, ObjectiveTerms{}).grads));

  std::vector<Instance> complete;
  for (std::size_t i = 0; i < 6; ++i) {
    complete.push_back(oracle::make_instance(i, static_cast<int>(i % 3), random_vec(5, rng),
                                             random_vec(5, rng)));
  }
  const auto r = overall_loss(model, complete, &pool, LossWeights{1.0, 5.0, 0.1}, all);
  CHECK(r.parts.mc == 0.0);
  CHECK(r.parts.mc_covered == 0);
  CHECK(r.parts.mc_skipped == 0);
}

TEST_CASE("overall loss matches the assembled oracle and finite differences") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = jittered_model(200 + static_cast<std::uint64_t>(trial), rng);
    const auto batch = random_batch(6 + static_cast<std::size_t>(trial % 5), rng);
    const auto pool = random_pool(rng, 2);
    const LossWeights w{0.5 + 0.1 * (trial % 4), 0.3 + 0.2 * (trial % 3), trial % 2 ? 0.1 : 0.5};
    const ObjectiveTerms terms{true, true, true};
    const auto r = overall_loss(model, batch, &pool, w, terms);
    CHECK(r.parts.total == doctest::Approx(overall_oracle(model, batch, pool, w)).epsilon(1e-10));
    const auto numeric = oracle::numeric_gradient(
        [&](std::span<const double> v) { return total_at(model, v, batch, &pool, w, terms); },
        flatten(model));
    CHECK(oracle::compare_gradients(flatten(r.grads), numeric).worst <= 1e-4);
  }
}

TEST_CASE("overall loss reports uncovered single-modality instances") {
  const auto model = small_model(30);
  std::mt19937_64 rng(31);
  const auto batch = random_batch(8, rng);  // rows 1, 5 MRI-only, rows 2, 6 PET-only
  ClusterPool pool(3, 3);
  pool.mutable_at(Modality::kPet, 1) = {Matrix{{1, 1, 1}}, {2}, {0}};
  const auto r = overall_loss(model, batch, &pool, LossWeights{}, ObjectiveTerms{true, false, true});
  // Row 1 (label 1, MRI-only) is covered by the PET center of label 1.
  CHECK(r.parts.mc_covered == 1);
  CHECK(r.parts.mc_skipped == 3);
  CHECK_THROWS_AS(overall_loss(model, {}, &pool, LossWeights{}, ObjectiveTerms{}), InvalidInput);
}
