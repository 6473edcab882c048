#include "clusmfl/metrics.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <numeric>

#include "clusmfl/losses.hpp"

namespace clusmfl {

double roc_auc_binary(std::span<const double> scores, std::span<const bool> positives) {
  if (scores.size() != positives.size()) throw ShapeError("roc_auc_binary: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (bool p : positives) n_pos += p ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw InvalidInput("roc_auc_binary: AUC undefined without both classes");
  }
  // Mann-Whitney U from mid-ranks.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positives[order[k]]) rank_sum += mid_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) s += (p(r, c) = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < z.size(); ++c) p(r, c) /= s;
  }
  return p;
}

void fill_from_confusion(EvalResult& res) {
  const std::size_t classes = res.confusion.size();
  std::vector<std::size_t> support(classes, 0), predicted(classes, 0);
  std::size_t total = 0, correct = 0;
  for (std::size_t t = 0; t < classes; ++t) {
    for (std::size_t p = 0; p < classes; ++p) {
      support[t] += res.confusion[t][p];
      predicted[p] += res.confusion[t][p];
      total += res.confusion[t][p];
    }
    correct += res.confusion[t][t];
  }
  res.n_eval = total;
  res.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  double prec_w = 0.0, f1_w = 0.0, recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (support[c] == 0) continue;
    ++present;
    const double tp = static_cast<double>(res.confusion[c][c]);
    const double precision = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    const double recall = tp / static_cast<double>(support[c]);
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double w = static_cast<double>(support[c]);
    prec_w += w * precision;
    f1_w += w * f1;
    recall_sum += recall;
  }
  res.precision_weighted = total ? prec_w / static_cast<double>(total) : 0.0;
  res.f1_weighted = total ? f1_w / static_cast<double>(total) : 0.0;
  res.recall_macro = present ? recall_sum / static_cast<double>(present) : 0.0;
}

EvalResult classification_metrics(std::span<const int> labels, const Matrix& probabilities) {
  if (labels.empty()) throw InvalidInput("classification_metrics: empty evaluation set");
  if (labels.size() != probabilities.rows()) {
    throw ShapeError("classification_metrics: one probability row per label required");
  }
  const std::size_t classes = probabilities.cols();
  EvalResult res;
  res.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw InvalidInput("classification_metrics: label out of range");
    }
    auto p = probabilities.row(r);
    const auto pred = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    ++res.confusion[static_cast<std::size_t>(labels[r])][pred];
  }
  fill_from_confusion(res);

  double auc_sum = 0.0, auc_weight = 0.0;
  std::vector<double> scores(labels.size());
  const auto positives = std::make_unique<bool[]>(labels.size());
  const std::span<const bool> pos_view(positives.get(), labels.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t support = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      scores[r] = probabilities(r, c);
      positives[r] = labels[r] == static_cast<int>(c);
      support += positives[r] ? 1 : 0;
    }
    if (support == 0 || support == labels.size()) continue;
    auc_sum += static_cast<double>(support) * roc_auc_binary(scores, pos_view);
    auc_weight += static_cast<double>(support);
  }
  // a single-class evaluation set has no defined AUC; report chance
  res.auc_weighted = auc_weight > 0.0 ? auc_sum / auc_weight : 0.5;
  return res;
}

EvalResult evaluate(const MultimodalModel& model, std::span<const Instance> test) {
  if (test.empty()) throw InvalidInput("evaluate: empty test set");
  const Matrix logits = predict_batch(model, test);
  std::vector<int> labels(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) labels[i] = test[i].label;
  EvalResult res = classification_metrics(labels, softmax_rows(logits));
  res.loss = cross_entropy(logits, labels).loss;
  return res;
}

}  // namespace clusmfl
