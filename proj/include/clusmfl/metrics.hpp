#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "clusmfl/instance.hpp"
#include "clusmfl/matrix.hpp"
#include "clusmfl/model.hpp"

namespace clusmfl {

struct EvalResult {
  double accuracy = 0.0;
  double precision_weighted = 0.0;
  double recall_macro = 0.0;
  double f1_weighted = 0.0;
  double auc_weighted = 0.0;
  double loss = 0.0;  // mean CE of the zero-fill predictions
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t n_eval = 0;
};

// Probability that a random positive scores above a random negative, ties
// counting one half. Throws InvalidInput unless both classes are present.
double roc_auc_binary(std::span<const double> scores, std::span<const bool> positives);

// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

// Accuracy, support-weighted precision/F1, macro recall over classes with
// support, and support-weighted one-vs-rest AUC from class probabilities.
// Classes absent from `labels` get zero weight.
EvalResult classification_metrics(std::span<const int> labels, const Matrix& probabilities);

// Precision/recall/F1 fields from a confusion matrix alone (AUC untouched).
void fill_from_confusion(EvalResult& result);

// Zero-fill predictions of `model` on `test`.
EvalResult evaluate(const MultimodalModel& model, std::span<const Instance> test);

}  // namespace clusmfl
