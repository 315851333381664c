#include "dfil/metrics.hpp"

#include <string>

#include "dfil/errors.hpp"

namespace dfil {

void AccuracyMatrix::push_row(std::vector<double> row) {
  if (row.size() != rows_.size() + 1) {
    throw StateError("accuracy matrix: row " + std::to_string(rows_.size() + 1) +
                     " must have " + std::to_string(rows_.size() + 1) +
                     " entries, got " + std::to_string(row.size()));
  }
  for (double v : row) {
    if (v < 0.0 || v > 100.0) {
      throw ParameterError("accuracy matrix: entry " + std::to_string(v) +
                           " outside [0, 100]");
    }
  }
  rows_.push_back(std::move(row));
}

double AccuracyMatrix::at(std::size_t after_task, std::size_t eval_task) const {
  if (after_task == 0 || after_task > rows_.size() || eval_task == 0 ||
      eval_task > after_task) {
    throw StateError("accuracy matrix: no entry (" + std::to_string(after_task) +
                     ", " + std::to_string(eval_task) + ")");
  }
  return rows_[after_task - 1][eval_task - 1];
}

double acc(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw ParameterError("acc: need equal non-empty prediction/label lists");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(preds.size());
}

double average_accuracy(const AccuracyMatrix& matrix, std::size_t after_task) {
  if (after_task == 0 || after_task > matrix.tasks()) {
    throw StateError("average_accuracy: row " + std::to_string(after_task) +
                     " is not complete");
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= after_task; ++j) {
    total += matrix.at(after_task, j);
  }
  return total / static_cast<double>(after_task);
}

double average_forgetting(const AccuracyMatrix& matrix,
                          std::size_t after_task) {
  if (after_task < 2) {
    throw ParameterError(
        "average_forgetting: needs at least two trained tasks");
  }
  if (after_task > matrix.tasks()) {
    throw StateError("average_forgetting: row " + std::to_string(after_task) +
                     " is not complete");
  }
  double total = 0.0;
  for (std::size_t j = 1; j < after_task; ++j) {
    total += matrix.at(j, j) - matrix.at(after_task, j);
  }
  return total / static_cast<double>(after_task - 1);
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size()) {
    throw ParameterError("auc: need equal non-empty score/label lists");
  }
  std::size_t pos = 0, neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ParameterError("auc: label outside {0,1}");
    }
    (y == 1 ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) {
    throw MetricError("auc: both classes must be present (" +
                      std::to_string(pos) + " positive, " +
                      std::to_string(neg) + " negative)");
  }
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace dfil
