#pragma once

#include <cstddef>
#include <vector>

namespace dfil {

// Lower-triangular task-by-task accuracy record: row i holds the accuracy on
// tasks 1..i measured after training on task i, as percentages in [0, 100].
class AccuracyMatrix {
 public:
  // Row for "after task rows()+1"; must have exactly rows()+1 entries.
  void push_row(std::vector<double> row);

  std::size_t tasks() const { return rows_.size(); }
  // 1-based: accuracy on eval_task after training through after_task.
  double at(std::size_t after_task, std::size_t eval_task) const;
  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<std::vector<double>> rows_;
};

// Percentage of predictions matching labels: 100 * (TP+TN) / n.
double acc(const std::vector<int>& preds, const std::vector<int>& labels);

// Mean of row after_task: the average accuracy over all tasks seen so far.
double average_accuracy(const AccuracyMatrix& matrix, std::size_t after_task);

// Mean over previous tasks j < i of (acc[j][j] - acc[i][j]): how much each
// earlier task's accuracy dropped from its first measurement to now.
// Negative values (backward transfer) are preserved. Requires i >= 2.
double average_forgetting(const AccuracyMatrix& matrix, std::size_t after_task);

// Area under the ROC curve via the Mann-Whitney statistic
//   (#{(pos,neg): s_pos > s_neg} + 0.5 * ties) / (#pos * #neg)
// with scores = P(fake) and positive class = 1. Equals the trapezoidal ROC
// area; ties count one half per the Mann-Whitney convention.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace dfil
