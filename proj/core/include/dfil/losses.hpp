#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dfil/autodiff.hpp"
#include "dfil/model.hpp"
#include "dfil/tensor.hpp"

namespace dfil {

// Where a training sample came from: the current task or the replay set.
struct SourceTag {
  bool replay = false;
  std::size_t task_id = 0;  // origin task (1-based)
};

struct Batch {
  Tensor inputs;                   // B x d
  std::vector<int> labels;         // 0 = real, 1 = fake
  std::vector<SourceTag> sources;  // same length as labels

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

// Weights and temperatures of the combined objective
//   total = ce + alpha*scl            (first task)
//   total = ce + alpha*scl + beta*kd + gamma*fd   (later tasks)
struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double kd_temperature = 20.0;
  double scl_temperature = 0.1;

  void validate() const;
};

struct LossOptions {
  // Divide each term by B instead of the plain batch sums.
  bool mean_reduction = false;
  // Multiply the distillation term by T^2 (conventional gradient rescaling;
  // the printed objective omits it, so this defaults off).
  bool kd_t_squared = false;
};

// Unweighted component values, for logging. kd/fd are absent on the first
// task, where there is no teacher to distill from.
struct LossComponents {
  double ce = 0.0;
  double scl = 0.0;
  std::optional<double> kd;
  std::optional<double> fd;
  double total = 0.0;
  bool scl_single_class = false;
};

// Probabilities are clamped into [kProbEps, 1 - kProbEps] before any log.
inline constexpr double kProbEps = 1e-12;

// ---- value-level losses -----------------------------------------------------
// Each evaluates the same tape graph the trainer differentiates, so logged
// values and optimized values agree exactly.

// Binary cross-entropy summed over the batch, from each sample's P(real).
double loss_ce(const std::vector<Prediction>& preds,
               const std::vector<int>& labels);

// Supervised contrastive loss over temperature-scaled cosine similarities.
// A batch with only one class has no negative pairs; the loss is 0 and
// *single_class (when given) is set.
double loss_scl(const Tensor& features, const std::vector<int>& labels,
                double tau, bool* single_class = nullptr);

// Soft-label distillation at the given temperature; the teacher side is a
// gradient constant.
double loss_kd(const Tensor& teacher_logits, const Tensor& student_logits,
               double temperature);

// Squared Euclidean distance between feature batches, summed over the batch.
double loss_fd(const Tensor& teacher_features, const Tensor& student_features);

// The combined objective. teacher must be null exactly when is_first_task.
LossComponents loss_dfil(const Batch& batch, const Model& student,
                         const Model* teacher, const LossWeights& weights,
                         bool is_first_task, const LossOptions& options = {});

// ---- tape-level builders ------------------------------------------------------
// Used by the trainer's gradient step and by the finite-difference checks.

Var ce_from_probs(Var probs, const std::vector<int>& labels);
Var scl_from_features(Var features, const std::vector<int>& labels, double tau,
                      bool* single_class = nullptr);
Var kd_from_logits(const Tensor& teacher_logits, Var student_logits,
                   double temperature, bool t_squared = false);
Var fd_from_features(const Tensor& teacher_features, Var student_features);

// Forward + combined loss + gradient in one pass.
struct DfilEvaluation {
  LossComponents components;
  std::vector<double> gradient;  // d total / d student flat parameters
};
DfilEvaluation loss_dfil_with_grad(const Batch& batch, const Model& student,
                                   const Model* teacher,
                                   const LossWeights& weights,
                                   bool is_first_task,
                                   const LossOptions& options = {});

}  // namespace dfil
