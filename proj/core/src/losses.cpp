#include "dfil/losses.hpp"

#include <cmath>
#include <string>

#include "dfil/errors.hpp"

namespace dfil {

void Batch::validate() const {
  if (labels.empty()) throw ParameterError("batch: empty batch");
  if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
    throw DimensionError("batch: inputs " + inputs.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (!sources.empty() && sources.size() != labels.size()) {
    throw DimensionError("batch: sources length mismatch");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ValidationError("batch: label outside {0,1}: " + std::to_string(y));
    }
  }
}

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw ParameterError("loss weights must be non-negative");
  }
  if (kd_temperature <= 0.0 || scl_temperature <= 0.0) {
    throw ParameterError("loss temperatures must be positive");
  }
}

// ---- tape-level builders -----------------------------------------------------

namespace {

void require_binary_labels(const std::vector<int>& labels, const char* op) {
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ValidationError(std::string(op) + ": label outside {0,1}: " +
                            std::to_string(y));
    }
  }
}

}  // namespace

Var ce_from_probs(Var probs, const std::vector<int>& labels) {
  Tape& tape = *probs.tape;
  const Tensor& p = tape.value(probs);
  if (labels.empty()) throw ParameterError("loss_ce: empty batch");
  require_binary_labels(labels, "loss_ce");
  if (p.rank() != 2 || p.cols() != Model::kNumClasses ||
      p.rows() != labels.size()) {
    throw DimensionError("loss_ce: probs " + p.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = labels.size();

  // P(real) is column 0.
  Tensor col0 = Tensor::zeros({batch, Model::kNumClasses});
  for (std::size_t i = 0; i < batch; ++i) col0.at(i, 0) = 1.0;
  Var p_real = row_sums(mul(probs, tape.constant(col0)));
  Var p_fake = sub(tape.constant(Tensor::full({batch}, 1.0)), p_real);

  // -log P(true class): pick the matching log with a -1/0 coefficient.
  Tensor real_coeff = Tensor::zeros({batch});
  Tensor fake_coeff = Tensor::zeros({batch});
  for (std::size_t i = 0; i < batch; ++i) {
    (labels[i] == 0 ? real_coeff : fake_coeff).at(i) = -1.0;
  }
  Var log_real = log_elem(clamp_elem(p_real, kProbEps, 1.0 - kProbEps));
  Var log_fake = log_elem(clamp_elem(p_fake, kProbEps, 1.0 - kProbEps));
  return sum(add(mul(log_real, tape.constant(real_coeff)),
                 mul(log_fake, tape.constant(fake_coeff))));
}

Var scl_from_features(Var features, const std::vector<int>& labels, double tau,
                      bool* single_class) {
  Tape& tape = *features.tape;
  const Tensor& f = tape.value(features);
  if (single_class != nullptr) *single_class = false;
  if (tau <= 0.0) {
    throw ParameterError("loss_scl: tau must be positive, got " +
                         std::to_string(tau));
  }
  if (labels.size() < 2) {
    throw ParameterError("loss_scl: needs a batch of at least 2");
  }
  require_binary_labels(labels, "loss_scl");
  if (f.rank() != 2 || f.rows() != labels.size()) {
    throw DimensionError("loss_scl: features " + f.shape_str() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = labels.size();

  for (std::size_t i = 0; i < batch; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < f.cols(); ++c) sq += f.at(i, c) * f.at(i, c);
    if (sq == 0.0) {
      throw NumericError("loss_scl: zero-norm feature vector at row " +
                         std::to_string(i) + " (cosine undefined)");
    }
  }

  std::size_t class_counts[2] = {0, 0};
  for (int y : labels) class_counts[y] += 1;
  if (class_counts[0] == 0 || class_counts[1] == 0) {
    if (single_class != nullptr) *single_class = true;
    // No negative pairs: every term is log(1) = 0.
    return tape.constant(Tensor::scalar(0.0));
  }

  // Cosine similarity matrix of the row-normalized features.
  Var norms = sqrt_elem(row_sums(mul(features, features)));
  Var normalized = div_elem(features, broadcast_cols(norms, f.cols()));
  Var sims = matmul(normalized, transpose(normalized));
  Var sim_exp = exp_elem(scale(sims, 1.0 / tau));

  // Denominator of each (anchor, positive) term: its own numerator plus the
  // anchor's negative-class terms.
  Tensor neg_mask = Tensor::zeros({batch, batch});
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < batch; ++k) {
      if (labels[k] != labels[i]) neg_mask.at(i, k) = 1.0;
    }
  }
  Var neg_sums = row_sums(mul(sim_exp, tape.constant(neg_mask)));
  Var denom = add(sim_exp, broadcast_cols(neg_sums, batch));
  Var log_ratio = log_elem(div_elem(sim_exp, denom));

  // Average over each anchor's positives; anchors without a positive in the
  // batch get an all-zero row and contribute nothing.
  Tensor weights = Tensor::zeros({batch, batch});
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t positives = class_counts[labels[i]] - 1;
    if (positives == 0) continue;
    for (std::size_t j = 0; j < batch; ++j) {
      if (j != i && labels[j] == labels[i]) {
        weights.at(i, j) = 1.0 / static_cast<double>(positives);
      }
    }
  }
  return scale(sum(mul(log_ratio, tape.constant(weights))), -1.0);
}

Var kd_from_logits(const Tensor& teacher_logits, Var student_logits,
                   double temperature, bool t_squared) {
  Tape& tape = *student_logits.tape;
  const Tensor& zs = tape.value(student_logits);
  if (temperature <= 0.0) {
    throw ParameterError("loss_kd: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  if (!teacher_logits.same_shape(zs)) {
    throw DimensionError("loss_kd: teacher " + teacher_logits.shape_str() +
                         " vs student " + zs.shape_str());
  }
  // The teacher side never receives gradient.
  const Tensor teacher_probs = softmax_rows(teacher_logits, temperature);
  Var student_probs = softmax_rows(student_logits, temperature);
  Var log_probs =
      log_elem(clamp_elem(student_probs, kProbEps, 1.0 - kProbEps));
  Var loss = sum(mul(log_probs, tape.constant(scale(teacher_probs, -1.0))));
  return t_squared ? scale(loss, temperature * temperature) : loss;
}

Var fd_from_features(const Tensor& teacher_features, Var student_features) {
  Tape& tape = *student_features.tape;
  const Tensor& fs = tape.value(student_features);
  if (!teacher_features.same_shape(fs)) {
    throw DimensionError("loss_fd: teacher " + teacher_features.shape_str() +
                         " vs student " + fs.shape_str());
  }
  Var diff = sub(student_features, tape.constant(teacher_features));
  return sum(mul(diff, diff));
}

// ---- value-level wrappers ------------------------------------------------------

double loss_ce(const std::vector<Prediction>& preds,
               const std::vector<int>& labels) {
  if (preds.empty()) throw ParameterError("loss_ce: empty batch");
  if (preds.size() != labels.size()) {
    throw DimensionError("loss_ce: " + std::to_string(preds.size()) +
                         " predictions vs " + std::to_string(labels.size()) +
                         " labels");
  }
  Tensor probs = Tensor::zeros({preds.size(), Model::kNumClasses});
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < Model::kNumClasses; ++j) {
      probs.at(i, j) = preds[i].probs.at(j);
    }
  }
  Tape tape;
  return tape.value(ce_from_probs(tape.constant(probs), labels)).at(0);
}

double loss_scl(const Tensor& features, const std::vector<int>& labels,
                double tau, bool* single_class) {
  Tape tape;
  Var node =
      scl_from_features(tape.constant(features), labels, tau, single_class);
  return tape.value(node).at(0);
}

double loss_kd(const Tensor& teacher_logits, const Tensor& student_logits,
               double temperature) {
  Tape tape;
  Var node = kd_from_logits(teacher_logits, tape.constant(student_logits),
                            temperature);
  return tape.value(node).at(0);
}

double loss_fd(const Tensor& teacher_features,
               const Tensor& student_features) {
  Tape tape;
  Var node =
      fd_from_features(teacher_features, tape.constant(student_features));
  return tape.value(node).at(0);
}

// ---- combined objective ---------------------------------------------------------

namespace {

DfilEvaluation evaluate_dfil(const Batch& batch, const Model& student,
                             const Model* teacher, const LossWeights& weights,
                             bool is_first_task, const LossOptions& options,
                             bool with_grad) {
  batch.validate();
  weights.validate();
  if (is_first_task && teacher != nullptr) {
    throw ProtocolError("loss_dfil: no teacher expected on the first task");
  }
  if (!is_first_task && teacher == nullptr) {
    throw ProtocolError("loss_dfil: teacher required after the first task");
  }

  Tape tape;
  Model::TapedParams params = student.register_on(tape);
  Var inputs = tape.constant(batch.inputs);
  auto [features, logits] =
      Model::forward_on(params, student.activations(), inputs);
  Var probs = softmax_rows(logits, 1.0);

  DfilEvaluation eval;
  Var ce = ce_from_probs(probs, batch.labels);
  Var scl = scl_from_features(features, batch.labels, weights.scl_temperature,
                              &eval.components.scl_single_class);

  std::optional<Var> kd, fd;
  if (!is_first_task) {
    const BatchOutput teacher_out = teacher->forward_batch(batch.inputs);
    kd = kd_from_logits(teacher_out.logits, logits, weights.kd_temperature,
                        options.kd_t_squared);
    fd = fd_from_features(teacher_out.features, features);
  }

  if (options.mean_reduction) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    ce = scale(ce, inv);
    scl = scale(scl, inv);
    if (kd) kd = scale(*kd, inv);
    if (fd) fd = scale(*fd, inv);
  }

  Var total = add(ce, scale(scl, weights.alpha));
  if (kd) total = add(total, scale(*kd, weights.beta));
  if (fd) total = add(total, scale(*fd, weights.gamma));

  eval.components.ce = tape.value(ce).at(0);
  eval.components.scl = tape.value(scl).at(0);
  if (kd) eval.components.kd = tape.value(*kd).at(0);
  if (fd) eval.components.fd = tape.value(*fd).at(0);
  eval.components.total = tape.value(total).at(0);

  if (with_grad) {
    tape.backward(total);
    eval.gradient = Model::collect_gradients(tape, params);
  }
  return eval;
}

}  // namespace

LossComponents loss_dfil(const Batch& batch, const Model& student,
                         const Model* teacher, const LossWeights& weights,
                         bool is_first_task, const LossOptions& options) {
  return evaluate_dfil(batch, student, teacher, weights, is_first_task,
                       options, false)
      .components;
}

DfilEvaluation loss_dfil_with_grad(const Batch& batch, const Model& student,
                                   const Model* teacher,
                                   const LossWeights& weights,
                                   bool is_first_task,
                                   const LossOptions& options) {
  return evaluate_dfil(batch, student, teacher, weights, is_first_task,
                       options, true);
}

}  // namespace dfil
