#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dfil/tensor.hpp"

namespace dfil::oracle {

// Independent reference implementations used by the verification suites and
// the tests. Everything here is written directly from the defining formulas,
// in extended precision where it helps, and deliberately shares no code with
// the production paths it cross-checks.

// Element-by-element triple-loop matrix product.
Tensor reference_matmul(const Tensor& a, const Tensor& b);

// Temperature softmax evaluated in long double without max-subtraction.
std::vector<double> reference_softmax(const std::vector<double>& z,
                                      double temperature);

// Natural-log entropy of a probability vector, long double, 0*log(0) := 0.
double reference_entropy(const std::vector<double>& p);

// Binary cross-entropy summed over the batch, from P(real) per sample.
double reference_ce(const std::vector<double>& p_real,
                    const std::vector<int>& labels);

// Term-by-term scalar transcription of the supervised contrastive loss:
// for each anchor with at least one positive, average over positives of
// -log(exp(s_ij/tau) / (exp(s_ij/tau) + sum_negatives exp(s_ik/tau))),
// cosine similarities in long double.
double reference_scl(const Tensor& features, const std::vector<int>& labels,
                     double tau);

// Soft-label distillation: -sum_i sum_j pt_ij * log(ps_ij) with both sides
// temperature-softmaxed in long double.
double reference_kd(const Tensor& teacher_logits, const Tensor& student_logits,
                    double temperature);

// Sum of squared elementwise differences.
double reference_fd(const Tensor& a, const Tensor& b);

// ROC area by explicit trapezoidal integration over the sorted-threshold
// sweep. Cross-checks the pairwise-count implementation in metrics.
double reference_auc_trapezoid(const std::vector<double>& scores,
                               const std::vector<int>& labels);

// Brute-force replay selection: full-sorts every (score, index) list with
// its own comparators and takes prefixes. `strategy` uses the string names
// accepted by replay ("hard_center", "all_hard", "all_easy", "all_margin",
// "all_center"). Returns selected dataset indices as a sorted set.
std::vector<std::size_t> reference_select(
    const std::vector<int>& labels, const std::vector<double>& entropies,
    const std::vector<double>& centroid_distances, std::size_t k,
    const std::string& strategy);

}  // namespace dfil::oracle
