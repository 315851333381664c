#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfil {

struct CheckResult {
  std::string name;
  bool pass = false;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;  // serialized failing case, empty when passing
};

// Finite-difference gradient checks of every loss (and the combined
// objective) against the tape, on random models and batches.
// Max relative error must stay below 1e-4 at eps = 1e-5.
std::vector<CheckResult> verify_grad(std::size_t seeds = 20,
                                     std::size_t batch = 8,
                                     std::size_t input_dim = 8);

// Loss-formula oracles: term-by-term contrastive transcription, the
// distillation-equals-entropy identity at teacher == student, exact zero
// feature distance, and the uniform-prediction cross-entropy value.
std::vector<CheckResult> verify_losses();

// Replay selection against the brute-force full-sort oracle on random
// datasets, including tie cases built from duplicated rows; Random strategy
// is checked for its contract (size, balance, determinism).
std::vector<CheckResult> verify_replay(std::size_t datasets = 10,
                                       std::uint64_t seed = 2024);

// Metric formula checks: the reference average-accuracy row, dual-method
// AUC agreement, perfect-separation AUC.
std::vector<CheckResult> verify_metrics();

std::vector<CheckResult> verify_all();

}  // namespace dfil
