#include "dfil/verify.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dfil/autodiff.hpp"
#include "dfil/errors.hpp"
#include "dfil/losses.hpp"
#include "dfil/metrics.hpp"
#include "dfil/model.hpp"
#include "dfil/oracles.hpp"
#include "dfil/replay.hpp"
#include "dfil/rng.hpp"
#include "dfil/tensor.hpp"

namespace dfil {

namespace {

enum class LossKind { Ce, Scl, Kd, Fd, Dfil };

const char* kind_name(LossKind k) {
  switch (k) {
    case LossKind::Ce: return "ce";
    case LossKind::Scl: return "scl";
    case LossKind::Kd: return "kd";
    case LossKind::Fd: return "fd";
    case LossKind::Dfil: return "dfil";
  }
  return "?";
}

// All parameter tensors of a model in flat order, with their activations.
struct FlatModel {
  std::vector<Tensor> params;  // w0,b0,w1,b1,...,cw,cb
  std::vector<Activation> acts;
};

FlatModel flatten(const Model& m) {
  FlatModel fm;
  for (const DenseLayer& l : m.encoder()) {
    fm.params.push_back(l.weight);
    fm.params.push_back(l.bias);
    fm.acts.push_back(l.activation);
  }
  fm.params.push_back(m.classifier().weight);
  fm.params.push_back(m.classifier().bias);
  return fm;
}

// Forward pass where parameter tensor var_index comes from the tape input x
// and every other parameter is a constant; grad_check then probes exactly
// that tensor.
std::pair<Var, Var> forward_mixed(Tape& tape, const FlatModel& fm,
                                  std::size_t var_index, Var x,
                                  const Tensor& inputs) {
  auto param_var = [&](std::size_t i) {
    return i == var_index ? x : tape.constant(fm.params[i]);
  };
  Var h = tape.constant(inputs);
  const std::size_t layers = fm.acts.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Var z = add_rowvec(matmul(h, param_var(2 * l)), param_var(2 * l + 1));
    h = fm.acts[l] == Activation::ReLU ? relu(z) : z;
  }
  Var logits = add_rowvec(matmul(h, param_var(2 * layers)),
                          param_var(2 * layers + 1));
  return {h, logits};
}

Var loss_from_outputs(LossKind kind, Var features, Var logits,
                      const std::vector<int>& labels,
                      const Tensor& teacher_logits,
                      const Tensor& teacher_features, const LossWeights& w) {
  switch (kind) {
    case LossKind::Ce:
      return ce_from_probs(softmax_rows(logits, 1.0), labels);
    case LossKind::Scl:
      return scl_from_features(features, labels, w.scl_temperature);
    case LossKind::Kd:
      return kd_from_logits(teacher_logits, logits, w.kd_temperature);
    case LossKind::Fd:
      return fd_from_features(teacher_features, features);
    case LossKind::Dfil: {
      Var total = add(ce_from_probs(softmax_rows(logits, 1.0), labels),
                      scale(scl_from_features(features, labels,
                                              w.scl_temperature),
                            w.alpha));
      total = add(total, scale(kd_from_logits(teacher_logits, logits,
                                              w.kd_temperature),
                               w.beta));
      return add(total, scale(fd_from_features(teacher_features, features),
                              w.gamma));
    }
  }
  throw ParameterError("unreachable loss kind");
}

Var build_case_loss(Tape& tape, LossKind kind, const FlatModel& fm,
                    std::size_t var_index, Var x, const Tensor& inputs,
                    const std::vector<int>& labels,
                    const Tensor& teacher_logits,
                    const Tensor& teacher_features, const LossWeights& w) {
  auto [features, logits] = forward_mixed(tape, fm, var_index, x, inputs);
  return loss_from_outputs(kind, features, logits, labels, teacher_logits,
                           teacher_features, w);
}

// Finite differences sit badly on ReLU kinks: a probe that crosses one makes
// the central difference average two slopes. Reject draws whose student
// pre-activations are within the margin of the kink and resample. The margin
// scales with the weight spread because the probe-induced movement of a
// pre-activation does too.
//
// The row normalization inside the cosine has curvature growing like
// 1/norm^3, which inflates the finite-difference truncation error long
// before the norm reaches zero, so feature norms get their own, much wider
// margin.
constexpr double kFeatureNormMargin = 0.1;

bool well_conditioned(const Model& model, const Tensor& inputs,
                      double kink_margin) {
  Tensor h = inputs;
  for (const DenseLayer& l : model.encoder()) {
    Tensor z = add_rowvec(matmul(h, l.weight), l.bias);
    if (l.activation == Activation::ReLU) {
      for (double v : z.raw()) {
        if (std::abs(v) < kink_margin) return false;
      }
      h = relu(z);
      // A sample alive through a single unit produces a feature vector
      // parallel to one projection row; weight perturbations then move the
      // features radially, where the cosine is exactly flat and the
      // finite difference reads pure roundoff. Require two alive units.
      for (std::size_t i = 0; i < h.rows(); ++i) {
        std::size_t alive = 0;
        for (std::size_t c = 0; c < h.cols(); ++c) {
          if (h.at(i, c) > 0.0) ++alive;
        }
        if (alive < 2) return false;
      }
    } else {
      h = z;
    }
  }
  for (std::size_t i = 0; i < h.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < h.cols(); ++c) sq += h.at(i, c) * h.at(i, c);
    if (sq < kFeatureNormMargin * kFeatureNormMargin) return false;
  }
  return true;
}

struct GradCase {
  Model student;
  Model teacher;
  Tensor inputs;
  std::vector<int> labels;

  GradCase(Model s, Model t, Tensor in, std::vector<int> y)
      : student(std::move(s)),
        teacher(std::move(t)),
        inputs(std::move(in)),
        labels(std::move(y)) {}
};

// `spread` rescales the freshly initialized weights. Glorot-scale weights
// leave the logits within a fraction of a unit; at T=20 the distillation
// gradients then sit so close to the finite-difference roundoff floor
// (|f|*ulp / 2eps) that the comparison measures noise, so the distillation
// checks draw from widened weights that spread the logits to O(1..10).
GradCase draw_case(std::uint64_t seed, std::size_t batch,
                   std::size_t input_dim, double spread) {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = {12, 8};
  cfg.feature_dim = 6;
  const double margin = 1e-3 * spread * spread;
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t s = derive_seed(seed, {0x67, attempt});
    Rng rng(s);
    Model student = Model::init(cfg, derive_seed(s, {1}));
    Model teacher = Model::init(cfg, derive_seed(s, {2}));
    if (spread != 1.0) {
      for (Model* m : {&student, &teacher}) {
        std::vector<double> p = m->flat_parameters();
        for (double& v : p) v *= spread;
        m->set_flat_parameters(p);
      }
    }
    std::vector<double> values(batch * input_dim);
    for (double& v : values) v = rng.normal();
    Tensor inputs({batch, input_dim}, std::move(values));
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = i % 2 == 0 ? 0 : 1;
    rng.shuffle(labels);
    if (well_conditioned(student, inputs, margin)) {
      return GradCase(std::move(student), std::move(teacher),
                      std::move(inputs), std::move(labels));
    }
    if (attempt > 200) {
      throw StateError("verify_grad: could not draw a well-conditioned case");
    }
  }
}

// Central differences carry roundoff noise of about |f| * ulp / (2 eps),
// around 1e-10 here. A coordinate whose true gradient is tiny but not an
// exact structural zero (a live cancellation rather than a dead ReLU path)
// makes the relative comparison measure that noise instead of the gradient.
// Draws with any such coordinate are resampled.
constexpr double kIllPosedGradient = 1e-5;

bool gradients_well_posed(const GradCase& c, LossKind kind,
                          const Tensor& teacher_logits,
                          const Tensor& teacher_features,
                          const LossWeights& w) {
  Tape tape;
  Model::TapedParams params = c.student.register_on(tape);
  auto [features, logits] = Model::forward_on(
      params, c.student.activations(), tape.constant(c.inputs));
  Var loss = loss_from_outputs(kind, features, logits, c.labels,
                               teacher_logits, teacher_features, w);
  tape.backward(loss);
  for (double g : Model::collect_gradients(tape, params)) {
    if (g != 0.0 && std::abs(g) < kIllPosedGradient) return false;
  }
  return true;
}

}  // namespace

std::vector<CheckResult> verify_grad(std::size_t seeds, std::size_t batch,
                                     std::size_t input_dim) {
  LossWeights weights;  // defaults: alpha=beta=gamma=1, T=20, tau=0.1
  const LossKind kinds[] = {LossKind::Ce, LossKind::Scl, LossKind::Kd,
                            LossKind::Fd, LossKind::Dfil};
  std::vector<CheckResult> results;
  for (LossKind kind : kinds) {
    CheckResult r;
    r.name = std::string("grad/") + kind_name(kind);
    r.tolerance = 1e-4;
    const double spread = kind == LossKind::Kd ? 3.0 : 1.0;
    double worst = 0.0;
    std::string worst_detail;
    for (std::size_t s = 0; s < seeds; ++s) {
      std::size_t retry = 0;
      GradCase c = draw_case(derive_seed(7000 + s, {retry}), batch, input_dim,
                             spread);
      BatchOutput teacher_out = c.teacher.forward_batch(c.inputs);
      while (!gradients_well_posed(c, kind, teacher_out.logits,
                                   teacher_out.features, weights)) {
        if (++retry > 100) {
          throw StateError("verify_grad: no well-posed draw for " +
                           std::string(kind_name(kind)));
        }
        c = draw_case(derive_seed(7000 + s, {retry}), batch, input_dim,
                      spread);
        teacher_out = c.teacher.forward_batch(c.inputs);
      }
      const FlatModel fm = flatten(c.student);
      for (std::size_t p = 0; p < fm.params.size(); ++p) {
        auto f = [&](Tape& tape, Var x) {
          return build_case_loss(tape, kind, fm, p, x, c.inputs, c.labels,
                                 teacher_out.logits, teacher_out.features,
                                 weights);
        };
        const double err = grad_check(f, fm.params[p], 1e-5);
        if (err > worst) {
          worst = err;
          std::ostringstream os;
          os << "seed " << s << " param tensor " << p;
          worst_detail = os.str();
        }
      }
    }
    r.max_error = worst;
    r.pass = worst < r.tolerance;
    if (!r.pass) r.detail = worst_detail;
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<CheckResult> verify_losses() {
  std::vector<CheckResult> results;

  {
    CheckResult r;
    r.name = "losses/scl-term-by-term";
    r.tolerance = 1e-10;
    Rng rng(42);
    Tensor features = Tensor::zeros({4, 6});
    for (std::size_t i = 0; i < features.size(); ++i) {
      features.at(i) = rng.normal();
    }
    const std::vector<int> labels = {0, 1, 0, 1};
    double worst = 0.0;
    for (double tau : {0.05, 0.1, 0.5, 1.0}) {
      const double got = loss_scl(features, labels, tau);
      const double want = oracle::reference_scl(features, labels, tau);
      worst = std::max(worst, std::abs(got - want));
      if (std::abs(got - want) >= r.tolerance) {
        std::ostringstream os;
        os << "tau=" << tau << " got=" << got << " want=" << want;
        r.detail = os.str();
      }
    }
    r.max_error = worst;
    r.pass = worst < r.tolerance;
    results.push_back(std::move(r));
  }

  {
    CheckResult r;
    r.name = "losses/kd-equals-teacher-entropy";
    r.tolerance = 1e-10;
    Rng rng(43);
    Tensor logits = Tensor::zeros({6, 2});
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits.at(i) = rng.uniform(-3.0, 3.0);
    }
    double worst = 0.0;
    for (double t : {1.0, 5.0, 20.0}) {
      const double got = loss_kd(logits, logits, t);
      double want = 0.0;
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        want += oracle::reference_entropy(
            oracle::reference_softmax({logits.at(i, 0), logits.at(i, 1)}, t));
      }
      worst = std::max(worst, std::abs(got - want));
    }
    r.max_error = worst;
    r.pass = worst < r.tolerance;
    results.push_back(std::move(r));
  }

  {
    CheckResult r;
    r.name = "losses/fd-identity-zero";
    r.tolerance = 0.0;
    Rng rng(44);
    Tensor a = Tensor::zeros({5, 7});
    for (std::size_t i = 0; i < a.size(); ++i) a.at(i) = rng.normal();
    r.max_error = std::abs(loss_fd(a, a));
    r.pass = r.max_error == 0.0;
    results.push_back(std::move(r));
  }

  {
    CheckResult r;
    r.name = "losses/ce-uniform-equals-B-ln2";
    r.tolerance = 1e-12;
    const std::size_t batch = 5;
    std::vector<Prediction> preds(batch);
    for (Prediction& p : preds) {
      p.probs = Tensor({2}, {0.5, 0.5});
      p.logits = Tensor({2}, {0.0, 0.0});
      p.features = Tensor({1}, {0.0});
    }
    std::vector<int> labels = {0, 1, 0, 1, 0};
    const double got = loss_ce(preds, labels);
    const double want = static_cast<double>(batch) * std::log(2.0);
    r.max_error = std::abs(got - want);
    r.pass = r.max_error < r.tolerance;
    results.push_back(std::move(r));
  }

  return results;
}

namespace {

std::set<std::size_t> selection_indices(const std::vector<ReplayEntry>& sel) {
  std::set<std::size_t> out;
  for (const ReplayEntry& e : sel) out.insert(e.source_index);
  return out;
}

}  // namespace

std::vector<CheckResult> verify_replay(std::size_t datasets,
                                       std::uint64_t seed) {
  std::vector<CheckResult> results;

  {
    CheckResult r;
    r.name = "replay/entropy-values";
    r.tolerance = 1e-6;
    double worst = std::abs(entropy(Tensor({2}, {0.5, 0.5})) - std::log(2.0));
    const double degenerate = entropy(Tensor({2}, {1.0, 0.0}));
    if (degenerate != 0.0) worst = std::max(worst, std::abs(degenerate));
    worst = std::max(worst,
                     std::abs(entropy(Tensor({2}, {0.9, 0.1})) - 0.325083));
    r.max_error = worst;
    r.pass = worst < r.tolerance;
    results.push_back(std::move(r));
  }

  ModelConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden = {12, 8};
  cfg.feature_dim = 6;

  const char* strategies[] = {"hard_center", "all_hard", "all_easy",
                              "all_margin", "all_center"};
  CheckResult sorted_check;
  sorted_check.name = "replay/full-sort-oracle";
  sorted_check.tolerance = 0.0;
  sorted_check.pass = true;

  CheckResult random_check;
  random_check.name = "replay/random-contract";
  random_check.tolerance = 0.0;
  random_check.pass = true;

  for (std::size_t d = 0; d < datasets; ++d) {
    const std::uint64_t s = derive_seed(seed, {0x52, d});
    Rng rng(s);
    const Model model = Model::init(cfg, derive_seed(s, {1}));

    // 40 samples, 20 per class; rows 10..14 duplicate rows 0..4 so the
    // oracle's tie-break path is exercised with genuinely equal scores.
    const std::size_t n = 40;
    Tensor inputs = Tensor::zeros({n, 8});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = i < 20 ? 0 : 1;
      for (std::size_t c = 0; c < 8; ++c) inputs.at(i, c) = rng.normal();
    }
    for (std::size_t i = 10; i < 15; ++i) {
      for (std::size_t c = 0; c < 8; ++c) {
        inputs.at(i, c) = inputs.at(i - 10, c);
      }
    }
    Dataset data;
    data.domain = "verify";
    data.split = "train";
    data.inputs = std::move(inputs);
    data.labels = labels;

    const std::vector<ScoredSample> scored = score_samples(model, data);
    std::vector<double> entropies(n), distances(n);
    for (const ScoredSample& sample : scored) {
      entropies[sample.index] = sample.entropy;
      distances[sample.index] = sample.centroid_distance;
    }

    const std::size_t k = 20;
    for (const char* strategy : strategies) {
      Rng sel_rng(derive_seed(s, {2}));
      const auto got = selection_indices(
          select_replay(model, data, k, replay_strategy_from_string(strategy),
                        1, sel_rng));
      const auto want_vec = oracle::reference_select(labels, entropies,
                                                     distances, k, strategy);
      const std::set<std::size_t> want(want_vec.begin(), want_vec.end());
      if (got != want) {
        sorted_check.pass = false;
        sorted_check.max_error = 1.0;
        std::ostringstream os;
        os << "dataset " << d << " strategy " << strategy << ": got {";
        for (std::size_t i : got) os << i << " ";
        os << "} want {";
        for (std::size_t i : want) os << i << " ";
        os << "}";
        sorted_check.detail = os.str();
      }
    }

    // Random: exact-K, class-balanced, no duplicates, deterministic.
    Rng rng_a(derive_seed(s, {3}));
    Rng rng_b(derive_seed(s, {3}));
    const auto random_a =
        select_replay(model, data, k, ReplayStrategy::Random, 1, rng_a);
    const auto random_b =
        select_replay(model, data, k, ReplayStrategy::Random, 1, rng_b);
    const auto idx_a = selection_indices(random_a);
    const auto idx_b = selection_indices(random_b);
    std::size_t per_class[2] = {0, 0};
    for (const ReplayEntry& e : random_a) per_class[e.label] += 1;
    if (random_a.size() != k || idx_a.size() != k || idx_a != idx_b ||
        per_class[0] != k / 2 || per_class[1] != k / 2) {
      random_check.pass = false;
      random_check.max_error = 1.0;
      random_check.detail = "dataset " + std::to_string(d);
    }
  }
  results.push_back(std::move(sorted_check));
  results.push_back(std::move(random_check));
  return results;
}

std::vector<CheckResult> verify_metrics() {
  std::vector<CheckResult> results;

  {
    CheckResult r;
    r.name = "metrics/aa-reference-row";
    r.tolerance = 0.01;
    AccuracyMatrix matrix;
    matrix.push_row({0.0});
    matrix.push_row({0.0, 0.0});
    matrix.push_row({0.0, 0.0, 0.0});
    matrix.push_row({66.34, 62.16, 73.56, 81.13});
    const double aa = average_accuracy(matrix, 4);
    r.max_error = std::abs(aa - 70.79);
    r.pass = r.max_error <= r.tolerance;
    if (!r.pass) r.detail = "aa=" + std::to_string(aa);
    results.push_back(std::move(r));
  }

  {
    CheckResult r;
    r.name = "metrics/auc-dual-method";
    r.tolerance = 1e-12;
    double worst = 0.0;
    for (std::size_t trial = 0; trial < 50; ++trial) {
      Rng rng(derive_seed(31337, {trial}));
      const std::size_t n = 20;
      std::vector<double> scores(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = rng.uniform();
        // Coarse grid on half the trials so exact ties occur.
        if (trial % 2 == 0) scores[i] = std::round(scores[i] * 8.0) / 8.0;
        labels[i] = i < n / 2 ? 0 : 1;
      }
      rng.shuffle(labels);
      const double a = auc(scores, labels);
      const double b = oracle::reference_auc_trapezoid(scores, labels);
      worst = std::max(worst, std::abs(a - b));
    }
    r.max_error = worst;
    r.pass = worst < r.tolerance;
    results.push_back(std::move(r));
  }

  {
    CheckResult r;
    r.name = "metrics/auc-perfect-separation";
    r.tolerance = 0.0;
    const std::vector<double> scores = {0.9, 0.8, 0.85, 0.2, 0.1, 0.15};
    const std::vector<int> labels = {1, 1, 1, 0, 0, 0};
    r.max_error = std::abs(auc(scores, labels) - 1.0);
    r.pass = r.max_error == 0.0;
    results.push_back(std::move(r));
  }

  return results;
}

std::vector<CheckResult> verify_all() {
  std::vector<CheckResult> all;
  for (auto& r : verify_grad()) all.push_back(std::move(r));
  for (auto& r : verify_losses()) all.push_back(std::move(r));
  for (auto& r : verify_replay()) all.push_back(std::move(r));
  for (auto& r : verify_metrics()) all.push_back(std::move(r));
  return all;
}

}  // namespace dfil
