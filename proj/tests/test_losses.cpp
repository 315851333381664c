#include <doctest.h>

#include <cmath>
#include <vector>

#include "dfil/errors.hpp"
#include "dfil/losses.hpp"
#include "dfil/model.hpp"
#include "dfil/oracles.hpp"
#include "dfil/rng.hpp"
#include "dfil/verify.hpp"

using namespace dfil;

namespace {

Prediction prediction_with_probs(double p_real) {
  Prediction p;
  p.probs = Tensor({2}, {p_real, 1.0 - p_real});
  p.logits = Tensor({2}, {0.0, 0.0});
  p.features = Tensor({1}, {0.0});
  return p;
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

Model tiny_model(std::uint64_t seed, std::size_t input_dim = 6) {
  ModelConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = {8};
  cfg.feature_dim = 4;
  return Model::init(cfg, seed);
}

}  // namespace

// ---- cross-entropy -----------------------------------------------------------

TEST_CASE("confident correct predictions contribute (almost) nothing") {
  std::vector<Prediction> preds = {prediction_with_probs(1.0),
                                   prediction_with_probs(0.0)};
  const std::vector<int> labels = {0, 1};
  // Clamping at 1e-12 turns the exact zeros into ~1e-12 contributions.
  CHECK(loss_ce(preds, labels) < 1e-10);
}

TEST_CASE("uniform predictions cost B ln 2") {
  for (std::size_t batch : {1u, 4u, 9u}) {
    std::vector<Prediction> preds(batch, prediction_with_probs(0.5));
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = i % 2;
    const double expected = static_cast<double>(batch) * std::log(2.0);
    CHECK(std::abs(loss_ce(preds, labels) - expected) < 1e-12);
  }
}

TEST_CASE("mixed batch matches the per-sample hand evaluation") {
  std::vector<Prediction> preds = {prediction_with_probs(0.8),
                                   prediction_with_probs(0.3),
                                   prediction_with_probs(0.6)};
  const std::vector<int> labels = {0, 1, 0};
  // -ln(0.8) - ln(1-0.3) - ln(0.6), evaluated in extended precision.
  const double frozen = 1.0906441190189329;
  CHECK(std::abs(loss_ce(preds, labels) - frozen) < 1e-12);
  CHECK(std::abs(loss_ce(preds, labels) -
                 oracle::reference_ce({0.8, 0.3, 0.6}, labels)) < 1e-12);
}

TEST_CASE("cross-entropy rejects an empty batch") {
  CHECK_THROWS_AS(loss_ce({}, {}), ParameterError);
}

TEST_CASE("cross-entropy is non-negative on random inputs") {
  Rng rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Prediction> preds;
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i) {
      preds.push_back(prediction_with_probs(rng.uniform()));
      labels.push_back(static_cast<int>(rng.below(2)));
    }
    CHECK(loss_ce(preds, labels) >= 0.0);
  }
}

// ---- supervised contrastive ----------------------------------------------------

TEST_CASE("two identical same-label vectors have zero contrastive loss") {
  const Tensor features({2, 3}, {1.0, 2.0, 3.0, 1.0, 2.0, 3.0});
  bool single_class = false;
  const double value = loss_scl(features, {1, 1}, 0.1, &single_class);
  CHECK(value == 0.0);
  CHECK(single_class);
}

TEST_CASE("contrastive loss is invariant to per-vector positive scaling") {
  Rng rng(60);
  const Tensor features = random_tensor({6, 5}, 61);
  const std::vector<int> labels = {0, 1, 0, 1, 1, 0};
  const double base = loss_scl(features, labels, 0.1);
  Tensor scaled = features;
  for (std::size_t i = 0; i < 6; ++i) {
    const double c = rng.uniform(0.2, 5.0);
    for (std::size_t j = 0; j < 5; ++j) scaled.at(i, j) *= c;
  }
  CHECK(std::abs(loss_scl(scaled, labels, 0.1) - base) < 1e-9);
}

TEST_CASE("fixed four-sample batch matches the term-by-term transcription") {
  const Tensor features({4, 3},
                        {0.3, -1.2, 0.8, 1.1, 0.4, -0.6, -0.9, 0.2, 1.5, 0.7,
                         -0.8, 0.1});
  const std::vector<int> labels = {0, 0, 1, 1};
  for (double tau : {0.05, 0.1, 0.7}) {
    const double got = loss_scl(features, labels, tau);
    const double want = oracle::reference_scl(features, labels, tau);
    CHECK(std::abs(got - want) < 1e-10);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("contrastive loss is invariant under batch permutation") {
  Rng rng(62);
  const Tensor features = random_tensor({7, 4}, 63);
  const std::vector<int> labels = {0, 1, 1, 0, 1, 0, 0};
  const double base = loss_scl(features, labels, 0.1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> perm(7);
    for (std::size_t i = 0; i < 7; ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor pf = Tensor::zeros({7, 4});
    std::vector<int> pl(7);
    for (std::size_t i = 0; i < 7; ++i) {
      pl[i] = labels[perm[i]];
      for (std::size_t j = 0; j < 4; ++j) pf.at(i, j) = features.at(perm[i], j);
    }
    CHECK(std::abs(loss_scl(pf, pl, 0.1) - base) < 1e-9);
  }
}

TEST_CASE("contrastive loss error paths") {
  CHECK_THROWS_AS(loss_scl(Tensor({1, 3}, {1, 2, 3}), {0}, 0.1),
                  ParameterError);
  CHECK_THROWS_AS(
      loss_scl(Tensor({2, 2}, {0.0, 0.0, 1.0, 1.0}), {0, 1}, 0.1),
      NumericError);
  CHECK_THROWS_AS(loss_scl(random_tensor({4, 3}, 1), {0, 1, 0, 1}, 0.0),
                  ParameterError);
}

// ---- soft-label distillation ------------------------------------------------------

TEST_CASE("matched teacher and student cost the teacher entropy") {
  const Tensor logits = random_tensor({5, 2}, 70, -3.0, 3.0);
  for (double t : {1.0, 20.0}) {
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      want += oracle::reference_entropy(
          oracle::reference_softmax({logits.at(i, 0), logits.at(i, 1)}, t));
    }
    CHECK(std::abs(loss_kd(logits, logits, t) - want) < 1e-10);
  }
}

TEST_CASE("uniform teacher averages the student log-probabilities") {
  const Tensor teacher = Tensor::zeros({3, 2});  // equal logits -> uniform
  const Tensor student = random_tensor({3, 2}, 71, -2.0, 2.0);
  const double t = 4.0;
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto ps =
        oracle::reference_softmax({student.at(i, 0), student.at(i, 1)}, t);
    want -= 0.5 * (std::log(ps[0]) + std::log(ps[1]));
  }
  CHECK(std::abs(loss_kd(teacher, student, t) - want) < 1e-12);
}

TEST_CASE("crossed logits at T=20 match the extended-precision value") {
  const Tensor teacher({1, 2}, {2.0, 0.0});
  const Tensor student({1, 2}, {0.0, 2.0});
  // Frozen from the long-double direct formula.
  CHECK(std::abs(loss_kd(teacher, student, 20.0) - 0.6968945788214649) < 1e-12);
}

TEST_CASE("distillation is minimized on the teacher's logit shift class") {
  const Tensor teacher = random_tensor({3, 2}, 72, -2.0, 2.0);
  const double t = 20.0;
  const double base = loss_kd(teacher, teacher, t);

  Tensor shifted = teacher;
  for (std::size_t i = 0; i < 3; ++i) {
    shifted.at(i, 0) += 1.7;
    shifted.at(i, 1) += 1.7;
  }
  CHECK(std::abs(loss_kd(teacher, shifted, t) - base) < 1e-12);

  for (double delta : {1e-3, 0.1, 1.0}) {
    Tensor perturbed = teacher;
    for (std::size_t i = 0; i < 3; ++i) {
      perturbed.at(i, 0) += delta;
      perturbed.at(i, 1) -= delta;
    }
    CHECK(loss_kd(teacher, perturbed, t) > base);
  }
}

TEST_CASE("distillation error paths") {
  const Tensor a = random_tensor({2, 2}, 73);
  CHECK_THROWS_AS(loss_kd(a, random_tensor({3, 2}, 74), 20.0), DimensionError);
  CHECK_THROWS_AS(loss_kd(a, a, 0.0), ParameterError);
}

// ---- feature distillation -----------------------------------------------------------

TEST_CASE("feature distillation examples") {
  const Tensor a = random_tensor({3, 4}, 80);
  CHECK(loss_fd(a, a) == 0.0);

  const Tensor zeros = Tensor::zeros({1, 16});
  const Tensor ones = Tensor::full({1, 16}, 1.0);
  CHECK(loss_fd(zeros, ones) == 16.0);

  const Tensor b = random_tensor({3, 4}, 81);
  CHECK(std::abs(loss_fd(a, b) - oracle::reference_fd(a, b)) < 1e-12);
  CHECK(loss_fd(a, b) == loss_fd(b, a));  // symmetric
  CHECK_THROWS_AS(loss_fd(a, random_tensor({2, 4}, 82)), DimensionError);
}

// ---- combined objective ----------------------------------------------------------

namespace {

Batch make_batch(std::uint64_t seed, std::size_t n, std::size_t d) {
  Batch batch;
  batch.inputs = random_tensor({n, d}, seed);
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.labels[i] = i % 2;
  Rng rng(seed + 1);
  rng.shuffle(batch.labels);
  batch.sources.assign(n, SourceTag{false, 1});
  return batch;
}

}  // namespace

TEST_CASE("zero weights reduce the objective to cross-entropy") {
  const Model student = tiny_model(90);
  const Batch batch = make_batch(91, 6, 6);
  LossWeights weights;
  weights.alpha = 0.0;
  weights.beta = 0.0;
  weights.gamma = 0.0;
  const LossComponents c = loss_dfil(batch, student, nullptr, weights, true);
  CHECK(c.total == c.ce);
}

TEST_CASE("first task reports distillation components as absent") {
  const Model student = tiny_model(92);
  const Batch batch = make_batch(93, 6, 6);
  const LossComponents c =
      loss_dfil(batch, student, nullptr, LossWeights{}, true);
  CHECK_FALSE(c.kd.has_value());
  CHECK_FALSE(c.fd.has_value());
  CHECK(c.total == doctest::Approx(c.ce + c.scl).epsilon(1e-14));
}

TEST_CASE("combined value equals the sum of independently computed terms") {
  const Model student = tiny_model(94);
  const Model teacher = tiny_model(95);
  const Batch batch = make_batch(96, 8, 6);
  LossWeights weights;  // all ones

  const LossComponents c =
      loss_dfil(batch, student, &teacher, weights, false);

  const BatchOutput s = student.forward_batch(batch.inputs);
  const BatchOutput t = teacher.forward_batch(batch.inputs);
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Prediction p;
    p.features = s.features.row(i);
    p.logits = s.logits.row(i);
    p.probs = s.probs.row(i);
    preds.push_back(std::move(p));
  }
  const double ce = loss_ce(preds, batch.labels);
  const double scl =
      loss_scl(s.features, batch.labels, weights.scl_temperature);
  const double kd = loss_kd(t.logits, s.logits, weights.kd_temperature);
  const double fd = loss_fd(t.features, s.features);

  CHECK(std::abs(c.ce - ce) < 1e-12);
  CHECK(std::abs(c.scl - scl) < 1e-12);
  CHECK(std::abs(*c.kd - kd) < 1e-12);
  CHECK(std::abs(*c.fd - fd) < 1e-12);
  CHECK(std::abs(c.total - (ce + scl + kd + fd)) < 1e-12);
}

TEST_CASE("teacher protocol is enforced") {
  const Model student = tiny_model(97);
  const Model teacher = tiny_model(98);
  const Batch batch = make_batch(99, 4, 6);
  CHECK_THROWS_AS(loss_dfil(batch, student, nullptr, LossWeights{}, false),
                  ProtocolError);
  CHECK_THROWS_AS(loss_dfil(batch, student, &teacher, LossWeights{}, true),
                  ProtocolError);
}

TEST_CASE("mean reduction divides every component by the batch size") {
  const Model student = tiny_model(100);
  const Model teacher = tiny_model(101);
  const Batch batch = make_batch(102, 8, 6);
  const LossComponents sums =
      loss_dfil(batch, student, &teacher, LossWeights{}, false);
  LossOptions options;
  options.mean_reduction = true;
  const LossComponents means =
      loss_dfil(batch, student, &teacher, LossWeights{}, false, options);
  CHECK(std::abs(means.ce - sums.ce / 8.0) < 1e-14);
  CHECK(std::abs(means.scl - sums.scl / 8.0) < 1e-14);
  CHECK(std::abs(*means.kd - *sums.kd / 8.0) < 1e-14);
  CHECK(std::abs(*means.fd - *sums.fd / 8.0) < 1e-14);
}

TEST_CASE("T^2 rescaling multiplies only the distillation term") {
  const Model student = tiny_model(103);
  const Model teacher = tiny_model(104);
  const Batch batch = make_batch(105, 6, 6);
  LossWeights weights;
  const LossComponents plain =
      loss_dfil(batch, student, &teacher, weights, false);
  LossOptions options;
  options.kd_t_squared = true;
  const LossComponents scaled =
      loss_dfil(batch, student, &teacher, weights, false, options);
  const double t2 = weights.kd_temperature * weights.kd_temperature;
  CHECK(std::abs(*scaled.kd - *plain.kd * t2) < 1e-9);
  CHECK(scaled.ce == plain.ce);
}

// ---- gradients ------------------------------------------------------------------

TEST_CASE("every loss gradient matches central finite differences") {
  // Three random configurations through the shared verification suite;
  // the acceptance run uses twenty.
  for (const CheckResult& r : verify_grad(3)) {
    INFO(r.name, " max_error=", r.max_error);
    CHECK(r.pass);
  }
}

TEST_CASE("cross-entropy gradient of a one-layer model on one sample") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {};
  cfg.feature_dim = 3;
  const Model m = Model::init(cfg, 7);
  const Tensor x = random_tensor({1, 4}, 8);
  const std::vector<int> labels = {1};

  // Probe the encoder weight matrix.
  const Tensor w = m.encoder()[0].weight;
  const double err = grad_check(
      [&](Tape& tape, Var wv) {
        Var h = add_rowvec(matmul(tape.constant(x), wv),
                           tape.constant(m.encoder()[0].bias));
        Var logits = add_rowvec(matmul(h, tape.constant(m.classifier().weight)),
                                tape.constant(m.classifier().bias));
        return ce_from_probs(softmax_rows(logits, 1.0), labels);
      },
      w, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("contrastive gradient on a batch of eight features") {
  const Tensor features = random_tensor({8, 5}, 9);
  const std::vector<int> labels = {0, 1, 0, 1, 1, 0, 1, 0};
  const double err = grad_check(
      [&labels](Tape&, Var f) {
        return scl_from_features(f, labels, 0.1);
      },
      features, 1e-5);
  CHECK(err < 1e-4);
}
