#include <benchmark/benchmark.h>

#include <vector>

#include "dfil/datasets.hpp"
#include "dfil/losses.hpp"
#include "dfil/metrics.hpp"
#include "dfil/model.hpp"
#include "dfil/replay.hpp"
#include "dfil/rng.hpp"
#include "dfil/tensor.hpp"
#include "dfil/trainer.hpp"

namespace {

dfil::Tensor random_matrix(std::size_t rows, std::size_t cols,
                           std::uint64_t seed) {
  dfil::Rng rng(seed);
  dfil::Tensor t = dfil::Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal();
  return t;
}

dfil::Batch random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  dfil::Batch batch;
  batch.inputs = random_matrix(n, d, seed);
  batch.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) batch.labels[i] = i % 2;
  batch.sources.assign(n, dfil::SourceTag{false, 1});
  return batch;
}

void MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const dfil::Tensor a = random_matrix(n, n, 1);
  const dfil::Tensor b = random_matrix(n, n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dfil::matmul(a, b));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(MatmulForward)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void SoftmaxRows(benchmark::State& state) {
  const dfil::Tensor z = random_matrix(256, 2, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dfil::softmax_rows(z, 20.0));
  }
}
BENCHMARK(SoftmaxRows);

void DfilLossWithGrad(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  dfil::ModelConfig cfg;
  const dfil::Model student = dfil::Model::init(cfg, 1);
  const dfil::Model teacher = dfil::Model::init(cfg, 2);
  const dfil::Batch batch = random_batch(batch_size, cfg.input_dim, 5);
  const dfil::LossWeights weights;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dfil::loss_dfil_with_grad(
        batch, student, &teacher, weights, false));
  }
}
BENCHMARK(DfilLossWithGrad)->Arg(8)->Arg(32)->Arg(128);

void ReplaySelection(benchmark::State& state) {
  const auto per_class = static_cast<std::size_t>(state.range(0));
  dfil::ModelConfig cfg;
  const dfil::Model model = dfil::Model::init(cfg, 7);
  dfil::Dataset data;
  data.domain = "bench";
  data.split = "train";
  data.inputs = random_matrix(2 * per_class, cfg.input_dim, 11);
  data.labels.resize(2 * per_class);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    data.labels[i] = i < per_class ? 0 : 1;
  }
  for (auto _ : state) {
    dfil::Rng rng(13);
    benchmark::DoNotOptimize(dfil::select_replay(
        model, data, 40, dfil::ReplayStrategy::HardCenter, 1, rng));
  }
}
BENCHMARK(ReplaySelection)->Arg(200)->Arg(2000);

void AucPairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  dfil::Rng rng(17);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    labels[i] = i % 2;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(dfil::auc(scores, labels));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(AucPairwise)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void TrainingEpoch(benchmark::State& state) {
  dfil::StreamSpec spec = dfil::preset("two-domain");
  for (dfil::DomainSpec& d : spec.domains) {
    d.n_train_per_class = 100;
    d.n_test_per_class = 10;
  }
  const dfil::TaskSequence seq = dfil::generate_stream(spec, 3);
  dfil::TrainConfig cfg;
  cfg.epochs_per_task = 1;
  cfg.seed = 3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dfil::run_dfil(seq, cfg));
  }
}
BENCHMARK(TrainingEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
