#include <benchmark/benchmark.h>

#include "annostudy/classifier.hpp"
#include "annostudy/rng.hpp"
#include "annostudy/votes_loss.hpp"

using namespace annostudy;

namespace {

VoteWeightedBatch random_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    VoteWeightedBatch batch;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(dim);
        for (double& f : row) f = rng.normal();
        batch.features.push_back(std::move(row));
        batch.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
        batch.votes.push_back(rng.uniform_int(1, 10));
    }
    batch.set_vote_bounds();
    return batch;
}

void BM_VotesLoss(benchmark::State& state) {
    const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 8, 3);
    Rng rng(5);
    std::vector<double> predictions(batch.size());
    for (double& p : predictions) p = rng.uniform(0.01, 0.99);
    for (auto _ : state) {
        benchmark::DoNotOptimize(votes_loss(batch, predictions));
    }
}
BENCHMARK(BM_VotesLoss)->Arg(256)->Arg(4096);

void BM_LossGradientLinear(benchmark::State& state) {
    const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 8, 3);
    auto model = ClassifierModel::linear(8);
    Rng rng(9);
    model.init_random(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_gradient(batch, model, LossKind::Votes));
    }
}
BENCHMARK(BM_LossGradientLinear)->Arg(256)->Arg(4096);

void BM_LossGradientHidden(benchmark::State& state) {
    const auto batch = random_batch(static_cast<std::size_t>(state.range(0)), 8, 3);
    auto model = ClassifierModel::one_hidden(8, 32);
    Rng rng(9);
    model.init_random(rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_gradient(batch, model, LossKind::Votes));
    }
}
BENCHMARK(BM_LossGradientHidden)->Arg(256)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
