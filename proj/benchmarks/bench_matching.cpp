#include <benchmark/benchmark.h>

#include <fmt/format.h>
#include <vector>

#include "annostudy/matching.hpp"
#include "annostudy/rng.hpp"

using namespace annostudy;

namespace {

std::vector<AnnotationRecord> random_annotations(std::size_t count, int annotators,
                                                 std::uint64_t seed) {
    Rng rng(seed);
    std::vector<AnnotationRecord> records;
    records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        AnnotationRecord record;
        record.id = fmt::format("a{:05}", i);
        record.image_id = "img";
        record.annotator_id = fmt::format("expert_{:02}", rng.uniform_int(1, annotators));
        const double cx = rng.uniform(30.0, 970.0);
        const double cy = rng.uniform(30.0, 970.0);
        record.box = box_from_point(cx, cy, 25.0);
        record.label = "mitotic_figure";
        records.push_back(std::move(record));
    }
    return records;
}

void BM_Iou(benchmark::State& state) {
    const auto records = random_annotations(2, 1, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(iou(records[0].box, records[1].box));
    }
}
BENCHMARK(BM_Iou);

void BM_MatchSets(benchmark::State& state) {
    const auto candidates = random_annotations(static_cast<std::size_t>(state.range(0)), 1, 11);
    const auto references = random_annotations(static_cast<std::size_t>(state.range(0)), 1, 13);
    for (auto _ : state) {
        benchmark::DoNotOptimize(match_sets(candidates, references, 0.5));
    }
}
BENCHMARK(BM_MatchSets)->Arg(32)->Arg(128)->Arg(512);

void BM_ClusterConsensus(benchmark::State& state) {
    const auto records = random_annotations(static_cast<std::size_t>(state.range(0)), 10, 17);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cluster_consensus(records, 0.5, TaskKind::Mitosis));
    }
}
BENCHMARK(BM_ClusterConsensus)->Arg(32)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
