#include <benchmark/benchmark.h>

#include "scefis/features.hpp"
#include "scefis/fuzzy.hpp"
#include "scefis/keypoints.hpp"
#include "scefis/synthetic.hpp"
#include "scefis/thresholding.hpp"

using namespace scefis;

namespace {

const SyntheticCase& scene() {
    static const auto c = [] {
        SyntheticOptions o;
        o.count = 1;
        o.min_rows = o.max_rows = 240;
        o.min_cols = o.max_cols = 320;
        return generate_synthetic(o).front();
    }();
    return c;
}

Matrix random_matrix(SplitMix64& rng, Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(0, 255);
    return m;
}

void BM_GlobalThresholds(benchmark::State& state) {
    const auto h = histogram(scene().image);
    for (auto _ : state) {
        benchmark::DoNotOptimize(otsu(h));
        benchmark::DoNotOptimize(kittler(h));
        benchmark::DoNotOptimize(huang(h));
        benchmark::DoNotOptimize(tizhoosh_interval(h));
    }
}
BENCHMARK(BM_GlobalThresholds);

void BM_Niblack(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(niblack(scene().image));
}
BENCHMARK(BM_Niblack)->Unit(benchmark::kMillisecond);

void BM_MaaSearch(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(maa_search(scene().image, scene().gold));
}
BENCHMARK(BM_MaaSearch)->Unit(benchmark::kMicrosecond);

void BM_DetectInterestPoints(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(detect_interest_points(scene().image));
}
BENCHMARK(BM_DetectInterestPoints)->Unit(benchmark::kMillisecond);

void BM_SeedFeatures(benchmark::State& state) {
    SeedPoint seed;
    seed.x = 160;
    seed.y = 120;
    for (std::size_t i = 0; i < seed.descriptor.size(); ++i) seed.descriptor[i] = static_cast<double>(i % 17);
    const int z = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(seed_features(scene().image, seed, z));
}
BENCHMARK(BM_SeedFeatures)->Arg(11)->Arg(31)->Arg(61)->Unit(benchmark::kMicrosecond);

void BM_GenerateRules(benchmark::State& state) {
    SplitMix64 rng(3);
    TrainingStore store;
    const auto rows = state.range(0);
    store.append(random_matrix(rng, rows, 32), random_matrix(rng, rows, 1).col(0));
    for (auto _ : state) benchmark::DoNotOptimize(generate_rules(store));
}
BENCHMARK(BM_GenerateRules)->Arg(40)->Arg(120)->Arg(280)->Unit(benchmark::kMillisecond);

void BM_InferBlock(benchmark::State& state) {
    SplitMix64 rng(4);
    TrainingStore store;
    store.append(random_matrix(rng, 200, 32), random_matrix(rng, 200, 1).col(0));
    const auto rb = generate_rules(store);
    const auto rows = random_matrix(rng, 8, 32);
    for (auto _ : state) benchmark::DoNotOptimize(infer_block(rb, rows));
}
BENCHMARK(BM_InferBlock)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
