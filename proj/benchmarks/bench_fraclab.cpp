#include <benchmark/benchmark.h>

#include <vector>

#include "fraclab/dirichlet.hpp"
#include "fraclab/fractal.hpp"
#include "fraclab/heat.hpp"
#include "fraclab/resistance.hpp"
#include "fraclab/scaling.hpp"
#include "fraclab/verify.hpp"

using namespace fraclab;

static void BM_BuildGasket(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_prefractal(FamilyKind::Gasket, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_BuildGasket)->DenseRange(4, 8, 2)->Unit(benchmark::kMillisecond);

static void BM_BuildCarpet(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_prefractal(FamilyKind::Carpet, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_BuildCarpet)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

static void BM_PointResistance(benchmark::State& state) {
    const auto g = build_prefractal(FamilyKind::Gasket, static_cast<int>(state.range(0)));
    const EnergyForm form(g);
    const auto far = static_cast<VertexId>(g.size() - 1);
    for (auto _ : state) benchmark::DoNotOptimize(point_resistance(form, 0, far));
}
BENCHMARK(BM_PointResistance)->DenseRange(4, 8, 2)->Unit(benchmark::kMillisecond);

static void BM_CarpetResistanceSequence(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(compact_resistance_sequence(FamilyKind::Carpet, 1, 4));
}
BENCHMARK(BM_CarpetResistanceSequence)->Unit(benchmark::kMillisecond);

static void BM_Spectrum(benchmark::State& state) {
    const auto g = build_prefractal(FamilyKind::Gasket, static_cast<int>(state.range(0)));
    const EnergyForm form(g);
    for (auto _ : state) benchmark::DoNotOptimize(spectrum(form));
}
BENCHMARK(BM_Spectrum)->DenseRange(3, 5)->Unit(benchmark::kMillisecond);

static void BM_CrankNicolsonTable(benchmark::State& state) {
    const auto g = build_prefractal(FamilyKind::Gasket, 5);
    const EnergyForm form(g);
    const std::vector<double> times = {1.0, 10.0, 100.0};
    const std::vector<VertexId> sources = {0};
    std::vector<VertexId> targets(g.size());
    for (VertexId v = 0; v < g.size(); ++v) targets[v] = v;
    for (auto _ : state) benchmark::DoNotOptimize(heat_kernel_table(form, times, sources, targets, CrankNicolsonOptions{}));
}
BENCHMARK(BM_CrankNicolsonTable)->Unit(benchmark::kMillisecond);

static void BM_Upsilon(benchmark::State& state) {
    const auto e = preset("carpet");
    double r = 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(upsilon(e, r, 3.0));
        r = r < 100.0 ? r * 1.01 : 0.5;
    }
}
BENCHMARK(BM_Upsilon);

static void BM_VolumeCheck(benchmark::State& state) {
    const auto g = build_prefractal(FamilyKind::Gasket, 6);
    const auto e = preset("gasket");
    for (auto _ : state) benchmark::DoNotOptimize(check_volume(g, e, {}, "gasket"));
}
BENCHMARK(BM_VolumeCheck)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
