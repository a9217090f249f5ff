// Serial reference vs OpenMP kernels.

#include "krein/assemble.hpp"
#include "krein/green.hpp"
#include "krein/measure.hpp"
#include "krein/mesh.hpp"

#include <benchmark/benchmark.h>

using namespace krein;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_AssembleStiffness(benchmark::State& s)
{
    const TriMesh m = gen_rectangle(1, 1, 64);
    for (auto _ : s) benchmark::DoNotOptimize(assemble_stiffness(m, StiffnessMode::Auto, exec_of(s)));
}
BENCHMARK(BM_AssembleStiffness)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_AssembleCrossMass(benchmark::State& s)
{
    const TriMesh m = gen_rectangle(1, 1, 64);
    const MeasureSpec mu = make_cross();
    for (auto _ : s) benchmark::DoNotOptimize(assemble_measure_mass(m, mu, exec_of(s)));
}
BENCHMARK(BM_AssembleCrossMass)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GreenApplyDisk(benchmark::State& s)
{
    const GreenKernel k = DiskDirichlet{1.0};
    const MeasureSpec mu = make_lines({{Vec2(-0.5, 0), Vec2(0.5, 0), 1.0}});
    const auto xs = sample_points(k, 12);
    const GreenOperator G(k, mu, [](const Vec3&) { return 1.0; });
    for (auto _ : s) benchmark::DoNotOptimize(G.apply(xs, exec_of(s)));
}
BENCHMARK(BM_GreenApplyDisk)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DimEstimate(benchmark::State& s)
{
    const MeasureSpec mu = make_cantor(10);
    const auto centers = default_centers(mu);
    for (auto _ : s)
        benchmark::DoNotOptimize(estimate_dim_infinity(mu, dyadic_grid(3, 9), centers, exec_of(s)));
}
BENCHMARK(BM_DimEstimate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
