#include <benchmark/benchmark.h>

#include "perturbench/analysis.hpp"
#include "perturbench/attacks.hpp"
#include "perturbench/defenses.hpp"
#include "perturbench/metrics.hpp"
#include "perturbench/models.hpp"

using namespace perturbench;

namespace {

Image random_image(std::uint64_t seed, Shape shape = Shape{32, 32, 3}) {
    Rng rng(seed);
    Image x(shape);
    for (double& v : x.values()) v = rng.uniform();
    return x;
}

void BM_Projection(benchmark::State& state) {
    const Norm p = static_cast<Norm>(state.range(0));
    Rng rng(1);
    Perturbation d(Shape{32, 32, 3});
    for (double& v : d.values()) v = rng.normal();
    const LpBall ball{p, p == Norm::L1 ? 10.0 : p == Norm::L2 ? 1.0 : 8.0 / 255.0};
    for (auto _ : state) benchmark::DoNotOptimize(project_onto_ball(d, ball));
    state.SetLabel(to_string(p));
}
BENCHMARK(BM_Projection)->Arg(static_cast<int>(Norm::L1))->Arg(static_cast<int>(Norm::L2))->Arg(static_cast<int>(Norm::Linf));

void BM_Forward(benchmark::State& state) {
    const auto m = make_model(static_cast<ModelKind>(state.range(0)), 1);
    const Image x = random_image(2);
    for (auto _ : state) benchmark::DoNotOptimize(m->forward(x));
    state.SetLabel(m->name());
}
BENCHMARK(BM_Forward)->Arg(static_cast<int>(ModelKind::TinyCnn))->Arg(static_cast<int>(ModelKind::TinyVit));

void BM_InputGradient(benchmark::State& state) {
    const auto m = make_model(static_cast<ModelKind>(state.range(0)), 1);
    const Image x = random_image(3);
    for (auto _ : state) benchmark::DoNotOptimize(input_gradient(*m, x, 0));
    state.SetLabel(m->name());
}
BENCHMARK(BM_InputGradient)->Arg(static_cast<int>(ModelKind::TinyCnn))->Arg(static_cast<int>(ModelKind::TinyVit));

void BM_Pgd10(benchmark::State& state) {
    const auto m = make_model(ModelKind::TinyCnn, 1);
    const Image x = random_image(4);
    const LpBall ball{Norm::Linf, 8.0 / 255.0};
    for (auto _ : state) benchmark::DoNotOptimize(pgd(*m, x, 0, ball, 10, ball.epsilon / 10));
}
BENCHMARK(BM_Pgd10)->Unit(benchmark::kMillisecond);

void BM_Defense(benchmark::State& state) {
    const DefenseKind k = all_defenses()[static_cast<std::size_t>(state.range(0))];
    const Image x = random_image(5);
    for (auto _ : state) benchmark::DoNotOptimize(apply_defense(k, x));
    state.SetLabel(to_string(k));
}
BENCHMARK(BM_Defense)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

void BM_Ssim(benchmark::State& state) {
    const Image x = random_image(6), y = random_image(7);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(x, y));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMicrosecond);

void BM_DctSpectrum(benchmark::State& state) {
    const Image x = random_image(8), y = random_image(9);
    const Perturbation d = difference(x, y);
    for (auto _ : state) benchmark::DoNotOptimize(dct_spectrum(d));
}
BENCHMARK(BM_DctSpectrum)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
