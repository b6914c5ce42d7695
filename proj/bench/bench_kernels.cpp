// Serial reference vs OpenMP path for the hot kernels. Each benchmark takes
// the execution policy as its argument: 0 = serial, 1 = parallel.

#include "physgs/gaussians.hpp"
#include "physgs/mpm/solver.hpp"
#include "physgs/propagate.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace physgs;

namespace {

Exec policy(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

std::vector<GaussianKernel> cloud(int n)
{
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 0.4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<GaussianKernel> ks;
    for (int i = 0; i < n; ++i) {
        const Vec3 s(0.01 + 0.03 * u(rng), 0.01 + 0.03 * u(rng), 0.01 + 0.03 * u(rng));
        ks.push_back(GaussianKernel::make(Vec3(g(rng), g(rng), g(rng)), 0.3 + 0.6 * u(rng),
                                          s.cwiseAbs2().asDiagonal(), Vec3(u(rng), u(rng), u(rng))));
    }
    return ks;
}

const Camera kCamera = Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3(0, -1, 0), 200.0, 256, 256);

void BM_Render(benchmark::State& state)
{
    const auto ks = cloud(5000);
    RenderSettings s;
    s.exec = policy(state);
    for (auto _ : state) {
        benchmark::DoNotOptimize(render(ks, kCamera, s));
    }
}
BENCHMARK(BM_Render)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RenderBackward(benchmark::State& state)
{
    const auto ks = cloud(5000);
    RenderSettings s;
    s.exec = policy(state);
    const RenderGrad g{Image(256, 256, 3, 0.1), Image(256, 256, 1, 0.1), Image()};
    for (auto _ : state) {
        benchmark::DoNotOptimize(render_backward(ks, kCamera, g, s));
    }
}
BENCHMARK(BM_RenderBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

mpm::MpmState sand_block()
{
    mpm::MpmState st;
    st.materials = {mpm::ConstitutiveModel::preset("sand")};
    st.grid = mpm::Grid(Vec3::Zero(), 1.0 / 32, {33, 33, 33});
    const double dx = 1.0 / 64;
    for (int i = 0; i < 24; ++i) {
        for (int j = 0; j < 24; ++j) {
            for (int k = 0; k < 24; ++k) {
                mpm::Particle p;
                p.position = Vec3(0.3, 0.3, 0.3) + dx * Vec3(i, j, k);
                p.mass = 1000.0 * dx * dx * dx;
                p.rest_volume = dx * dx * dx;
                p.velocity = Vec3(0.0, -0.5, 0.1);
                st.particles.push_back(p);
            }
        }
    }
    return st;
}

void BM_MpmSubstep(benchmark::State& state)
{
    mpm::MpmConfig cfg;
    cfg.exec = policy(state);
    const mpm::ExternalLoad gravity{mpm::ExternalLoad::Kind::Gravity, Vec3(0, -9.8, 0)};
    mpm::MpmState st = sand_block();
    for (auto _ : state) {
        mpm::substep(st, 1e-4, std::span(&gravity, 1), {}, cfg);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(st.particles.size()));
}
BENCHMARK(BM_MpmSubstep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

propagate::Tokens tokens(int n, int d, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    propagate::Tokens t(n, d);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        t.data()[i] = g(rng);
    }
    return t;
}

void BM_ExtendedAttention(benchmark::State& state)
{
    const propagate::Tokens q = tokens(1024, 64, 1);
    const std::vector<propagate::Tokens> k = {tokens(1024, 64, 2), tokens(1024, 64, 3), tokens(1024, 64, 4)};
    const std::vector<propagate::Tokens> v = {tokens(1024, 64, 5), tokens(1024, 64, 6), tokens(1024, 64, 7)};
    for (auto _ : state) {
        benchmark::DoNotOptimize(propagate::extended_attention(q, k, v, policy(state)));
    }
}
BENCHMARK(BM_ExtendedAttention)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_NearestNeighbor(benchmark::State& state)
{
    const propagate::Tokens a = tokens(1024, 64, 8);
    const propagate::Tokens b = tokens(1024, 64, 9);
    propagate::NnOptions o;
    o.exec = policy(state);
    for (auto _ : state) {
        benchmark::DoNotOptimize(propagate::nn_correspondence(a, b, o));
    }
}
BENCHMARK(BM_NearestNeighbor)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
