#include <benchmark/benchmark.h>

#include <vector>

#include "pdda/kernels.hpp"
#include "pdda/policy.hpp"

using namespace pdda;
using kernels::Exec;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

std::vector<float> random_floats(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(2.0 * rng.uniform() - 1.0);
    return v;
}

// First convolution of the policy network as im2col + gemm.
void BM_Conv1Gemm(benchmark::State& state) {
    const kernels::ConvGeometry g = policy::NetShape::standard().conv1();
    Rng rng(1);
    const auto w = random_floats(static_cast<std::size_t>(g.out_c) * g.patch(), rng);
    const auto bias = random_floats(g.out_c, rng);
    const auto in = random_floats(static_cast<std::size_t>(g.in_h) * g.in_w, rng);
    std::vector<float> cols(static_cast<std::size_t>(g.positions()) * g.patch()), out(g.out_c * g.positions());
    kernels::im2col(g, in.data(), cols.data());
    for (auto _ : state) {
        kernels::gemm_nt(exec_of(state), g.out_c, g.positions(), g.patch(), w.data(), cols.data(), bias.data(),
                         out.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * g.out_c * g.positions() * g.patch());
}

void BM_DenseBackward(benchmark::State& state) {
    // Dense layer: one sample, hidden x flattened conv features.
    const auto shape = policy::NetShape::standard();
    const int m = shape.hidden, n = 1, k = shape.flat_size();
    Rng rng(2);
    const auto g = random_floats(m * n, rng), b = random_floats(n * k, rng), w = random_floats(m * k, rng);
    std::vector<float> acc(m * k), bias_acc(m), out(n * k);
    for (auto _ : state) {
        kernels::gemm_nn_acc(exec_of(state), m, n, k, g.data(), b.data(), acc.data(), bias_acc.data());
        kernels::gemm_tn(exec_of(state), m, n, k, g.data(), w.data(), out.data());
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_Forward(benchmark::State& state) {
    policy::TrainConfig tc;
    const auto net = policy::policy_new(tc);
    const GameState s = new_game(EnvConfig{}, 3);
    const auto input = policy::frame_input<float>(render_frame(EnvConfig{}, s));
    policy::ForwardCache<float> cache;
    for (auto _ : state) {
        policy::forward(net, std::span<const float>(input), cache, exec_of(state));
        benchmark::DoNotOptimize(cache.value);
    }
}

void BM_A2cUpdate(benchmark::State& state) {
    policy::TrainConfig tc;
    auto net = policy::policy_new(tc);
    policy::RmsPropState opt;
    const EnvConfig env;
    policy::RolloutBuffer rb;
    GameState s = new_game(env, 4);
    for (int t = 0; t < tc.n_steps; ++t) {
        rb.steps.push_back({render_frame(env, s), ActionId::MoveLeft, 0.01 * t, false, 0.0, -2.0});
        s = step(env, s, ActionId::MoveRight, ActionId::MoveLeft).next;
    }
    for (auto _ : state) {
        const auto report = policy::a2c_update(net, opt, rb, tc, exec_of(state));
        benchmark::DoNotOptimize(report.total);
    }
}

}  // namespace

BENCHMARK(BM_Conv1Gemm)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_DenseBackward)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->ArgName("parallel");
BENCHMARK(BM_A2cUpdate)->Arg(0)->Arg(1)->ArgName("parallel");

int main(int argc, char** argv) {
    kernels::flush_denormals();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
