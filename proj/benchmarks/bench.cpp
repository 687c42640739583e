#include <benchmark/benchmark.h>

#include <random>

#include "it2mpc/config.hpp"
#include "it2mpc/lmi.hpp"
#include "it2mpc/mpc_sim.hpp"
#include "it2mpc/numerics.hpp"
#include "it2mpc/pipeline.hpp"
#include "it2mpc/synthesis.hpp"

using namespace it2mpc;

namespace {

const SystemConfig& example1() {
    static const SystemConfig cfg = load_config(std::string(IT2MPC_BENCH_CONFIG_DIR) + "/example1.json");
    return cfg;
}

SymMatrix random_sym(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(n, n);
    for (double& e : m.data()) e = u(rng);
    return SymMatrix(m);
}

DecisionVars reference_dv() {
    const SystemConfig& c = example1();
    DecisionVars dv;
    dv.gains = *c.gains;
    for (std::size_t i = 0; i < c.system.size(); ++i) {
        dv.xi.push_back(1.0);
        dv.Z.push_back(input_bound_matrix(dv.gains[i], 1e-9));
    }
    return dv;
}

}  // namespace

static void BM_sym_eig(benchmark::State& state) {
    const SymMatrix a = random_sym(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(sym_eig(a));
}
BENCHMARK(BM_sym_eig)->Arg(4)->Arg(8)->Arg(16)->Arg(32);

static void BM_assemble_thm1(benchmark::State& state) {
    const SystemConfig& c = example1();
    const DecisionVars dv = reference_dv();
    for (auto _ : state) benchmark::DoNotOptimize(assemble_thm1(c.system, c.fixed, dv, 0, 1, 1));
}
BENCHMARK(BM_assemble_thm1);

static void BM_assemble_thm2(benchmark::State& state) {
    const SystemConfig& c = example1();
    const DecisionVars dv = reference_dv();
    for (auto _ : state) benchmark::DoNotOptimize(assemble_thm2(c.system, c.fixed, dv, 0, 1, 1));
}
BENCHMARK(BM_assemble_thm2);

static void BM_evaluate_instances(benchmark::State& state) {
    const SystemConfig& c = example1();
    const DecisionVars dv = reference_dv();
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_instances(c.system, c.fixed, dv, c.synthesis.tol));
}
BENCHMARK(BM_evaluate_instances);

static void BM_synthesize_example1(benchmark::State& state) {
    const SystemConfig& c = example1();
    for (auto _ : state) benchmark::DoNotOptimize(synthesize(c.system, c.fixed, c.simulation.x0, c.synthesis));
}
BENCHMARK(BM_synthesize_example1)->Unit(benchmark::kMillisecond)->Iterations(3);

static void BM_resynthesis_warm(benchmark::State& state) {
    const SystemConfig& c = example1();
    const PipelineResult r = synthesize(c.system, c.fixed, c.simulation.x0, c.synthesis);
    const StateSet x = step_closed_loop(c.system, r.result.dv.gains, c.simulation.x0, zero_disturbances(c.system), c.step_options());
    for (auto _ : state) benchmark::DoNotOptimize(minimize_xi(c.system, r.fixed, x, c.synthesis, &r.result.dv));
}
BENCHMARK(BM_resynthesis_warm)->Unit(benchmark::kMillisecond);

static void BM_rpi_monte_carlo(benchmark::State& state) {
    const SystemConfig& c = example1();
    const PipelineResult r = synthesize(c.system, c.fixed, c.simulation.x0, c.synthesis);
    for (auto _ : state) benchmark::DoNotOptimize(rpi_monte_carlo(c.system, r.fixed, r.result.dv, 1000, 7));
}
BENCHMARK(BM_rpi_monte_carlo)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
