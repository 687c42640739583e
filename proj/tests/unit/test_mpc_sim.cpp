#include <doctest.h>

#include <cmath>
#include <random>

#include "it2mpc/config.hpp"
#include "it2mpc/mpc_sim.hpp"
#include "it2mpc/pipeline.hpp"
#include "support.hpp"

using namespace it2mpc;
using namespace it2mpc::testing;

namespace {

const SystemConfig& example1() {
    static const SystemConfig cfg = load_config(config_path("example1.json"));
    return cfg;
}

const PipelineResult& example1_synthesis() {
    static const PipelineResult r = [] {
        const SystemConfig& c = example1();
        return synthesize(c.system, c.fixed, c.simulation.x0, c.synthesis);
    }();
    return r;
}

OnlineOptions once_with(const DecisionVars& dv) {
    OnlineOptions o;
    o.Ts = example1().Ts;
    o.resynth = Resynth::once;
    o.step = example1().step_options();
    o.given = &dv;
    return o;
}

}  // namespace

TEST_CASE("stage cost") {
    const std::vector<SymMatrix> Q{SymMatrix::identity(2)}, R{SymMatrix::identity(1)};
    const Vector tau{1.5};
    CHECK(stage_cost({{0, 0}}, {{0}}, {{0}}, Q, R, tau) == 0.0);
    CHECK(stage_cost({{1, 0}}, {{0}}, {{0}}, Q, R, tau) == 1.0);

    std::mt19937_64 rng(3);
    const SymMatrix Qr = random_spd(rng, 2), Rr = random_spd(rng, 1);
    const Vector x = random_vector(rng, 2), u = random_vector(rng, 1), d = random_vector(rng, 1);
    const double expect = Qr(0, 0) * x[0] * x[0] + 2 * Qr(0, 1) * x[0] * x[1] + Qr(1, 1) * x[1] * x[1] +
                          Rr(0, 0) * u[0] * u[0] - 1.5 * d[0] * d[0];
    CHECK(stage_cost({x}, {u}, {d}, {Qr}, {Rr}, tau) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("Lyapunov value") {
    CHECK(lyapunov_value(Vector{0, 0}, SymMatrix{{2, 1}, {1, 3}}) == 0.0);
    CHECK(lyapunov_value(Vector{3, 4}, SymMatrix::identity(2)) == 25.0);
    const PipelineResult& r = example1_synthesis();
    const SymMatrix P = (1.0 / r.result.dv.xi[0]) * r.fixed.X[0];
    const Vector x{1, -1};
    CHECK(lyapunov_value(x, P) ==
          doctest::Approx(P(0, 0) - 2 * P(0, 1) + P(1, 1)).epsilon(1e-14));
}

TEST_CASE("zero initial state stays at zero with zero cost") {
    const SystemConfig& c = example1();
    DecisionVars dv;
    dv.gains = *c.gains;
    const SimulationTrace tr = run_online_loop(c.system, c.fixed, c.synthesis, zero_states(c.system), 10,
                                               DisturbanceModel{}, once_with(dv));
    REQUIRE(tr.steps.size() == 10);
    for (const auto& st : tr.steps) {
        for (const auto& x : st.x)
            for (double v : x) CHECK(v == 0.0);
        CHECK(st.psi == 0.0);
    }
    CHECK(total_cost(tr, 10, c.fixed) == 0.0);
    const IssReport iss = iss_check(c.system, tr, c.fixed);
    CHECK(iss.steps_checked == 0);
    CHECK(iss.decrease_violations == 0);
}

TEST_CASE("total cost: hand case and terminal-only horizon") {
    const SystemConfig& c = example1();
    const PipelineResult& r = example1_synthesis();
    const SimulationTrace tr = run_online_loop(c.system, r.fixed, c.synthesis, c.simulation.x0, 3, DisturbanceModel{},
                                               once_with(r.result.dv));
    double terminal0 = 0.0, terminal1 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const SymMatrix P0 = (1.0 / tr.steps[0].xi[i]) * r.fixed.X[i];
        const SymMatrix P1 = (1.0 / tr.steps[1].xi[i]) * r.fixed.X[i];
        terminal0 += quad_form(P0.matrix(), tr.steps[0].x[i]);
        terminal1 += quad_form(P1.matrix(), tr.steps[1].x[i]);
    }
    CHECK(total_cost(tr, 0, r.fixed) == doctest::Approx(terminal0).epsilon(1e-14));
    CHECK(total_cost(tr, 1, r.fixed) == doctest::Approx(tr.steps[0].psi + terminal1).epsilon(1e-14));

    // psi of the first step from its definition.
    double psi = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double R = r.fixed.M[i] / tr.steps[0].xi[i];
        psi += quad_form(r.fixed.Q[i].matrix(), tr.steps[0].x[i]) + R * dot(tr.steps[0].u[i], tr.steps[0].u[i]) -
               r.fixed.tau[i] * dot(tr.steps[0].d[i], tr.steps[0].d[i]);
    }
    CHECK(tr.steps[0].psi == doctest::Approx(psi).epsilon(1e-14));
    CHECK_THROWS(total_cost(tr, 4, r.fixed));
}

TEST_CASE("disturbances are always admissible") {
    const SystemConfig& c = example1();
    for (DisturbanceKind kind : {DisturbanceKind::zero, DisturbanceKind::uniform_ball, DisturbanceKind::sinusoidal,
                                 DisturbanceKind::worst_case_boundary}) {
        DisturbanceModel m;
        m.kind = kind;
        m.seed = 9;
        DisturbanceGenerator gen(m, c.system);
        for (std::size_t k = 0; k < 2000; ++k) {
            const StateSet d = gen.next(k);
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double eta = c.system.subsystems[i].eta;
                CHECK(dot(d[i], d[i]) <= eta * eta);
            }
        }
    }
    Vector v{3.0, 4.0};
    project_to_ball(v, 1.0);
    CHECK(dot(v, v) <= 1.0);
}

TEST_CASE("Example 1 with reference gains converges and respects input bounds") {
    const SystemConfig& c = example1();
    DecisionVars dv;
    dv.gains = *c.gains;
    const SimulationTrace tr =
        run_online_loop(c.system, c.fixed, c.synthesis, c.simulation.x0, 60, DisturbanceModel{}, once_with(dv));
    for (const auto& x : tr.x_final) CHECK(norm2(x) < 1e-2);
    CHECK(tr.input_violations == 0);
    // Bounded: never larger than the initial norm.
    for (const auto& st : tr.steps)
        for (std::size_t i = 0; i < 3; ++i) CHECK(norm2(st.x[i]) <= norm2(c.simulation.x0[i]) + 1e-12);
}

TEST_CASE("traces are bit-identical for identical seeds") {
    const SystemConfig& c = example1();
    const PipelineResult& r = example1_synthesis();
    DisturbanceModel m{DisturbanceKind::uniform_ball, 5, {}, 0.3};
    const SimulationTrace a = run_online_loop(c.system, r.fixed, c.synthesis, c.simulation.x0, 40, m, once_with(r.result.dv));
    const SimulationTrace b = run_online_loop(c.system, r.fixed, c.synthesis, c.simulation.x0, 40, m, once_with(r.result.dv));
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
        CHECK(a.steps[k].x == b.steps[k].x);
        CHECK(a.steps[k].d == b.steps[k].d);
    }
}

TEST_CASE("ISS check: certified run passes, destabilizing gains fail") {
    const SystemConfig& c = example1();
    const PipelineResult& r = example1_synthesis();
    DisturbanceModel m{DisturbanceKind::uniform_ball, 1, {}, 0.3};
    const SimulationTrace good =
        run_online_loop(c.system, r.fixed, c.synthesis, c.simulation.x0, 100, m, once_with(r.result.dv));
    const IssReport ok = iss_check(c.system, good, r.fixed);
    CHECK(ok.steps_checked > 0);
    CHECK(ok.decrease_violations == 0);
    CHECK(ok.sandwich_violations == 0);

    DecisionVars bad = r.result.dv;
    for (auto& gs : bad.gains)
        for (auto& k : gs) k = Matrix{{3.0, 3.0}};
    const SimulationTrace diverge =
        run_online_loop(c.system, r.fixed, c.synthesis, c.simulation.x0, 20, m, once_with(bad));
    CHECK(iss_check(c.system, diverge, r.fixed).decrease_violations > 0);
}

TEST_CASE("RPI Monte-Carlo: contraction with vanishing disturbance") {
    const SystemConfig& c = example1();
    const PipelineResult& r = example1_synthesis();
    LargeScaleSystem quiet = c.system;
    for (auto& s : quiet.subsystems) s.eta = 1e-9;
    const RpiReport rep = rpi_monte_carlo(quiet, r.fixed, r.result.dv, 2000, 3);
    CHECK(rep.samples == 2000);
    CHECK(rep.rpi_violations == 0);
    CHECK(rep.exits == 0);
    CHECK(rep.worst_level < 1.0);
}

TEST_CASE("once mode without any certificate in force starts from the given gains") {
    const SystemConfig& c = example1();
    DecisionVars dv;
    dv.gains = *c.gains;
    const SimulationTrace tr =
        run_online_loop(c.system, c.fixed, c.synthesis, c.simulation.x0, 2, DisturbanceModel{}, once_with(dv));
    CHECK(tr.resyntheses == 0);
    CHECK(tr.steps[0].t == 0.0);
    CHECK(tr.steps[1].t == doctest::Approx(c.Ts));
}
