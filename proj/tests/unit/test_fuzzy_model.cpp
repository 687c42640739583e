#include <doctest.h>

#include <cmath>
#include <random>

#include "it2mpc/config.hpp"
#include "it2mpc/errors.hpp"
#include "it2mpc/fuzzy_model.hpp"
#include "support.hpp"

using namespace it2mpc;
using namespace it2mpc::testing;

namespace {

const SystemConfig& example1() {
    static const SystemConfig cfg = load_config(config_path("example1.json"));
    return cfg;
}

double logistic(double s) { return 1.0 / (1.0 + std::exp(s)); }

Subsystem single_rule(const Matrix& A, const Matrix& B, const Matrix& E) {
    Subsystem s;
    s.name = "solo";
    s.rules.push_back({A, B, E});
    const SigmoidMF one{0.0, 1.0, SigmoidMF::Form::one_minus_logistic, 0.0};
    s.model_mfs = {{one}, {one}, std::vector<SigmoidMF>{one}};
    s.controller_mfs = {{one}, {one}, std::nullopt};
    s.u_max.assign(B.cols(), 1.0);
    s.eta = 0.1;
    return s;
}

}  // namespace

TEST_CASE("sigmoid forms stay inside [0, 1]") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 2000; ++t) {
        const SigmoidMF mf{uniform(rng, -5, 5), uniform(rng, 0.1, 3) * (t % 2 ? 1 : -1),
                           t % 3 ? SigmoidMF::Form::logistic : SigmoidMF::Form::one_minus_logistic,
                           uniform(rng, 0, 1)};
        const double v = mf(uniform(rng, -50, 50));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("Example 1 model family at x = -4") {
    const Subsystem& s = example1().system.subsystems[0];
    // upper rule 1: 1 - 1/(1 + e^{x+4+1}); lower rule 1: 1 - 1/(1 + e^{x+4-1})
    CHECK(s.model_mfs.upper[0](-4.0) == doctest::Approx(1.0 - logistic(1.0)).epsilon(1e-14));
    CHECK(s.model_mfs.upper[0](-4.0) == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(s.model_mfs.lower[0](-4.0) == doctest::Approx(0.2689).epsilon(1e-4));
    // true membership embeds delta = sin(x)
    const double z = -4.0;
    CHECK((*s.model_mfs.true_mf)[0](z) == doctest::Approx(1.0 - logistic(z + 4.0 + std::sin(z))).epsilon(1e-14));
}

TEST_CASE("Example 1 controller family at x = 1.5") {
    const Subsystem& s = example1().system.subsystems[0];
    CHECK(s.controller_mfs.lower[0](1.5) == doctest::Approx(0.1824).epsilon(1e-3));
    CHECK(s.controller_mfs.lower[0](1.5) == doctest::Approx(1.0 - logistic((-1.5 - 1.5) / 2.0)).epsilon(1e-14));
    CHECK(s.controller_mfs.upper[0](1.5) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("membership envelope and normalization on Example 1") {
    std::mt19937_64 rng(9);
    for (const Subsystem& s : example1().system.subsystems)
        for (int t = 0; t < 1000; ++t) {
            const double z = uniform(rng, -10, 10);
            for (std::size_t l = 0; l < s.rule_count(); ++l) {
                CHECK(s.model_mfs.upper[l](z) >= s.model_mfs.lower[l](z));
                CHECK(s.model_mfs.lower[l](z) <= (*s.model_mfs.true_mf)[l](z) + 1e-15);
                CHECK((*s.model_mfs.true_mf)[l](z) <= s.model_mfs.upper[l](z) + 1e-15);
                CHECK(s.controller_mfs.upper[l](z) >= s.controller_mfs.lower[l](z));
            }
            const Vector x{z, uniform(rng, -1, 1)};
            for (const Vector& w : {eval_model_memberships(s, x, ModelMembershipMode::plant()),
                                    eval_model_memberships(s, x, ModelMembershipMode::reconstructed(0.3)),
                                    eval_controller_memberships(s, x, 0.7)}) {
                double sum = 0.0;
                for (double v : w) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                    sum += v;
                }
                CHECK(std::abs(sum - 1.0) <= 1e-12);
            }
        }
}

TEST_CASE("weighting boundaries and collapsed intervals") {
    const Subsystem& s = example1().system.subsystems[0];
    const Vector x{0.3, 0.0};
    const Vector w = eval_model_memberships(s, x, ModelMembershipMode::reconstructed(1.0));
    const double u0 = s.model_mfs.upper[0](0.3), u1 = s.model_mfs.upper[1](0.3);
    CHECK(w[0] == doctest::Approx(u0 / (u0 + u1)).epsilon(1e-14));

    Subsystem flat = s;
    flat.model_mfs.upper = flat.model_mfs.lower;
    flat.controller_mfs.upper = flat.controller_mfs.lower;
    const Vector a = eval_model_memberships(flat, x, ModelMembershipMode::reconstructed(0.1));
    const Vector b = eval_model_memberships(flat, x, ModelMembershipMode::reconstructed(0.9));
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
    CHECK(eval_controller_memberships(flat, x, 0.5)[0] ==
          doctest::Approx(eval_controller_memberships(flat, x, 0.2)[0]).epsilon(1e-14));

    Subsystem one = single_rule(Matrix{{0.5}}, Matrix{{1}}, Matrix{{1}});
    CHECK(eval_controller_memberships(one, Vector{2.0}, 0.5) == Vector{1.0});
}

TEST_CASE("missing true membership is reported") {
    Subsystem s = example1().system.subsystems[0];
    s.model_mfs.true_mf.reset();
    CHECK_THROWS_AS(eval_model_memberships(s, Vector{0.0, 0.0}, ModelMembershipMode::plant()), MissingTrueMF);
}

TEST_CASE("blend reproduces vertices and averages") {
    const Subsystem& s = example1().system.subsystems[0];
    CHECK(blend(s, Vector{1.0, 0.0}).A == Matrix{{0.55, 0.05}, {0.0, 0.42}});
    const Matrix avg = blend(s, Vector{0.5, 0.5}).A;
    CHECK((avg - Matrix{{0.475, 0.025}, {0.0, 0.25}}).max_abs() <= 1e-15);

    Subsystem same = s;
    same.rules[1] = same.rules[0];
    CHECK((blend(same, Vector{0.2, 0.8}).A - same.rules[0].A).max_abs() <= 1e-15);
}

TEST_CASE("control law") {
    const Subsystem& s = example1().system.subsystems[0];
    const auto& k = (*example1().gains)[0];
    CHECK(control_law(s, k, Vector{1.0, 0.0}, Vector{0.0, 0.0})[0] == 0.0);
    CHECK(control_law(s, k, Vector{1.0, 0.0}, Vector{1.0, 0.0})[0] == doctest::Approx(-0.549));
    const std::vector<Matrix> opposite{Matrix{{0.3, -0.2}}, Matrix{{-0.3, 0.2}}};
    CHECK(std::abs(control_law(s, opposite, Vector{0.5, 0.5}, Vector{1.0, 2.0})[0]) <= 1e-15);
}

TEST_CASE("closed-loop step: equilibrium, degenerate linear case, vertex consistency") {
    const SystemConfig& cfg = example1();
    const LargeScaleSystem& sys = cfg.system;
    const GainSet& gains = *cfg.gains;
    const StateSet zero = zero_states(sys);
    const StateSet next = step_closed_loop(sys, gains, zero, zero_disturbances(sys));
    for (const auto& x : next)
        for (double v : x) CHECK(v == 0.0);

    LargeScaleSystem lin;
    lin.subsystems.push_back(single_rule(Matrix{{0.9, 0.1}, {-0.2, 0.5}}, Matrix{{1}, {0}}, Matrix{{0.1}, {0}}));
    const GainSet k0{{Matrix{{0.0, 0.0}}}};
    const StateSet x{{0.7, -1.3}};
    const StateSet x1 = step_closed_loop(lin, k0, x, zero_disturbances(lin));
    CHECK(x1[0][0] == doctest::Approx(0.9 * 0.7 + 0.1 * -1.3).epsilon(1e-15));
    CHECK(x1[0][1] == doctest::Approx(-0.2 * 0.7 + 0.5 * -1.3).epsilon(1e-15));

    // Same with explicit inputs: open loop with u = control law matches.
    const GainSet k1{{Matrix{{-0.4, 0.2}}}};
    const ClosedLoopStep cl = step_closed_loop_detail(lin, k1, x, StateSet{{0.05}});
    const StateSet ol = step_open_loop(lin, x, cl.u, StateSet{{0.05}});
    CHECK(ol == cl.x_next);
}

TEST_CASE("closed-loop step matches an independent expansion on Example 1") {
    const SystemConfig& cfg = example1();
    const LargeScaleSystem& sys = cfg.system;
    const GainSet& gains = *cfg.gains;
    const StateSet x{{1, -1}, {1, -1}, {1, -1}};
    const StateSet d{{0.03}, {-0.02}, {0.05}};
    const ClosedLoopStep st = step_closed_loop_detail(sys, gains, x, d);
    for (std::size_t i = 0; i < sys.size(); ++i) {
        const Subsystem& s = sys.subsystems[i];
        const Vector w = eval_model_memberships(s, x[i], ModelMembershipMode::plant());
        const Vector h = eval_controller_memberships(s, x[i]);
        Vector expect(2, 0.0);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t m = 0; m < 2; ++m) {
                const Matrix th = s.rules[l].A + s.rules[l].B * gains[i][m];
                for (std::size_t r = 0; r < 2; ++r)
                    expect[r] += w[l] * h[m] * (th(r, 0) * x[i][0] + th(r, 1) * x[i][1]);
            }
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t r = 0; r < 2; ++r) expect[r] += w[l] * s.rules[l].E(r, 0) * d[i][0];
        for (const auto& [j, g] : s.couplings)
            for (std::size_t r = 0; r < 2; ++r) expect[r] += g(r, 0) * x[j][0] + g(r, 1) * x[j][1];
        for (std::size_t r = 0; r < 2; ++r) CHECK(st.x_next[i][r] == doctest::Approx(expect[r]).epsilon(1e-12));
    }
}

TEST_CASE("removing couplings decouples the subsystems exactly") {
    SystemConfig cfg = example1();
    for (auto& s : cfg.system.subsystems) s.couplings.clear();
    const GainSet& gains = *cfg.gains;
    StateSet x{{1, -1}, {0.4, 0.2}, {-0.7, 0.3}};
    std::vector<StateSet> solo;
    for (std::size_t i = 0; i < 3; ++i) solo.push_back({x[i]});
    for (int k = 0; k < 20; ++k) {
        x = step_closed_loop(cfg.system, gains, x, zero_disturbances(cfg.system));
        for (std::size_t i = 0; i < 3; ++i) {
            LargeScaleSystem one;
            one.subsystems.push_back(cfg.system.subsystems[i]);
            solo[i] = step_closed_loop(one, GainSet{gains[i]}, solo[i], zero_disturbances(one));
            CHECK(solo[i][0] == x[i]);
        }
    }
}

TEST_CASE("oversized disturbances are counted, not rejected") {
    const SystemConfig& cfg = example1();
    StateSet d = zero_disturbances(cfg.system);
    d[0][0] = 1.0;  // eta = 0.1
    const ClosedLoopStep st = step_closed_loop_detail(cfg.system, *cfg.gains, zero_states(cfg.system), d);
    CHECK(st.disturbance_warnings == 1);
}
