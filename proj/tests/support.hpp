#pragma once

// Shared helpers for unit and acceptance tests: random instances and the
// term-by-term scalar expansions the assembled block matrices are checked
// against.

#include <cmath>
#include <random>
#include <string>

#include "it2mpc/config.hpp"
#include "it2mpc/fuzzy_model.hpp"
#include "it2mpc/lmi.hpp"

namespace it2mpc::testing {

inline std::string config_path(const std::string& name) { return std::string(IT2MPC_TEST_CONFIG_DIR) + "/" + name; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vector random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& e : v) e = uniform(rng, -scale, scale);
    return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (double& e : m.data()) e = uniform(rng, -scale, scale);
    return m;
}

inline SymMatrix random_sym(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    return SymMatrix(random_matrix(rng, n, n, scale));
}

// G G^T + shift I.
inline SymMatrix random_spd(std::mt19937_64& rng, std::size_t n, double shift = 0.1) {
    const Matrix g = random_matrix(rng, n, n);
    return SymMatrix(g * g.transpose() + shift * Matrix::identity(n));
}

struct RandomInstance {
    LargeScaleSystem sys;
    FixedParams p;
    DecisionVars dv;
};

// N subsystems (2..4), each coupled to every other one, one rule, random
// dimensions; parameters drawn inside their admissible ranges.
inline RandomInstance random_instance(std::mt19937_64& rng) {
    RandomInstance r;
    const std::size_t n = 2 + rng() % 3;
    // Coupled subsystems share the state dimension; inputs and disturbances vary.
    std::vector<std::size_t> nx(n, 1 + rng() % 3), nu(n), nd(n);
    for (std::size_t i = 0; i < n; ++i) {
        nu[i] = 1 + rng() % 2;
        nd[i] = 1 + rng() % 2;
    }
    for (std::size_t i = 0; i < n; ++i) {
        Subsystem s;
        s.name = "S" + std::to_string(i);
        s.rules.push_back({random_matrix(rng, nx[i], nx[i]), random_matrix(rng, nx[i], nu[i]),
                           random_matrix(rng, nx[i], nd[i])});
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) s.couplings[j] = random_matrix(rng, nx[i], nx[j], 0.5);
        const SigmoidMF one{0.0, 1.0, SigmoidMF::Form::one_minus_logistic, 0.0};
        s.model_mfs = {{one}, {one}, std::nullopt};
        s.controller_mfs = {{one}, {one}, std::nullopt};
        s.u_max.assign(nu[i], 1.0);
        s.eta = 0.1;
        r.sys.subsystems.push_back(std::move(s));
        r.p.X.push_back(random_spd(rng, nx[i]));
        r.p.lambda.push_back(uniform(rng, 0.05, 0.95));
        r.p.N_ratio.push_back(uniform(rng, 0.1, 5.0));
        r.p.M.push_back(uniform(rng, 0.1, 3.0));
        r.p.tau.push_back(uniform(rng, 0.1, 3.0));
        r.p.Q.push_back(random_spd(rng, nx[i], 0.0));
        r.dv.gains.push_back({random_matrix(rng, nu[i], nx[i])});
        r.dv.Z.push_back(random_spd(rng, nx[i]));
        r.dv.xi.push_back(uniform(rng, 0.1, 10.0));
    }
    r.p.alpha = uniform(rng, 2.0, 4.0);
    return r;
}

// Partitioned test vector matching the assembled layout:
// (d, x_i, x_j for each neighbour in map order, [u], x_i+).
struct Partition {
    Vector d, x;
    std::vector<Vector> xj;
    Vector u, t;

    Vector flat() const {
        Vector v = d;
        v.insert(v.end(), x.begin(), x.end());
        for (const auto& y : xj) v.insert(v.end(), y.begin(), y.end());
        v.insert(v.end(), u.begin(), u.end());
        v.insert(v.end(), t.begin(), t.end());
        return v;
    }
};

inline Partition random_partition(std::mt19937_64& rng, const LargeScaleSystem& sys, std::size_t i, bool input) {
    const Subsystem& s = sys.subsystems[i];
    Partition v;
    v.d = random_vector(rng, s.nd());
    v.x = random_vector(rng, s.nx());
    for (const auto& [j, g] : s.couplings) v.xj.push_back(random_vector(rng, sys.subsystems[j].nx()));
    if (input) v.u = random_vector(rng, s.nu());
    v.t = random_vector(rng, s.nx());
    return v;
}

inline Vector mv(const Matrix& a, const Vector& x) { return a * std::span<const double>(x); }
inline double xAy(const Matrix& a, const Vector& x, const Vector& y) { return dot(x, mv(a, y)); }

// Terms shared by both conditions, expanded as in the invariance derivation:
// with P = X/xi, e = E d, q = Theta x, s = sum_j g_ij x_j, everything
// multiplied by xi^2 so the result is in the units of the assembled matrix.
struct ExpansionParts {
    double ee, eq, es, qs, ss, coup, tail;
};

inline ExpansionParts expansion_parts(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                                      std::size_t i, const Partition& v) {
    const Subsystem& sub = sys.subsystems[i];
    const double xi = dv.xi[i];
    const Matrix P = (1.0 / xi) * p.X[i].matrix();
    const Matrix theta = sub.rules[0].A + sub.rules[0].B * dv.gains[i][0];
    const Vector e = mv(sub.rules[0].E, v.d);
    const Vector q = mv(theta, v.x);
    Vector s(sub.nx(), 0.0);
    double coup = 0.0;
    std::size_t a = 0;
    for (const auto& [j, g] : sub.couplings) {
        s = add(s, mv(g, v.xj[a++]));
        // Neighbour energy of x_i pushed through g_ij, weighted by X_j.
        const Vector gx = mv(g, v.x);
        coup += dot(gx, mv(p.X[j].matrix(), gx));
    }
    const double n = static_cast<double>(sys.size());
    ExpansionParts out{};
    out.ee = xi * xi * (1.0 / xi) * xAy(P, e, e);
    out.eq = xi * xi * (1.0 / xi) * (xAy(P, q, e) + xAy(P, e, q));
    out.es = xi * xi * (1.0 / xi) * (xAy(P, s, e) + xAy(P, e, s));
    out.qs = xi * xi * (1.0 / xi) * (1.0 - std::sqrt(p.alpha)) * (xAy(P, s, q) + xAy(P, q, s));
    out.ss = -xi * xi * (1.0 / xi) * (p.alpha - 1.0) * xAy(P, s, s);
    out.coup = n * std::sqrt(p.alpha) * coup;
    // Schur row: 2 t^T X q - t^T X t / n.
    out.tail = 2.0 * xi * xAy(P, v.t, q) - xi * xAy(P, v.t, v.t) / n;
    return out;
}

// Scalar expansion of the thm1 (invariance) quadratic form.
inline double thm1_expansion(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                             std::size_t i, const Partition& v) {
    const ExpansionParts t = expansion_parts(sys, p, dv, i, v);
    const double xi = dv.xi[i];
    const double eta2 = xi / p.N_ratio[i];  // N_i = xi_i / eta_i^2
    const double dd = dot(v.d, v.d);
    const double xPx = quad_form((1.0 / xi) * p.X[i].matrix(), v.x);
    return t.ee - xi * xi * p.lambda[i] / eta2 * dd + t.eq + t.coup - xi * (1.0 - p.lambda[i]) * xPx + t.es + t.qs +
           t.ss + t.tail;
}

// Scalar expansion of the thm2 (cost decrease) quadratic form: the stage cost enters as
// x^T Q x + u^T R u - tau d^T d with R = M / xi, the input through the Schur
// row of M k.
inline double thm2_expansion(const LargeScaleSystem& sys, const FixedParams& p, const DecisionVars& dv,
                             std::size_t i, const Partition& v) {
    const ExpansionParts t = expansion_parts(sys, p, dv, i, v);
    const double xi = dv.xi[i];
    const double dd = dot(v.d, v.d);
    const double xPx = quad_form((1.0 / xi) * p.X[i].matrix(), v.x);
    const double xQx = quad_form(p.Q[i].matrix(), v.x);
    const Vector kx = mv(dv.gains[i][0], v.x);
    const double R = p.M[i] / xi;
    const double input = xi * (2.0 * R * dot(v.u, kx) - R * dot(v.u, v.u));
    return t.ee - xi * p.tau[i] * dd + t.eq + t.coup - xi * xPx + xi * xQx + t.es + t.qs + t.ss + input + t.tail;
}

}  // namespace it2mpc::testing
