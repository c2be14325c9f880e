#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "thetaincl/stepper.hpp"

using namespace thetaincl;

namespace {

Problem desk_relaxation() {
    // du/dt + u = 0 on the desk space: closed forms for every theta.
    Problem pr;
    pr.mesh = SpatialMesh::desk();
    pr.op.p = 2.0;
    pr.op.mu = make_profile("const", 1.0, 0.0, 1.0);
    return pr;
}

Problem desk_inclusion() {
    // du/dt + u + m H(u) ∋ 0 with a unit step at the origin.
    Problem pr = desk_relaxation();
    pr.graph = make_filled_graph("heaviside", {0.0}, make_modulation("const"));
    GrowthParams g;
    g.case_tag = "A";
    g.c1 = 1.0;
    pr.growth = g;
    return pr;
}

DiscreteFunction desk_state(const Problem& pr, double v) {
    Eigen::VectorXd c(1);
    c[0] = v;
    return DiscreteFunction{pr.mesh, pr.op.p, c};
}

} // namespace

TEST_CASE("theta config validation") {
    ThetaConfig cfg;
    CHECK_NOTHROW(validate_theta_config(cfg));
    cfg.theta = 0.0;
    CHECK_THROWS_WITH_AS(validate_theta_config(cfg),
                         "theta config: theta = 0 (explicit Euler) is excluded",
                         std::invalid_argument);
    cfg.theta = 1.5;
    CHECK_THROWS_AS(validate_theta_config(cfg), std::invalid_argument);
    cfg.theta = -0.5;
    CHECK_THROWS_AS(validate_theta_config(cfg), std::invalid_argument);
    cfg = ThetaConfig{};
    cfg.newton_tol = 0.0;
    CHECK_THROWS_AS(validate_theta_config(cfg), std::invalid_argument);
    cfg = ThetaConfig{};
    cfg.newton_max_iter = 0;
    CHECK_THROWS_AS(validate_theta_config(cfg), std::invalid_argument);
    cfg = ThetaConfig{};
    cfg.c_eps = -1.0;
    CHECK_THROWS_AS(validate_theta_config(cfg), std::invalid_argument);
}

TEST_CASE("admissibility threshold plug-ins") {
    EmbeddingSpec source;
    source.mode = EmbeddingMode::source;

    SUBCASE("case B: tau0 = 1/(theta beta)") {
        OperatorSpec op;
        op.beta = 2.0;
        GrowthParams g;
        g.case_tag = "B";
        g.c2 = 1.0;
        g.lambda = 0.1;
        CHECK(admissible_tau0(op, &g, source, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(admissible_tau0(op, &g, source, 0.5) == doctest::Approx(1.0).epsilon(1e-15));
        op.beta = 0.0;
        CHECK(admissible_tau0(op, &g, source, 1.0) ==
              std::numeric_limits<double>::infinity());
    }

    SUBCASE("case A folds in the H->U factorization bound") {
        OperatorSpec op;
        op.beta = 0.0;
        GrowthParams g;
        g.case_tag = "A";
        g.c1 = 0.5;
        g.d1 = 1.0;
        // Source mode defaults ||p|| to 1: tau0 = 1/(theta * d1).
        CHECK(admissible_tau0(op, &g, source, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
        op.beta = 1.0;
        CHECK(admissible_tau0(op, &g, source, 0.5) == doctest::Approx(1.0).epsilon(1e-15));

        EmbeddingSpec boundary;
        boundary.mode = EmbeddingMode::boundary;
        CHECK_THROWS_AS((void)admissible_tau0(op, &g, boundary, 1.0),
                        std::invalid_argument);
        boundary.p_map_norm_bound = 2.0;
        // denom = theta (beta + d1 ||p||^2) = 1 * (1 + 4).
        CHECK(admissible_tau0(op, &g, boundary, 1.0) == doctest::Approx(0.2).epsilon(1e-15));
    }

    SUBCASE("no multivalued term follows case B") {
        OperatorSpec op;
        op.beta = 0.0;
        CHECK(admissible_tau0(op, nullptr, source, 1.0) ==
              std::numeric_limits<double>::infinity());
        op.beta = 4.0;
        CHECK(admissible_tau0(op, nullptr, source, 0.5) == doctest::Approx(0.5));
    }
}

TEST_CASE("desk linear ODE reproduces the one-step closed form") {
    const Problem pr = desk_relaxation();
    const TimeGrid grid = build_uniform(1.0, 10); // tau = 0.1
    for (double theta : {0.5, 0.75, 1.0}) {
        ThetaConfig cfg;
        cfg.theta = theta;
        const double gain = (1.0 - (1.0 - theta) * 0.1) / (1.0 + theta * 0.1);
        const TrajectorySolution sol = solve_trajectory(cfg, pr, grid, desk_state(pr, 1.0));
        REQUIRE(sol.states.size() == 11);
        double expect = 1.0;
        for (int k = 1; k <= 10; ++k) {
            expect *= gain;
            CHECK(sol.states[static_cast<std::size_t>(k)].coeffs[0] ==
                  doctest::Approx(expect).epsilon(1e-12));
        }
        // No graph: selections are recorded but empty.
        REQUIRE(sol.selections.size() == 10);
        CHECK(sol.selections.front().values.size() == 0);
    }
    // Frozen one-step gains.
    ThetaConfig be;
    be.theta = 1.0;
    CHECK(step(be, pr, grid, 1, desk_state(pr, 1.0)).u_k.coeffs[0] ==
          doctest::Approx(1.0 / 1.1).epsilon(1e-13));
    ThetaConfig cn;
    cn.theta = 0.5;
    CHECK(step(cn, pr, grid, 1, desk_state(pr, 1.0)).u_k.coeffs[0] ==
          doctest::Approx(0.95 / 1.05).epsilon(1e-13));
}

TEST_CASE("desk inclusion step lands on the exact selection") {
    // With u0 = tau/2 and theta = 1 the w-equation (w - u0)/tau + w + F(w) = 0
    // has the root w = 0 on the filled jump, where the selection must take the
    // value 1/2 to balance the equation.
    const Problem pr = desk_inclusion();
    const TimeGrid grid = build_uniform(0.1, 1); // single slab, tau = 0.1
    ThetaConfig cfg;
    cfg.theta = 1.0;
    const StepResult res = step(cfg, pr, grid, 1, desk_state(pr, 0.05));
    const double eps = res.eps; // = c_eps * tau = 0.05
    CHECK(eps == doctest::Approx(0.05));
    CHECK(std::abs(res.u_k.coeffs[0]) <= eps + 1e-9);
    CHECK(res.xi.values[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(res.residual_dual_norm <= cfg.newton_tol);
    CHECK(res.clamp_distance <= 1e-12);
}

TEST_CASE("trajectory shapes and the w identity") {
    Problem pr;
    pr.mesh = SpatialMesh::interval(1.0, 16, BoundaryCondition::dirichlet);
    pr.op.p = 2.0;
    pr.op.mu = make_profile("const", 1.0, 0.0, 1.0);
    const DiscreteFunction u0 =
        l2_project(pr.mesh, 2.0, [](double x) { return std::sin(3.141592653589793 * x); });
    const TimeGrid grid = build_uniform(0.5, 8);
    ThetaConfig cfg;
    cfg.theta = 0.75;
    const TrajectorySolution sol = solve_trajectory(cfg, pr, grid, u0);
    REQUIRE(sol.states.size() == 9);
    REQUIRE(sol.mids.size() == 8);
    REQUIRE(sol.records.size() == 8);
    for (int k = 1; k <= 8; ++k) {
        const Eigen::VectorXd recon =
            cfg.theta * sol.states[static_cast<std::size_t>(k)].coeffs +
            (1.0 - cfg.theta) * sol.states[static_cast<std::size_t>(k - 1)].coeffs;
        CHECK((sol.mids[static_cast<std::size_t>(k - 1)].coeffs - recon).norm() <= 1e-12);
        const StepRecord& rec = sol.records[static_cast<std::size_t>(k - 1)];
        CHECK(rec.k == k);
        CHECK(rec.tau == doctest::Approx(0.0625));
        CHECK(rec.residual <= cfg.newton_tol);
        CHECK_FALSE(rec.used_picard);
    }
}

TEST_CASE("admissibility gate: strict mode throws, lax mode warns") {
    Problem pr = desk_relaxation();
    pr.op.beta = 2.0;
    ThetaConfig cfg;
    cfg.theta = 1.0; // tau0 = 0.5 < tau = 1
    const TimeGrid grid = build_uniform(1.0, 1);
    cfg.strict_admissibility = true;
    CHECK_THROWS_AS((void)step(cfg, pr, grid, 1, desk_state(pr, 1.0)), InadmissibleStep);
    cfg.strict_admissibility = false;
    const StepResult res = step(cfg, pr, grid, 1, desk_state(pr, 1.0));
    CHECK(res.admissibility_warned);
    CHECK(res.tau0 == doctest::Approx(0.5));

    // A compliant step on the same problem does not warn.
    CHECK_FALSE(step(cfg, pr, grid_from_points({0.0, 0.25}), 1, desk_state(pr, 1.0))
                    .admissibility_warned);
}

TEST_CASE("step argument validation") {
    const Problem pr = desk_relaxation();
    const TimeGrid grid = build_uniform(1.0, 4);
    ThetaConfig cfg;
    CHECK_THROWS_AS((void)step(cfg, pr, grid, 0, desk_state(pr, 1.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)step(cfg, pr, grid, 5, desk_state(pr, 1.0)),
                    std::invalid_argument);
    Problem other = pr;
    other.mesh = SpatialMesh::interval(1.0, 4, BoundaryCondition::dirichlet);
    DiscreteFunction mismatched = desk_state(pr, 1.0); // desk state, interval problem
    CHECK_THROWS_AS((void)step(cfg, other, grid, 1, mismatched), std::invalid_argument);
}

TEST_CASE("Picard fallback rescues a starved Newton loop") {
    // One Newton iteration cannot solve the p-Laplacian slab system, so the
    // step must go through the lagged fallback and still certify its residual.
    Problem pr;
    pr.mesh = SpatialMesh::interval(1.0, 8, BoundaryCondition::dirichlet);
    pr.op.p = 3.0;
    pr.op.mu = make_profile("const", 1.0, 0.0, 1.0);
    const DiscreteFunction u0 =
        l2_project(pr.mesh, 3.0, [](double x) { return x * (1.0 - x); });
    const TimeGrid grid = build_uniform(0.2, 1);
    ThetaConfig cfg;
    cfg.theta = 1.0;
    cfg.newton_max_iter = 1;
    cfg.newton_tol = 1e-9;
    const StepResult res = step(cfg, pr, grid, 1, u0);
    CHECK(res.used_picard);
    CHECK(res.picard_iterations > 0);
    CHECK(res.residual_dual_norm <= cfg.newton_tol);

    cfg.picard_fallback = false;
    CHECK_THROWS_AS((void)step(cfg, pr, grid, 1, u0), SolverError);
}

TEST_CASE("certificates hold across a multivalued trajectory") {
    Problem pr;
    pr.mesh = SpatialMesh::interval(1.0, 16, BoundaryCondition::dirichlet);
    pr.op.p = 2.0;
    pr.op.mu = make_profile("const", 1.0, 0.0, 1.0);
    pr.op.kappa = 0.25;
    pr.op.beta = 0.25;
    pr.graph = make_filled_graph("heaviside", {0.5}, make_modulation("const"));
    GrowthParams g;
    g.case_tag = "A";
    g.c1 = 1.0;
    pr.growth = g;
    pr.source.name = "bump";
    pr.source.f = [](double, double x) { return 4.0 * x * (1.0 - x); };
    const DiscreteFunction u0 =
        l2_project(pr.mesh, 2.0, [](double x) { return std::sin(3.141592653589793 * x); });
    const TimeGrid grid = build_random_regular(1.0, 8, 2.0, 3);
    ThetaConfig cfg;
    cfg.theta = 1.0;
    const TrajectorySolution sol = solve_trajectory(cfg, pr, grid, u0);
    for (std::size_t i = 0; i < sol.records.size(); ++i) {
        const StepRecord& rec = sol.records[i];
        CHECK(rec.residual <= cfg.newton_tol);
        CHECK(rec.clamp_distance <= rec.eps);
        // Selection values live in the slab-averaged filled graph at w.
        const UElement trace = iota_apply(pr.embedding, sol.mids[i]);
        const MembershipReport mem = slab_average_membership(
            *pr.graph, grid, rec.k, trace.values, sol.selections[i].values,
            rec.eps + 1e-9, rec.eps);
        CHECK(mem.pass);
    }
}
