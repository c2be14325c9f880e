#include "thetaincl/scenario.hpp"

#include <cmath>
#include <numbers>

#include "thetaincl/errors.hpp"

namespace thetaincl {

namespace {

constexpr double kPi = std::numbers::pi;

Scenario make_heat() {
    Scenario sc;
    sc.name = "heat";
    sc.description = "linear heat equation with a separable closed-form solution";
    sc.mesh = {false, 1.0, 512, BoundaryCondition::dirichlet};
    sc.embedding = {EmbeddingMode::source, {}, {}};
    sc.op.p = 2.0;
    sc.op.mu = make_profile("const", 1.0, 0.0, 0.0);
    sc.op.kappa = 0.0;
    sc.op.alpha = 1.0;
    sc.op.beta = 0.0;
    sc.op.growth_a0 = 1.0;
    sc.op.growth_a1 = 0.0;
    sc.source.name = "heat_manufactured";
    sc.source.f = [](double t, double x) {
        return (kPi * kPi - 1.0) * std::exp(-t) * std::sin(kPi * x);
    };
    sc.u0 = [](double x) { return std::sin(kPi * x); };
    sc.reference.kind = ReferenceSpec::Kind::exact;
    sc.reference.exact.value = [](double t, double x) {
        return std::exp(-t) * std::sin(kPi * x);
    };
    sc.reference.exact.dx = [](double t, double x) {
        return kPi * std::exp(-t) * std::cos(kPi * x);
    };
    return sc;
}

Scenario make_heat_tdep() {
    Scenario sc = make_heat();
    sc.name = "heat_tdep";
    sc.description = "heat equation with a time-dependent diffusivity 1 + t/2";
    sc.mesh.elements = 256;
    sc.op.mu = make_profile("linear", 1.0, 0.5, 0.0);
    // ||A(t,v) - A(s,v)||_* = |mu(t)-mu(s)| ||v||_V = 0.5 |t-s| ||v||_V, so the
    // declared envelope holds with ratio one; mu <= 1.5 on [0,1] covers growth.
    sc.op.growth_a0 = 1.5;
    sc.op.holder = HolderData{0.01, 0.5, 1.0, 1.0};
    sc.source.name = "heat_tdep_manufactured";
    sc.source.f = [](double t, double x) {
        return ((1.0 + 0.5 * t) * kPi * kPi - 1.0) * std::exp(-t) * std::sin(kPi * x);
    };
    return sc;
}

Scenario make_jump_source() {
    Scenario sc;
    sc.name = "jump_source";
    sc.description = "heat flow with a bounded nonmonotone perturbation and a "
                     "Heaviside-fill source term (growth case A)";
    sc.mesh = {false, 1.0, 256, BoundaryCondition::dirichlet};
    sc.embedding = {EmbeddingMode::source, {}, {}};
    sc.op.p = 2.0;
    sc.op.mu = make_profile("const", 1.0, 0.0, 0.0);
    sc.op.kappa = 0.25; // perturbation -kappa s/(1+s^2); costs beta = kappa
    sc.op.alpha = 1.0;
    sc.op.beta = 0.25;
    sc.op.growth_a0 = 1.2; // |perturbation| <= kappa/2 pointwise
    sc.op.growth_a1 = 0.0;
    sc.graph = make_filled_graph("heaviside", {0.5}, make_modulation("const"), 1.0);
    GrowthParams growth;
    growth.case_tag = "A";
    growth.c1 = 1.0; // Heaviside values lie in [0,1], |domain| = 1
    growth.d1 = 0.0;
    sc.growth = growth;
    // The ramp drives the state upward through the jump at 0.5 from a
    // near-equilibrium start: the selection activates mid-run and the energy
    // observables stay uniform across coarse grids (no fast initial layer).
    sc.source.name = "jump_drive";
    sc.source.f = [](double t, double x) { return (2.5 + 4.5 * t) * std::sin(kPi * x); };
    sc.u0 = [](double x) { return 2.5 / (kPi * kPi) * std::sin(kPi * x); };
    sc.reference.kind = ReferenceSpec::Kind::fine_grid;
    sc.reference.refine_factor = 16;
    sc.reference.fine_theta = 0.5;
    return sc;
}

Scenario make_plap_jump() {
    Scenario sc;
    sc.name = "plap_jump";
    sc.description = "p-Laplacian (p = 3) with a modulated sawtooth-fill source "
                     "term (growth case B)";
    sc.mesh = {false, 1.0, 64, BoundaryCondition::dirichlet};
    sc.embedding.mode = EmbeddingMode::source;
    // ||v||_{L2} <= ||v||_inf <= (1/2)||v'||_{L1} <= (1/2)||v||_V on (0,1)
    // with zero traces; declare the conservative bound 1.
    sc.embedding.iota_norm_bound = 1.0;
    sc.op.p = 3.0;
    sc.op.mu = make_profile("const", 1.0, 0.0, 0.0);
    sc.op.kappa = 0.0;
    sc.op.alpha = 1.0;
    sc.op.beta = 0.0;
    sc.op.growth_a0 = 1.0; // ||A(v)||_* <= ||v||_V^2 by Hoelder on the flux
    sc.op.growth_a1 = 0.0;
    sc.graph = make_filled_graph("sawtooth", {-0.75, 0.0, 0.75},
                                 make_modulation("1+cos"), 1.0);
    GrowthParams growth;
    growth.case_tag = "B";
    // Nodal sawtooth values obey |xi_i| <= m (|u_i| + 1.5) <= 2|u_i| + 3, so
    // the mass-norm triangle inequality gives ||xi|| <= 2||u|| + 3 <= 4 + ||u||^2.
    growth.c2 = 4.0;
    growth.d2 = 1.0;
    // Pointwise xi(s) s >= -9/16 (worst at the filled jump s = -3/4), hence
    // <xi, u> >= -2 * 9/16 * |domain| = -1.125 > g0 for every u and selection.
    growth.lambda = 0.25;
    growth.g = make_profile("const", -1.3, 0.0, 0.0);
    sc.growth = growth;
    sc.source.name = "plap_drive";
    sc.source.f = [](double, double x) { return 2.0 * std::sin(kPi * x); };
    sc.u0 = [](double x) { return 1.2 * std::sin(2.0 * kPi * x); };
    sc.reference.kind = ReferenceSpec::Kind::fine_grid;
    sc.reference.refine_factor = 16;
    sc.reference.fine_theta = 0.5;
    return sc;
}

Scenario make_robin_mv() {
    Scenario sc;
    sc.name = "robin_mv";
    sc.description = "heat equation with multivalued Robin-type endpoint "
                     "conditions (boundary embedding, growth case B)";
    sc.mesh = {false, 1.0, 64, BoundaryCondition::natural};
    sc.embedding.mode = EmbeddingMode::boundary;
    sc.op.p = 2.0;
    sc.op.mu = make_profile("const", 1.0, 0.0, 0.0);
    sc.op.kappa = 0.0;
    sc.op.alpha = 1.0;
    sc.op.beta = 1.0; // <Av,v> = ||v||_V^2 - ||v||_H^2 in the natural V-norm
    sc.op.growth_a0 = 1.0;
    sc.op.growth_a1 = 0.0;
    sc.graph = make_filled_graph("heaviside", {0.0}, make_modulation("const"), 1.0);
    GrowthParams growth;
    growth.case_tag = "B";
    growth.c2 = 1.5; // ||xi||_{R^2} <= sqrt(2)
    growth.d2 = 0.0;
    // H(s) s >= 0 componentwise, so the lower envelope g = 0 works for any
    // positive lambda; the margin alpha - lambda ||iota||^2 stays > 0.5.
    growth.lambda = 0.2;
    growth.g = make_profile("const", 0.0, 0.0, 0.0);
    sc.growth = growth;
    sc.source.name = "unit_drive";
    sc.source.f = [](double, double) { return 1.0; };
    sc.u0 = [](double x) { return std::cos(kPi * x); };
    sc.reference.kind = ReferenceSpec::Kind::fine_grid;
    sc.reference.refine_factor = 16;
    sc.reference.fine_theta = 0.5;
    return sc;
}

Scenario make_ode_desk() {
    Scenario sc;
    sc.name = "ode_desk";
    sc.description = "single-DOF linear decay u' + u = 0 for closed-form checks";
    sc.mesh.desk = true;
    sc.embedding = {EmbeddingMode::source, {}, {}};
    sc.op.p = 2.0;
    sc.op.mu = make_profile("const", 1.0, 0.0, 0.0);
    sc.op.alpha = 1.0;
    sc.op.beta = 0.0;
    sc.op.growth_a0 = 1.0;
    sc.source.name = "zero";
    sc.source.f = [](double, double) { return 0.0; };
    sc.u0 = [](double) { return 1.0; };
    sc.reference.kind = ReferenceSpec::Kind::exact;
    sc.reference.exact.value = [](double t, double) { return std::exp(-t); };
    sc.reference.exact.dx = [](double, double) { return 0.0; };
    return sc;
}

} // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names = {
        "heat", "heat_tdep", "jump_source", "plap_jump", "robin_mv", "ode_desk"};
    return names;
}

bool is_scenario(const std::string& name) {
    for (const auto& n : scenario_names())
        if (n == name) return true;
    return false;
}

Scenario get_scenario(const std::string& name) {
    if (name == "heat") return make_heat();
    if (name == "heat_tdep") return make_heat_tdep();
    if (name == "jump_source") return make_jump_source();
    if (name == "plap_jump") return make_plap_jump();
    if (name == "robin_mv") return make_robin_mv();
    if (name == "ode_desk") return make_ode_desk();
    throw ConfigError("unknown scenario '" + name + "'");
}

MeshPtr build_mesh(const MeshSpec& spec, int elements_override) {
    if (spec.desk) return SpatialMesh::desk();
    const int elements = elements_override > 0 ? elements_override : spec.elements;
    return SpatialMesh::interval(spec.length, elements, spec.bc);
}

Problem make_problem(const Scenario& scenario, const MeshPtr& mesh) {
    Problem problem;
    problem.mesh = mesh;
    problem.embedding = scenario.embedding;
    problem.op = scenario.op;
    problem.graph = scenario.graph;
    problem.growth = scenario.growth;
    problem.source = scenario.source;
    return problem;
}

DiscreteFunction initial_state(const Scenario& scenario, const MeshPtr& mesh) {
    return l2_project(mesh, scenario.op.p, scenario.u0);
}

ScenarioValidation validate_scenario(const Scenario& scenario, int elements_override,
                                     int samples, std::uint64_t seed) {
    const MeshPtr mesh = build_mesh(scenario.mesh, elements_override);
    validate_embedding(scenario.embedding, mesh);

    ScenarioValidation result;
    result.scenario = scenario.name;
    result.ha = validate_H_A(scenario.op, mesh, scenario.T, samples, seed);
    result.pass = result.ha.pass;
    if (scenario.op.holder) {
        result.holder = validate_holder(scenario.op, mesh, scenario.T, samples, seed + 1);
        result.pass = result.pass && result.holder->pass;
    }
    if (scenario.graph) {
        if (!scenario.growth)
            throw ValidationError("scenario '" + scenario.name +
                                  "': multivalued term without growth constants");
        GrowthContext ctx;
        ctx.embedding = scenario.embedding;
        ctx.mesh = mesh;
        ctx.p = scenario.op.p;
        ctx.alpha = scenario.op.alpha;
        ctx.T = scenario.T;
        result.growth_report =
            validate_growth(*scenario.graph, *scenario.growth, ctx, samples, seed + 2);
        result.pass = result.pass && result.growth_report->pass;
    }
    result.tau0 = admissible_tau0(scenario.op,
                                  scenario.growth ? &*scenario.growth : nullptr,
                                  scenario.embedding, 1.0);
    return result;
}

} // namespace thetaincl
