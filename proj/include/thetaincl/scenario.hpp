#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thetaincl/diagnostics.hpp"
#include "thetaincl/stepper.hpp"

namespace thetaincl {

// How errors are measured for a scenario: against a closed-form solution, or
// against the same solver on a refined time grid (every slab split into
// `refine_factor` parts) run with theta = fine_theta.  The fine-grid lineage
// is recorded in reports so references stay reproducible.
struct ReferenceSpec {
    enum class Kind { exact, fine_grid };
    Kind kind = Kind::exact;
    ExactSolution exact{};
    int refine_factor = 16;
    double fine_theta = 0.5;
};

struct MeshSpec {
    bool desk = false;
    double length = 1.0;
    int elements = 64;
    BoundaryCondition bc = BoundaryCondition::dirichlet;
};

// A fully specified evolution problem: spatial setup, operator, optional
// multivalued term with its growth constants, source, initial datum, and the
// error reference.
struct Scenario {
    std::string name;
    std::string description;
    MeshSpec mesh;
    EmbeddingSpec embedding;
    OperatorSpec op;
    std::optional<FilledGraph> graph;
    std::optional<GrowthParams> growth;
    SourceSpec source;
    std::function<double(double)> u0; // initial datum as a function of x
    ReferenceSpec reference;
    double T = 1.0;
    double eps_offset = 0.0; // pointwise-H check times start here for theta = 1
};

const std::vector<std::string>& scenario_names();
bool is_scenario(const std::string& name);
// Throws ConfigError for unknown names.
Scenario get_scenario(const std::string& name);

// Mesh described by `spec`; elements_override > 0 replaces the scenario default.
MeshPtr build_mesh(const MeshSpec& spec, int elements_override = 0);

Problem make_problem(const Scenario& scenario, const MeshPtr& mesh);

// L2 projection of the initial datum into the discrete space.
DiscreteFunction initial_state(const Scenario& scenario, const MeshPtr& mesh);

struct ScenarioValidation {
    std::string scenario;
    HypothesisReport ha;
    std::optional<HolderReport> holder;         // present when Hoelder data declared
    std::optional<GrowthReport> growth_report;  // present when a graph is attached
    double tau0 = 0.0;                          // admissibility threshold at theta = 1
    bool pass = false;
};

// Sampling check of every hypothesis the scenario declares, on a concrete mesh.
ScenarioValidation validate_scenario(const Scenario& scenario, int elements_override,
                                     int samples, std::uint64_t seed);

} // namespace thetaincl
