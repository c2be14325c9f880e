#pragma once

#include <optional>
#include <vector>

#include "thetaincl/errors.hpp"
#include "thetaincl/fem_space.hpp"
#include "thetaincl/multifunction.hpp"
#include "thetaincl/operators.hpp"
#include "thetaincl/time_grid.hpp"

namespace thetaincl {

struct ThetaConfig {
    double theta = 1.0;        // scheme parameter in (0, 1]; estimates claimed for [1/2, 1]
    double newton_tol = 1e-10; // residual dual-norm tolerance
    int newton_max_iter = 50;
    double damping_floor = 0x1.0p-20; // backtracking halving floor
    double eps_min = 1e-8;            // regularization width floor
    double c_eps = 0.5;               // eps^k = max(eps_min, c_eps * tau^k)
    bool picard_fallback = true;
    int picard_max_iter = 60;
    bool strict_admissibility = false;
};

void validate_theta_config(const ThetaConfig& cfg);

// Everything that defines one evolution problem; immutable during a march.
struct Problem {
    MeshPtr mesh;
    EmbeddingSpec embedding;
    OperatorSpec op;
    std::optional<FilledGraph> graph;
    std::optional<GrowthParams> growth;
    SourceSpec source;
};

struct StepResult {
    DiscreteFunction u_k; // new state
    DiscreteFunction w;   // u^{k-1+theta} = theta u^k + (1-theta) u^{k-1}
    UElement xi;          // recorded slab selection (U*-representation)
    int newton_iterations = 0;
    int picard_iterations = 0;
    bool used_picard = false;
    double residual_dual_norm = 0.0; // certificate recomputed from (w, xi)
    double clamp_distance = 0.0;
    double eps = 0.0;  // regularization width used on this slab
    double tau0 = 0.0; // admissibility threshold
    bool admissibility_warned = false;
};

struct StepRecord {
    int k = 0;
    double tau = 0.0;
    double eps = 0.0;
    double residual = 0.0;
    double clamp_distance = 0.0;
    double tau0 = 0.0;
    int newton_iterations = 0;
    int picard_iterations = 0;
    bool used_picard = false;
    bool admissibility_warned = false;
};

struct TrajectorySolution {
    TimeGrid grid;
    std::vector<DiscreteFunction> states;  // u^0 .. u^N
    std::vector<DiscreteFunction> mids;    // w^1 .. w^N
    std::vector<UElement> selections;      // xi^1 .. xi^N (zero when no graph)
    std::vector<StepRecord> records;
};

// Step-size threshold from the per-step existence argument: case A gives
// tau0 = 1/(theta (beta + d1 ||p||^2)) with ||p|| the H->U factorization
// bound (strict inequality required); case B gives tau0 = 1/(theta beta)
// (non-strict), +inf when beta = 0.  A problem without a multivalued term
// follows the case-B formula.
double admissible_tau0(const OperatorSpec& op, const GrowthParams* growth,
                       const EmbeddingSpec& embedding, double theta);

// One theta-step on slab k: solve the regularized stationary inclusion in the
// w-variable, then recover u^k = (w - (1-theta) u^{k-1})/theta exactly.
// Newton with generalized ramp derivatives and residual backtracking; damped
// Picard fallback with the multivalued term lagged.  The reported residual is
// recomputed from the stored (w, xi), so persisted trajectories remain
// independently checkable.
StepResult step(const ThetaConfig& cfg, const Problem& problem, const TimeGrid& grid,
                int k, const DiscreteFunction& u_prev);

TrajectorySolution solve_trajectory(const ThetaConfig& cfg, const Problem& problem,
                                    const TimeGrid& grid, const DiscreteFunction& u0);

} // namespace thetaincl
