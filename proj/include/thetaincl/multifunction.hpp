#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thetaincl/fem_space.hpp"
#include "thetaincl/operators.hpp"
#include "thetaincl/time_grid.hpp"

namespace thetaincl {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    // Signed distance of v to the interval: negative strictly inside,
    // positive outside.
    double signed_distance(double v) const { return std::max(lo - v, v - hi); }
    double clamp(double v) const { return std::min(hi, std::max(lo, v)); }
};

// Pointwise multifunction F(t, s) = m(t) * [filled graph of a piecewise-smooth
// scalar function].  Off jump points the value is the singleton m(t)*{base(s)};
// at a jump the vertical gap between one-sided limits is filled in.
// Branch registry: "heaviside" (unit steps at each jump), "sawtooth" (slope-1
// ramps resetting at each jump), "cubic_jump" (s^3 plus one step).
struct FilledGraph {
    std::string family = "heaviside";
    std::vector<double> jumps;  // sorted strictly increasing
    double jump_size = 1.0;     // step height for heaviside / cubic_jump
    TimeProfile modulation;     // m(t) >= 0 on the horizon

    double base(double s) const;       // branch value, s not a jump point
    double base_deriv(double s) const; // branch derivative off jumps
    double left_limit(std::size_t j) const;
    double right_limit(std::size_t j) const;
    double min_gap() const; // +inf with fewer than two jumps
};

FilledGraph make_filled_graph(const std::string& family, std::vector<double> jumps,
                              const TimeProfile& modulation, double jump_size = 1.0);

// Modulation registry: "const" (m = 1), "t" (m = t), "1+cos" (m = 1 + cos t).
TimeProfile make_modulation(const std::string& name);

// Unscaled (modulation-free) interval of the filled base graph at s, and its
// convex hull over the window [s - halfwidth, s + halfwidth]; the hull is
// exact for the piecewise-monotone registry branches.
Interval base_interval(const FilledGraph& graph, double s);
Interval base_hull(const FilledGraph& graph, double s, double halfwidth);

Interval interval_at(const FilledGraph& graph, double t, double s);

// m(t) * base_hull.  halfwidth = 0 reduces to interval_at.  Used with
// halfwidth = eps^k to check and clamp regularized selections in graph
// distance, which is the metric the surrogate controls.
Interval interval_hull(const FilledGraph& graph, double t, double s, double halfwidth);

// Single-valued surrogate F_eps(t,s) = m(t) * base_eps(s): linear ramp across
// [s_j - eps, s_j + eps] at each jump, the branch value elsewhere.
struct RegularizedSelection {
    FilledGraph graph;
    double eps = 0.0;

    double base_eps(double s) const;
    double base_eps_deriv(double s) const; // ramp slope inside windows (kinks inclusive)
    double value(double t, double s) const { return graph.modulation.value(t) * base_eps(s); }
};

RegularizedSelection regularize(const FilledGraph& graph, double eps);

struct MembershipReport {
    bool pass = false;
    double worst_distance = 0.0; // max over nodes of signed interval distance
};

// Per-node check that xi lies in the slab-averaged interval
// mbar_k * [lo, hi](u_i), mbar_k = (1/tau^k) int m(t) dt computed from the
// modulation's antiderivative.  `halfwidth` widens the interval in graph
// distance (pass the recorded eps of the producing step); `tol` is the
// acceptance tolerance on the signed distance.
MembershipReport slab_average_membership(const FilledGraph& graph, const TimeGrid& grid,
                                         int k, const Eigen::VectorXd& u_values,
                                         const Eigen::VectorXd& xi_values, double tol,
                                         double halfwidth = 0.0);

// --- growth hypotheses -----------------------------------------------------

struct GrowthParams {
    std::string case_tag = "A"; // "A" | "B"
    double c1 = 0.0, d1 = 0.0;  // case A: ||xi|| <= c1 + d1 ||u||_U
    double c2 = 0.0, d2 = 0.0;  // case B: ||xi|| <= c2 + d2 ||u||_U^{p-1}
    double lambda = 0.0;        // case B: <xi,u> >= g(t) - lambda ||u||_U^p
    TimeProfile g;              // case B lower envelope

    double r(double p) const { return std::max(1.0, p - 1.0); }
};

void validate_growth_params(const GrowthParams& params);

// Everything the inequalities refer to beyond the graph itself.
struct GrowthContext {
    EmbeddingSpec embedding;
    MeshPtr mesh;
    double p = 2.0;
    double alpha = 1.0; // operator coercivity constant, for the lambda margin
    double T = 1.0;
};

struct GrowthReport {
    int samples = 0;
    double r = 1.0;
    double worst_growth_margin = 0.0;
    double worst_coercivity_margin = 0.0; // case B only; +inf for case A
    double lambda_margin = 0.0;           // alpha - lambda ||iota||^p (case B)
    bool pass = false;
};

GrowthReport validate_growth(const FilledGraph& graph, const GrowthParams& params,
                             const GrowthContext& ctx, int samples, std::uint64_t seed);

} // namespace thetaincl
