#pragma once

#include <functional>
#include <vector>

#include "thetaincl/fem_space.hpp"
#include "thetaincl/stepper.hpp"
#include "thetaincl/time_grid.hpp"

namespace thetaincl {

// Slabwise-constant track: values[k-1] on (t^{k-1}, t^k], left closure
// value(0) = values[0].  Holds w^k coefficients for the u-bar interpolant and
// iota* xi^k dual coefficients for the eta-bar track.
struct PiecewiseConstantTrack {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> values; // one per slab
};

// Piecewise-affine nodal interpolant through u^0 .. u^N.
struct PiecewiseLinearTrack {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> states; // one per grid point
};

struct ScalarTrack {
    TimeGrid grid;
    std::vector<double> values; // slab means
};

// Track builders from a solved trajectory.
PiecewiseConstantTrack bar_track(const TrajectorySolution& traj);
PiecewiseLinearTrack hat_track(const TrajectorySolution& traj);
// eta-bar: slabwise-constant V*-coefficients of iota* xi^k.
PiecewiseConstantTrack eta_track(const TrajectorySolution& traj,
                                 const EmbeddingSpec& embedding, const MeshPtr& mesh);

const Eigen::VectorXd& eval_bar(const PiecewiseConstantTrack& track, double t);
Eigen::VectorXd eval_hat(const PiecewiseLinearTrack& track, double t);
// Slabwise-constant difference quotient; grid points take the right slab's
// value (left slab at t = T).
Eigen::VectorXd hat_derivative(const PiecewiseLinearTrack& track, double t);

// 0th-order quasi-interpolation of a scalar time function: slab means by
// 3-point Gauss.
ScalarTrack clement_project(const std::function<double(double)>& v, const TimeGrid& grid);
double eval_scalar_bar(const ScalarTrack& track, double t);
// L2(0,T) distance between v and its slab-mean projection (5-point Gauss per slab).
double clement_error_l2(const std::function<double(double)>& v, const ScalarTrack& track);

// --- trajectory norms (exact sums over slabs) ------------------------------

// (sum_k tau^k ||w^k||_V^p)^{1/p}
double norm_Lp_V(const PiecewiseConstantTrack& track, const MeshPtr& mesh, double p);
// max_k ||u^k||_H
double norm_Linf_H(const PiecewiseLinearTrack& track, const MeshPtr& mesh);
// (sum_k tau^k ||M (u^k - u^{k-1})/tau^k||_{V*}^q)^{1/q}, q conjugate to p; the
// derivative pairs against V through the H inner product.
double norm_Lq_Vstar_dt(const PiecewiseLinearTrack& track, const MeshPtr& mesh, double p);

// --- BV^q seminorm via exact DP --------------------------------------------

// sup over increasing index chains of summed q-th powers of value-difference
// norms; exact for slabwise-constant tracks because the supremum over real
// partitions is attained on slab values.  O(N^2) norm evaluations.
double bvq_seminorm(const std::vector<Eigen::VectorXd>& values, double q,
                    const std::function<double(const Eigen::VectorXd&)>& norm);
// V*-metric variant (value differences measured through the H-pairing).
double bvq_seminorm_vstar(const PiecewiseConstantTrack& track, const MeshPtr& mesh,
                          double p, double q);

// --- the (2 theta - 1) cancellation identity -------------------------------

struct BbbResult {
    double lhs = 0.0;      // int (u-hat', u-hat - u-bar)_H, exact slabwise
    double rhs = 0.0;      // -((2 theta - 1)/2) sum ||u^k - u^{k-1}||_H^2
    double residual = 0.0; // |lhs - rhs|
};

BbbResult bbb_identity(const PiecewiseLinearTrack& hat, const PiecewiseConstantTrack& bar,
                       const MeshPtr& mesh, double theta);

// Per-slab int ||u-hat - u-bar||_{V*}^q dt (closed form assuming the bar value
// is the theta-combination) and the per-slab majorant
// (tau^k)^q/(q+1) * tau^k ||Delta/tau||_{V*}^q, for the gap-bound invariant.
struct HatBarGap {
    std::vector<double> gap_pow;   // per-slab exact integrals of the q-th power
    std::vector<double> bound_pow; // per-slab majorants
};
HatBarGap hat_bar_gap(const PiecewiseLinearTrack& hat, const MeshPtr& mesh, double p,
                      double theta);

} // namespace thetaincl
