#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "thetaincl/interpolants.hpp"
#include "thetaincl/stepper.hpp"

namespace thetaincl {

// Observed counterparts of the scheme's a priori bounds on one trajectory.
struct AprioriReport {
    double theta = 1.0;
    double max_h_sq = 0.0;       // max_{k=0..N} ||u^k||_H^2
    double sum_v_p = 0.0;        // sum_k tau^k ||w^k||_V^p
    double increment_sum = 0.0;  // (2 theta - 1) sum_k ||u^k - u^{k-1}||_H^2
    double lhs_lemma42 = 0.0;    // the three above summed
    double sum_ak_q = 0.0;       // sum_k tau^k ||A^k(w^k)||_{V*}^q
    double sum_xik_q = 0.0;      // sum_k tau^k ||iota* xi^k||_{V*}^q
    double sum_rate_q = 0.0;     // sum_k tau^k ||(u^k-u^{k-1})/tau^k||_{V*}^q
    double data_constant = 0.0;  // 1 + ||u0||_H^2 + ||f||^q proxy + ||g||_L1
};

AprioriReport apriori(const TrajectorySolution& traj, const Problem& problem,
                      double theta);

// |(a-b)(theta a + (1-theta) b) - (a^2 - b^2 + (2 theta - 1)(a-b)^2)/2|.
double algebraic_identity_check(double a, double b, double theta);

struct OrderFit {
    double slope = 0.0;
    double fit_residual = 0.0; // RMS residual of the log-log least-squares fit
};

// Least-squares slope of log(error) against log(tau_max); needs >= 3 strictly
// positive pairs.
OrderFit observed_order(const std::vector<double>& errors,
                        const std::vector<double>& tau_maxes);

// Analytic space-time reference u(t, x) (dx needed only for V-norm errors).
struct ExactSolution {
    std::function<double(double, double)> value;
    std::function<double(double, double)> dx;
};

// max over `times` of ||u-hat(t) - reference(t)||_H; the exact variant
// integrates against the analytic formula (5-point Gauss per element), the
// track variant compares coefficients on a shared mesh.
double pointwise_h_error_exact(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                               const ExactSolution& exact,
                               const std::vector<double>& times);
double pointwise_h_error_track(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                               const PiecewiseLinearTrack& reference,
                               const std::vector<double>& times);

// L2(0,T; H) errors (3-point Gauss per slab in time).
double l2th_error_exact(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                        const ExactSolution& exact);
double l2th_error_track(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                        const PiecewiseLinearTrack& reference);

// L2(0,T; V) error of the u-bar interpolant (p = 2 geometry).
double l2tv_error_bar_exact(const PiecewiseConstantTrack& bar, const MeshPtr& mesh,
                            const ExactSolution& exact);
double l2tv_error_bar_track(const PiecewiseConstantTrack& bar, const MeshPtr& mesh,
                            const PiecewiseLinearTrack& reference);

// Grid times filtered for the theta = 1 rough-datum check: pointwise-H
// convergence is only claimed on [eps_offset, T].
std::vector<double> check_times(const TimeGrid& grid, double eps_offset);

// ||u0||_V * tau_max^{1/p}: the initial-datum growth observable.
double initial_growth_value(const DiscreteFunction& u0, const TimeGrid& grid);

// Per-grid row of a refinement study.
struct GridErrors {
    int N = 0;
    double tau_max = 0.0;
    double r_max = 1.0;
    double err_pointwise_h = 0.0;
    double err_l2th = 0.0;
    double err_l2tv = 0.0; // NaN when not computed (p != 2)
};

struct ConvergenceReport {
    std::vector<GridErrors> grids;
    std::optional<OrderFit> order_pointwise_h; // present with >= 3 grids
    std::optional<OrderFit> order_l2th;
    bool ratio_ok = true;
    double ratio_bound = 0.0;
    double admissibility_margin = 0.0; // min over runs of (tau0 - tau_max)
};

} // namespace thetaincl
