#pragma once

#include <functional>
#include <optional>
#include <string>

#include "thetaincl/fem_space.hpp"
#include "thetaincl/time_grid.hpp"

namespace thetaincl {

// Named scalar time profile with a closed-form antiderivative, so slab means
// of coefficients and modulations can be computed exactly.
struct TimeProfile {
    std::string kind = "const"; // "const" | "linear" | "cos"
    double a = 1.0;             // const value / offset
    double b = 0.0;             // slope (linear) or cosine amplitude
    double omega = 1.0;         // cosine frequency

    double value(double t) const;
    double antiderivative(double t) const;
    // Slab mean (1/(t1-t0)) * int_{t0}^{t1} value.
    double mean(double t0, double t1) const;
    double min_on(double T) const;
    double max_on(double T) const;
};

TimeProfile make_profile(const std::string& kind, double a, double b, double omega);

// Quasilinear elliptic family A(t, u) = -d/dx( mu(t) |u'|^{p-2} u' ) + b(t, u)
// in weak form, with the bounded nonmonotone perturbation
// b(t, s) = -kappa * s / (1 + s^2).  alpha/beta are the declared coercivity
// constants and a(r) = growth_a0 + growth_a1 * r the declared growth majorant;
// both are *claims* checked by the sampling validators, not inputs to the
// assembly.
struct HolderData {
    double C1 = 0.0;
    double C2 = 0.0;
    double gamma = 1.0;
    double delta = 1.0;
};

struct OperatorSpec {
    double p = 2.0;
    TimeProfile mu;
    double kappa = 0.0;
    double alpha = 1.0;
    double beta = 0.0;
    double growth_a0 = 1.0;
    double growth_a1 = 0.0;
    std::optional<HolderData> holder;
};

void validate_operator_spec(const OperatorSpec& spec, double T);

// Weak application <A(t, u), .> on the free nodes.
DualVector apply(const OperatorSpec& spec, const MeshPtr& mesh, double t,
                 const Eigen::VectorXd& coeffs);

// Derivative of coeffs -> apply(...) at the given point (weighted stiffness
// from the p-Laplacian flux plus the perturbation's Gauss-2 mass block).
Eigen::SparseMatrix<double> apply_jacobian(const OperatorSpec& spec, const MeshPtr& mesh,
                                           double t, const Eigen::VectorXd& coeffs);

// Slab averages (1/tau^k) int over slab k by 3-point Gauss, exact for the
// polynomial-in-time registry coefficients up to degree 5.
DualVector slab_average_apply(const OperatorSpec& spec, const MeshPtr& mesh,
                              const TimeGrid& grid, int k, const Eigen::VectorXd& coeffs);
Eigen::SparseMatrix<double> slab_average_jacobian(const OperatorSpec& spec,
                                                  const MeshPtr& mesh, const TimeGrid& grid,
                                                  int k, const Eigen::VectorXd& coeffs);

// Right-hand side f(t, x) in V_h^*.
struct SourceSpec {
    std::string name = "zero";
    std::function<double(double, double)> f; // (t, x); desk spaces use x = 0
};

DualVector load_vector(const SourceSpec& source, const MeshPtr& mesh, double t);
DualVector slab_average_load(const SourceSpec& source, const MeshPtr& mesh,
                             const TimeGrid& grid, int k);

// --- sampling validators ---------------------------------------------------

struct HypothesisReport {
    int samples = 0;
    double worst_coercivity_margin = 0.0; // <Av,v> - alpha||v||_V^p + beta||v||_H^2
    double worst_growth_margin = 0.0;     // a(||v||_H)(1 + ||v||^{p-1}) - ||Av||_*
    bool pass = false;
};

struct HolderReport {
    int samples = 0;
    double worst_ratio = 0.0; // ||A(t,v)-A(s,v)||_* / ((C1+C2||v||^delta)|t-s|^gamma)
    bool delta_in_range = false;
    bool pass = false;
};

// Randomized check of the declared coercivity/growth constants over sampled
// (t, v); margins are relative to max(1, ||v||_V^p, ||v||_H^2).
HypothesisReport validate_H_A(const OperatorSpec& spec, const MeshPtr& mesh, double T,
                              int samples, std::uint64_t seed);

// Randomized check of the temporal Hoelder bound, plus the exponent window
// delta in (0, p*(gamma+1) - 1).
HolderReport validate_holder(const OperatorSpec& spec, const MeshPtr& mesh, double T,
                             int samples, std::uint64_t seed);

} // namespace thetaincl
