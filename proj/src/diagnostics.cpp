#include "thetaincl/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "thetaincl/quadrature.hpp"

namespace thetaincl {

namespace {

double conjugate_exponent(double p) { return p / (p - 1.0); }

// ||u_h(t) - u(t,.)||_{L2} with u_h given by free coefficients.
double h_error_vs_exact(const MeshPtr& mesh, const Eigen::VectorXd& coeffs,
                        const ExactSolution& exact, double t) {
    if (mesh->is_desk()) return std::abs(coeffs[0] - exact.value(t, 0.0));
    const Eigen::VectorXd full = mesh->full_values(coeffs);
    const GaussRule rule = gauss5();
    double acc = 0.0;
    for (int e = 0; e < mesh->element_count(); ++e) {
        const double xl = mesh->nodes()[static_cast<std::size_t>(e)];
        const double xr = mesh->nodes()[static_cast<std::size_t>(e) + 1];
        acc += integrate(rule, xl, xr, [&](double x) {
            const double lam = (x - xl) / (xr - xl);
            const double uh = (1.0 - lam) * full[e] + lam * full[e + 1];
            const double d = uh - exact.value(t, x);
            return d * d;
        });
    }
    return std::sqrt(acc);
}

// ||u_h(t) - u(t,.)||_V for p = 2 (slope error plus the L2 part in natural mode).
double v_error_vs_exact(const MeshPtr& mesh, const Eigen::VectorXd& coeffs,
                        const ExactSolution& exact, double t) {
    if (mesh->is_desk()) return std::abs(coeffs[0] - exact.value(t, 0.0));
    if (!exact.dx)
        throw std::invalid_argument("diagnostics: V-norm error needs the reference slope");
    const Eigen::VectorXd full = mesh->full_values(coeffs);
    const GaussRule rule = gauss5();
    double acc = 0.0;
    for (int e = 0; e < mesh->element_count(); ++e) {
        const double xl = mesh->nodes()[static_cast<std::size_t>(e)];
        const double xr = mesh->nodes()[static_cast<std::size_t>(e) + 1];
        const double slope = (full[e + 1] - full[e]) / (xr - xl);
        acc += integrate(rule, xl, xr, [&](double x) {
            const double d = slope - exact.dx(t, x);
            return d * d;
        });
        if (mesh->bc() == BoundaryCondition::natural) {
            acc += integrate(rule, xl, xr, [&](double x) {
                const double lam = (x - xl) / (xr - xl);
                const double uh = (1.0 - lam) * full[e] + lam * full[e + 1];
                const double d = uh - exact.value(t, x);
                return d * d;
            });
        }
    }
    return std::sqrt(acc);
}

double h_norm_of(const MeshPtr& mesh, const Eigen::VectorXd& d) {
    return std::sqrt(std::max(0.0, d.dot(mesh->mass_apply(d))));
}

double v2_norm_of(const MeshPtr& mesh, const Eigen::VectorXd& d) {
    return std::sqrt(std::max(0.0, d.dot(mesh->gram2() * d)));
}

} // namespace

AprioriReport apriori(const TrajectorySolution& traj, const Problem& problem,
                      double theta) {
    const MeshPtr& mesh = problem.mesh;
    const double p = problem.op.p;
    const double q = conjugate_exponent(p);
    AprioriReport report;
    report.theta = theta;

    for (const auto& u : traj.states) {
        const double h2 = u.coeffs.dot(mesh->mass_apply(u.coeffs));
        report.max_h_sq = std::max(report.max_h_sq, h2);
    }
    const int N = traj.grid.slab_count();
    for (int k = 1; k <= N; ++k) {
        const double tau = traj.grid.tau(k);
        const auto& w = traj.mids[static_cast<std::size_t>(k - 1)];
        report.sum_v_p += tau * std::pow(v_norm(mesh, p, w.coeffs), p);

        const Eigen::VectorXd delta = traj.states[static_cast<std::size_t>(k)].coeffs -
                                      traj.states[static_cast<std::size_t>(k - 1)].coeffs;
        report.increment_sum += delta.dot(mesh->mass_apply(delta));

        const DualVector ak = slab_average_apply(problem.op, mesh, traj.grid, k, w.coeffs);
        report.sum_ak_q += tau * std::pow(dual_norm(ak, p), q);

        const auto& xi = traj.selections[static_cast<std::size_t>(k - 1)];
        if (xi.values.size() > 0) {
            const DualVector eta = iota_adjoint(problem.embedding, mesh, xi);
            report.sum_xik_q += tau * std::pow(dual_norm(eta, p), q);
        }

        const DualVector rate{mesh, mesh->mass_apply((delta / tau).eval())};
        report.sum_rate_q += tau * std::pow(dual_norm(rate, p), q);
    }
    report.increment_sum *= (2.0 * theta - 1.0);
    report.lhs_lemma42 = report.max_h_sq + report.sum_v_p + report.increment_sum;

    // Data-side constant: shape 1 + ||u0||_H^2 + sum tau ||fbar^k||_{V*}^q + ||g||_L1.
    report.data_constant = 1.0;
    const auto& u0 = traj.states.front();
    report.data_constant += u0.coeffs.dot(mesh->mass_apply(u0.coeffs));
    for (int k = 1; k <= N; ++k) {
        const DualVector fk = slab_average_load(problem.source, mesh, traj.grid, k);
        report.data_constant += traj.grid.tau(k) * std::pow(dual_norm(fk, p), q);
    }
    if (problem.growth && problem.growth->case_tag == "B") {
        const GaussRule rule = gauss3();
        report.data_constant += integrate(rule, 0.0, traj.grid.horizon(), [&](double t) {
            return std::abs(problem.growth->g.value(t));
        });
    }
    return report;
}

double algebraic_identity_check(double a, double b, double theta) {
    const double lhs = (a - b) * (theta * a + (1.0 - theta) * b);
    const double rhs = 0.5 * (a * a - b * b + (2.0 * theta - 1.0) * (a - b) * (a - b));
    return std::abs(lhs - rhs);
}

OrderFit observed_order(const std::vector<double>& errors,
                        const std::vector<double>& tau_maxes) {
    if (errors.size() != tau_maxes.size())
        throw std::invalid_argument("observed_order: list lengths differ");
    if (errors.size() < 3)
        throw std::invalid_argument("observed_order: need at least 3 grids");
    const std::size_t n = errors.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(errors[i] > 0.0) || !(tau_maxes[i] > 0.0))
            throw std::invalid_argument("observed_order: entries must be positive");
        xs[i] = std::log(tau_maxes[i]);
        ys[i] = std::log(errors[i]);
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double dn = static_cast<double>(n);
    const double denom = dn * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("observed_order: degenerate abscissae");
    OrderFit fit;
    fit.slope = (dn * sxy - sx * sy) / denom;
    const double intercept = (sy - fit.slope * sx) / dn;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (intercept + fit.slope * xs[i]);
        rss += r * r;
    }
    fit.fit_residual = std::sqrt(rss / dn);
    return fit;
}

double pointwise_h_error_exact(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                               const ExactSolution& exact,
                               const std::vector<double>& times) {
    double worst = 0.0;
    for (double t : times)
        worst = std::max(worst, h_error_vs_exact(mesh, eval_hat(hat, t), exact, t));
    return worst;
}

double pointwise_h_error_track(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                               const PiecewiseLinearTrack& reference,
                               const std::vector<double>& times) {
    double worst = 0.0;
    for (double t : times) {
        const Eigen::VectorXd d = eval_hat(hat, t) - eval_hat(reference, t);
        worst = std::max(worst, h_norm_of(mesh, d));
    }
    return worst;
}

double l2th_error_exact(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                        const ExactSolution& exact) {
    const GaussRule rule = gauss3();
    double acc = 0.0;
    for (int k = 1; k <= hat.grid.slab_count(); ++k) {
        acc += integrate(rule, hat.grid.left(k), hat.grid.right(k), [&](double t) {
            const double e = h_error_vs_exact(mesh, eval_hat(hat, t), exact, t);
            return e * e;
        });
    }
    return std::sqrt(acc);
}

double l2th_error_track(const PiecewiseLinearTrack& hat, const MeshPtr& mesh,
                        const PiecewiseLinearTrack& reference) {
    const GaussRule rule = gauss3();
    double acc = 0.0;
    for (int k = 1; k <= hat.grid.slab_count(); ++k) {
        acc += integrate(rule, hat.grid.left(k), hat.grid.right(k), [&](double t) {
            const Eigen::VectorXd d = eval_hat(hat, t) - eval_hat(reference, t);
            const double e = h_norm_of(mesh, d);
            return e * e;
        });
    }
    return std::sqrt(acc);
}

double l2tv_error_bar_exact(const PiecewiseConstantTrack& bar, const MeshPtr& mesh,
                            const ExactSolution& exact) {
    const GaussRule rule = gauss3();
    double acc = 0.0;
    for (int k = 1; k <= bar.grid.slab_count(); ++k) {
        const Eigen::VectorXd& w = bar.values[static_cast<std::size_t>(k - 1)];
        acc += integrate(rule, bar.grid.left(k), bar.grid.right(k), [&](double t) {
            const double e = v_error_vs_exact(mesh, w, exact, t);
            return e * e;
        });
    }
    return std::sqrt(acc);
}

double l2tv_error_bar_track(const PiecewiseConstantTrack& bar, const MeshPtr& mesh,
                            const PiecewiseLinearTrack& reference) {
    const GaussRule rule = gauss3();
    double acc = 0.0;
    for (int k = 1; k <= bar.grid.slab_count(); ++k) {
        const Eigen::VectorXd& w = bar.values[static_cast<std::size_t>(k - 1)];
        acc += integrate(rule, bar.grid.left(k), bar.grid.right(k), [&](double t) {
            const double e = v2_norm_of(mesh, w - eval_hat(reference, t));
            return e * e;
        });
    }
    return std::sqrt(acc);
}

std::vector<double> check_times(const TimeGrid& grid, double eps_offset) {
    std::vector<double> times;
    for (double t : grid.points)
        if (t >= eps_offset) times.push_back(t);
    if (times.empty()) times.push_back(grid.horizon());
    return times;
}

double initial_growth_value(const DiscreteFunction& u0, const TimeGrid& grid) {
    return v_norm(u0) * std::pow(regularity(grid).tau_max, 1.0 / u0.p);
}

} // namespace thetaincl
