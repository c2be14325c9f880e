#include "thetaincl/stepper.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <limits>
#include <sstream>

#include "thetaincl/log.hpp"

namespace thetaincl {

void validate_theta_config(const ThetaConfig& cfg) {
    if (cfg.theta == 0.0)
        throw std::invalid_argument("theta config: theta = 0 (explicit Euler) is excluded");
    if (!(cfg.theta > 0.0 && cfg.theta <= 1.0))
        throw std::invalid_argument("theta config: theta must lie in (0, 1]");
    if (!(cfg.newton_tol > 0.0))
        throw std::invalid_argument("theta config: newton_tol must be positive");
    if (cfg.newton_max_iter < 1 || cfg.picard_max_iter < 1)
        throw std::invalid_argument("theta config: iteration caps must be >= 1");
    if (!(cfg.eps_min > 0.0) || !(cfg.c_eps >= 0.0))
        throw std::invalid_argument("theta config: eps rule constants out of range");
}

double admissible_tau0(const OperatorSpec& op, const GrowthParams* growth,
                       const EmbeddingSpec& embedding, double theta) {
    if (!(theta > 0.0 && theta <= 1.0))
        throw std::invalid_argument("admissible_tau0: theta must lie in (0, 1]");
    double denom = theta * op.beta;
    if (growth && growth->case_tag == "A") {
        double p_norm = 1.0;
        if (embedding.p_map_norm_bound) {
            p_norm = *embedding.p_map_norm_bound;
        } else if (embedding.mode == EmbeddingMode::boundary) {
            throw std::invalid_argument(
                "admissible_tau0: case A needs the H->U map bound, "
                "which boundary mode does not provide");
        }
        denom = theta * (op.beta + growth->d1 * p_norm * p_norm);
    }
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / denom;
}

namespace {

// Assembled context for one slab solve, in the w-variable.
struct SlabSystem {
    const Problem& problem;
    const TimeGrid& grid;
    int k;
    double theta;
    double tau;
    double inv_theta_tau;
    Eigen::VectorXd u_prev;
    Eigen::VectorXd fbar;   // slab-averaged load coefficients
    double mbar = 0.0;      // modulation slab mean
    double eps = 0.0;
    std::optional<RegularizedSelection> sel;

    const MeshPtr& mesh() const { return problem.mesh; }
    bool has_graph() const { return sel.has_value(); }

    // U-representation of iota(w).
    Eigen::VectorXd u_values(const Eigen::VectorXd& w) const {
        if (problem.embedding.mode == EmbeddingMode::source) return w;
        const Eigen::VectorXd full = mesh()->full_values(w);
        Eigen::VectorXd tr(2);
        tr[0] = full[0];
        tr[1] = full[full.size() - 1];
        return tr;
    }

    Eigen::VectorXd xi_of(const Eigen::VectorXd& w) const {
        const Eigen::VectorXd uv = u_values(w);
        Eigen::VectorXd xi(uv.size());
        for (Eigen::Index i = 0; i < uv.size(); ++i)
            xi[i] = mbar * sel->base_eps(uv[i]);
        return xi;
    }

    Eigen::VectorXd residual_with_xi(const Eigen::VectorXd& w,
                                     const Eigen::VectorXd& xi) const {
        Eigen::VectorXd r = inv_theta_tau * mesh()->mass_apply(w - u_prev);
        r += slab_average_apply(problem.op, mesh(), grid, k, w).coeffs;
        r -= fbar;
        if (xi.size() > 0)
            r += iota_adjoint(problem.embedding, mesh(), UElement{xi}).coeffs;
        return r;
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& w) const {
        return residual_with_xi(w, has_graph() ? xi_of(w) : Eigen::VectorXd());
    }

    Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& w,
                                         bool with_graph) const {
        Eigen::SparseMatrix<double> J =
            slab_average_jacobian(problem.op, mesh(), grid, k, w);
        J = J + Eigen::SparseMatrix<double>(inv_theta_tau * mesh()->mass());
        if (with_graph && has_graph()) {
            const Eigen::VectorXd uv = u_values(w);
            if (problem.embedding.mode == EmbeddingMode::source) {
                Eigen::VectorXd d(uv.size());
                for (Eigen::Index i = 0; i < uv.size(); ++i)
                    d[i] = mbar * sel->base_eps_deriv(uv[i]);
                J = J + Eigen::SparseMatrix<double>(mesh()->mass() * d.asDiagonal());
            } else {
                const int i0 = mesh()->free_index(0);
                const int i1 = mesh()->free_index(mesh()->node_count() - 1);
                J.coeffRef(i0, i0) += mbar * sel->base_eps_deriv(uv[0]);
                J.coeffRef(i1, i1) += mbar * sel->base_eps_deriv(uv[1]);
            }
        }
        return J;
    }

    // Working residual norm: exact dual norm at p = 2, the gram2-surrogate
    // otherwise (the final certificate always uses the true dual norm).
    double work_norm(const Eigen::VectorXd& r) const {
        if (mesh()->is_desk()) return std::abs(r[0]);
        return std::sqrt(std::max(0.0, r.dot(mesh()->gram2_solve(r))));
    }
};

bool sparse_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                  Eigen::VectorXd& x) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) return false;
    x = lu.solve(b);
    return lu.info() == Eigen::Success && x.allFinite();
}

// Damped Newton on the full regularized residual.  Returns true once
// work_norm <= target; false on stagnation (for the Picard fallback).
bool newton_solve(const SlabSystem& sys, const ThetaConfig& cfg, double target,
                  Eigen::VectorXd& w, double& rnorm, int& iterations) {
    Eigen::VectorXd r = sys.residual(w);
    rnorm = sys.work_norm(r);
    for (int it = 0; it < cfg.newton_max_iter; ++it) {
        if (rnorm <= target) return true;
        Eigen::VectorXd delta;
        if (!sparse_solve(sys.jacobian(w, true), -r, delta)) return false;
        double sigma = 1.0;
        bool accepted = false;
        while (sigma >= cfg.damping_floor) {
            const Eigen::VectorXd w_try = w + sigma * delta;
            const Eigen::VectorXd r_try = sys.residual(w_try);
            const double n_try = sys.work_norm(r_try);
            if (n_try < rnorm) {
                w = w_try;
                r = r_try;
                rnorm = n_try;
                accepted = true;
                break;
            }
            sigma *= 0.5;
        }
        ++iterations;
        if (!accepted) return false;
    }
    return rnorm <= target;
}

// Inner solve of the lagged problem (multivalued term frozen): smooth Newton
// on the monotone-principal-part residual.
bool lagged_solve(const SlabSystem& sys, const ThetaConfig& cfg,
                  const Eigen::VectorXd& xi_lag, double target,
                  Eigen::VectorXd& w) {
    Eigen::VectorXd r = sys.residual_with_xi(w, xi_lag);
    double rnorm = sys.work_norm(r);
    for (int it = 0; it < 30; ++it) {
        if (rnorm <= target) return true;
        Eigen::VectorXd delta;
        if (!sparse_solve(sys.jacobian(w, false), -r, delta)) return false;
        double sigma = 1.0;
        bool accepted = false;
        while (sigma >= cfg.damping_floor) {
            const Eigen::VectorXd w_try = w + sigma * delta;
            const Eigen::VectorXd r_try = sys.residual_with_xi(w_try, xi_lag);
            const double n_try = sys.work_norm(r_try);
            if (n_try < rnorm) {
                w = w_try;
                r = r_try;
                rnorm = n_try;
                accepted = true;
                break;
            }
            sigma *= 0.5;
        }
        if (!accepted) return false;
    }
    return rnorm <= target;
}

bool picard_solve(const SlabSystem& sys, const ThetaConfig& cfg, double target,
                  Eigen::VectorXd& w, double& rnorm, int& iterations) {
    rnorm = sys.work_norm(sys.residual(w));
    for (int j = 0; j < cfg.picard_max_iter; ++j) {
        if (rnorm <= target) return true;
        const Eigen::VectorXd xi_lag =
            sys.has_graph() ? sys.xi_of(w) : Eigen::VectorXd();
        Eigen::VectorXd w_hat = w;
        if (!lagged_solve(sys, cfg, xi_lag, std::max(0.1 * target, 1e-14), w_hat))
            return false;
        double omega = 1.0;
        bool accepted = false;
        while (omega >= cfg.damping_floor) {
            const Eigen::VectorXd w_try = w + omega * (w_hat - w);
            const double n_try = sys.work_norm(sys.residual(w_try));
            if (n_try < rnorm) {
                w = w_try;
                rnorm = n_try;
                accepted = true;
                break;
            }
            omega *= 0.5;
        }
        ++iterations;
        if (!accepted) return false;
    }
    return rnorm <= target;
}

} // namespace

StepResult step(const ThetaConfig& cfg, const Problem& problem, const TimeGrid& grid,
                int k, const DiscreteFunction& u_prev) {
    validate_theta_config(cfg);
    if (k < 1 || k > grid.slab_count())
        throw std::invalid_argument("step: slab index out of range");
    if (u_prev.mesh != problem.mesh)
        throw std::invalid_argument("step: state mesh does not match the problem mesh");
    validate_embedding(problem.embedding, problem.mesh);

    const double theta = cfg.theta;
    const double tau = grid.tau(k);

    StepResult result;
    result.tau0 = admissible_tau0(problem.op,
                                  problem.growth ? &*problem.growth : nullptr,
                                  problem.embedding, theta);
    const bool strict_case_a = problem.growth && problem.growth->case_tag == "A";
    const bool admissible = strict_case_a ? tau < result.tau0 : tau <= result.tau0;
    if (!admissible) {
        std::ostringstream msg;
        msg << "slab " << k << ": tau = " << tau
            << " violates the admissibility threshold tau0 = " << result.tau0;
        if (cfg.strict_admissibility) throw InadmissibleStep(k, tau, result.tau0, msg.str());
        log_warn(msg.str() + " (continuing; strict_admissibility off)");
        result.admissibility_warned = true;
    }

    SlabSystem sys{problem, grid, k, theta, tau, 1.0 / (theta * tau),
                   u_prev.coeffs,
                   slab_average_load(problem.source, problem.mesh, grid, k).coeffs};
    if (problem.graph) {
        double eps = std::max(cfg.eps_min, cfg.c_eps * tau);
        const double cap = 0.499 * problem.graph->min_gap();
        eps = std::min(eps, cap);
        sys.eps = eps;
        sys.mbar = problem.graph->modulation.mean(grid.left(k), grid.right(k));
        sys.sel = regularize(*problem.graph, eps);
        result.eps = eps;
    }

    // Solve in w = theta u^k + (1-theta) u^{k-1}; tighten the working target
    // until the true dual-norm certificate (recomputed from the stored
    // selection) meets newton_tol.
    Eigen::VectorXd w = u_prev.coeffs;
    double target = (problem.op.p == 2.0) ? cfg.newton_tol : 0.5 * cfg.newton_tol;
    for (int round = 0; round < 4; ++round) {
        double rnorm = std::numeric_limits<double>::infinity();
        bool converged = newton_solve(sys, cfg, target, w, rnorm, result.newton_iterations);
        if (!converged && cfg.picard_fallback) {
            result.used_picard = true;
            converged = picard_solve(sys, cfg, target, w, rnorm, result.picard_iterations);
        }
        if (!converged) {
            std::ostringstream msg;
            msg << "slab " << k << ": residual " << rnorm
                << " above tolerance after Newton and Picard";
            throw NonConvergence(k, rnorm, msg.str());
        }

        // Record the selection: clamp the surrogate value into the graph's
        // hull over the eps-window (its graph-distance guarantee), then
        // certify the residual with the clamped values.
        Eigen::VectorXd xi;
        result.clamp_distance = 0.0;
        if (sys.has_graph()) {
            const Eigen::VectorXd uv = sys.u_values(w);
            xi.resize(uv.size());
            for (Eigen::Index i = 0; i < uv.size(); ++i) {
                const Interval hull = base_hull(*problem.graph, uv[i], sys.eps);
                const Interval scaled{sys.mbar * hull.lo, sys.mbar * hull.hi};
                const double raw = sys.mbar * sys.sel->base_eps(uv[i]);
                xi[i] = scaled.clamp(raw);
                result.clamp_distance =
                    std::max(result.clamp_distance, std::abs(xi[i] - raw));
            }
        }
        const Eigen::VectorXd cert_res = sys.residual_with_xi(w, xi);
        result.residual_dual_norm =
            dual_norm(DualVector{problem.mesh, cert_res}, problem.op.p);
        if (result.residual_dual_norm <= cfg.newton_tol) {
            result.xi = UElement{std::move(xi)};
            break;
        }
        if (round == 3) {
            std::ostringstream msg;
            msg << "slab " << k << ": certificate residual "
                << result.residual_dual_norm << " above newton_tol";
            throw NonConvergence(k, result.residual_dual_norm, msg.str());
        }
        target *= 0.1;
    }

    result.w = DiscreteFunction{problem.mesh, problem.op.p, w};
    result.u_k = DiscreteFunction{problem.mesh, problem.op.p,
                                  (w - (1.0 - theta) * u_prev.coeffs) / theta};
    return result;
}

TrajectorySolution solve_trajectory(const ThetaConfig& cfg, const Problem& problem,
                                    const TimeGrid& grid, const DiscreteFunction& u0) {
    validate_theta_config(cfg);
    TrajectorySolution traj;
    traj.grid = grid;
    traj.states.reserve(static_cast<std::size_t>(grid.slab_count()) + 1);
    traj.states.push_back(u0);
    for (int k = 1; k <= grid.slab_count(); ++k) {
        StepResult res = step(cfg, problem, grid, k, traj.states.back());
        StepRecord record;
        record.k = k;
        record.tau = grid.tau(k);
        record.eps = res.eps;
        record.residual = res.residual_dual_norm;
        record.clamp_distance = res.clamp_distance;
        record.tau0 = res.tau0;
        record.newton_iterations = res.newton_iterations;
        record.picard_iterations = res.picard_iterations;
        record.used_picard = res.used_picard;
        record.admissibility_warned = res.admissibility_warned;
        traj.records.push_back(record);
        traj.mids.push_back(res.w);
        traj.selections.push_back(res.xi);
        traj.states.push_back(res.u_k);
        log_debug("slab " + std::to_string(k) + ": residual " +
                  std::to_string(res.residual_dual_norm));
    }
    return traj;
}

} // namespace thetaincl
