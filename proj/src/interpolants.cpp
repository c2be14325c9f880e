#include "thetaincl/interpolants.hpp"

#include <cmath>
#include <stdexcept>

#include "thetaincl/quadrature.hpp"

namespace thetaincl {

namespace {

void require_same_grid(const TimeGrid& a, const TimeGrid& b) {
    if (a.points != b.points)
        throw std::invalid_argument("interpolants: tracks live on different grids");
}

double conjugate_exponent(double p) { return p / (p - 1.0); }

} // namespace

PiecewiseConstantTrack bar_track(const TrajectorySolution& traj) {
    PiecewiseConstantTrack track;
    track.grid = traj.grid;
    track.values.reserve(traj.mids.size());
    for (const auto& w : traj.mids) track.values.push_back(w.coeffs);
    return track;
}

PiecewiseLinearTrack hat_track(const TrajectorySolution& traj) {
    PiecewiseLinearTrack track;
    track.grid = traj.grid;
    track.states.reserve(traj.states.size());
    for (const auto& u : traj.states) track.states.push_back(u.coeffs);
    return track;
}

PiecewiseConstantTrack eta_track(const TrajectorySolution& traj,
                                 const EmbeddingSpec& embedding, const MeshPtr& mesh) {
    PiecewiseConstantTrack track;
    track.grid = traj.grid;
    track.values.reserve(traj.selections.size());
    for (const auto& xi : traj.selections) {
        if (xi.values.size() == 0) {
            track.values.push_back(Eigen::VectorXd::Zero(mesh->free_count()));
        } else {
            track.values.push_back(iota_adjoint(embedding, mesh, xi).coeffs);
        }
    }
    return track;
}

const Eigen::VectorXd& eval_bar(const PiecewiseConstantTrack& track, double t) {
    const int k = slab_of(track.grid, t);
    return track.values[static_cast<std::size_t>(k - 1)];
}

Eigen::VectorXd eval_hat(const PiecewiseLinearTrack& track, double t) {
    const int k = slab_of(track.grid, t);
    const double t0 = track.grid.left(k);
    const double lam = (t - t0) / track.grid.tau(k);
    return (1.0 - lam) * track.states[static_cast<std::size_t>(k - 1)] +
           lam * track.states[static_cast<std::size_t>(k)];
}

Eigen::VectorXd hat_derivative(const PiecewiseLinearTrack& track, double t) {
    int k = slab_of(track.grid, t);
    // Grid points belong to the closing slab; the derivative convention takes
    // the opening one except at t = T.
    if (t == track.grid.right(k) && k < track.grid.slab_count()) ++k;
    return (track.states[static_cast<std::size_t>(k)] -
            track.states[static_cast<std::size_t>(k - 1)]) /
           track.grid.tau(k);
}

ScalarTrack clement_project(const std::function<double(double)>& v, const TimeGrid& grid) {
    ScalarTrack track;
    track.grid = grid;
    track.values.resize(static_cast<std::size_t>(grid.slab_count()));
    const GaussRule rule = gauss3();
    for (int k = 1; k <= grid.slab_count(); ++k)
        track.values[static_cast<std::size_t>(k - 1)] =
            integrate(rule, grid.left(k), grid.right(k), v) / grid.tau(k);
    return track;
}

double eval_scalar_bar(const ScalarTrack& track, double t) {
    return track.values[static_cast<std::size_t>(slab_of(track.grid, t) - 1)];
}

double clement_error_l2(const std::function<double(double)>& v, const ScalarTrack& track) {
    const GaussRule rule = gauss5();
    double acc = 0.0;
    for (int k = 1; k <= track.grid.slab_count(); ++k) {
        const double mean = track.values[static_cast<std::size_t>(k - 1)];
        acc += integrate(rule, track.grid.left(k), track.grid.right(k), [&](double t) {
            const double d = v(t) - mean;
            return d * d;
        });
    }
    return std::sqrt(acc);
}

// --- norms -----------------------------------------------------------------

double norm_Lp_V(const PiecewiseConstantTrack& track, const MeshPtr& mesh, double p) {
    double acc = 0.0;
    for (int k = 1; k <= track.grid.slab_count(); ++k)
        acc += track.grid.tau(k) *
               std::pow(v_norm(mesh, p, track.values[static_cast<std::size_t>(k - 1)]), p);
    return std::pow(acc, 1.0 / p);
}

double norm_Linf_H(const PiecewiseLinearTrack& track, const MeshPtr& mesh) {
    double worst = 0.0;
    for (const auto& u : track.states)
        worst = std::max(worst, std::sqrt(std::max(0.0, u.dot(mesh->mass_apply(u)))));
    return worst;
}

double norm_Lq_Vstar_dt(const PiecewiseLinearTrack& track, const MeshPtr& mesh, double p) {
    const double q = conjugate_exponent(p);
    double acc = 0.0;
    for (int k = 1; k <= track.grid.slab_count(); ++k) {
        const Eigen::VectorXd rate =
            (track.states[static_cast<std::size_t>(k)] -
             track.states[static_cast<std::size_t>(k - 1)]) /
            track.grid.tau(k);
        const double dn = dual_norm(DualVector{mesh, mesh->mass_apply(rate)}, p);
        acc += track.grid.tau(k) * std::pow(dn, q);
    }
    return std::pow(acc, 1.0 / q);
}

// --- BV^q ------------------------------------------------------------------

double bvq_seminorm(const std::vector<Eigen::VectorXd>& values, double q,
                    const std::function<double(const Eigen::VectorXd&)>& norm) {
    if (!(q >= 1.0)) throw std::invalid_argument("bvq_seminorm: q must be >= 1");
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    // best[j]: largest chain sum over increasing index chains ending at j.
    std::vector<double> best(n, 0.0);
    double sup = 0.0;
    for (std::size_t j = 1; j < n; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            const double inc = std::pow(norm(values[j] - values[i]), q);
            best[j] = std::max(best[j], best[i] + inc);
        }
        sup = std::max(sup, best[j]);
    }
    return sup;
}

double bvq_seminorm_vstar(const PiecewiseConstantTrack& track, const MeshPtr& mesh,
                          double p, double q) {
    return bvq_seminorm(track.values, q, [&](const Eigen::VectorXd& d) {
        return dual_norm(DualVector{mesh, mesh->mass_apply(d)}, p);
    });
}

// --- BBB identity ----------------------------------------------------------

BbbResult bbb_identity(const PiecewiseLinearTrack& hat, const PiecewiseConstantTrack& bar,
                       const MeshPtr& mesh, double theta) {
    require_same_grid(hat.grid, bar.grid);
    BbbResult out;
    for (int k = 1; k <= hat.grid.slab_count(); ++k) {
        const Eigen::VectorXd& prev = hat.states[static_cast<std::size_t>(k - 1)];
        const Eigen::VectorXd& next = hat.states[static_cast<std::size_t>(k)];
        const Eigen::VectorXd delta = next - prev;
        // int_slab (hat', hat - w^k)_H dt = (Delta, (u^{k-1}+u^k)/2 - w^k)_H:
        // the affine part integrates to the slab midpoint mean.
        const Eigen::VectorXd mean_minus_w =
            0.5 * (prev + next) - bar.values[static_cast<std::size_t>(k - 1)];
        out.lhs += delta.dot(mesh->mass_apply(mean_minus_w));
        out.rhs += delta.dot(mesh->mass_apply(delta));
    }
    out.rhs *= -0.5 * (2.0 * theta - 1.0);
    out.residual = std::abs(out.lhs - out.rhs);
    return out;
}

HatBarGap hat_bar_gap(const PiecewiseLinearTrack& hat, const MeshPtr& mesh, double p,
                      double theta) {
    const double q = conjugate_exponent(p);
    HatBarGap gap;
    const int N = hat.grid.slab_count();
    gap.gap_pow.resize(static_cast<std::size_t>(N));
    gap.bound_pow.resize(static_cast<std::size_t>(N));
    // With w^k the theta-combination, hat - bar = Delta (sigma - theta) for
    // sigma in (0,1], so the q-th power integrates in closed form.
    const double shape =
        (std::pow(theta, q + 1.0) + std::pow(1.0 - theta, q + 1.0)) / (q + 1.0);
    for (int k = 1; k <= N; ++k) {
        const Eigen::VectorXd delta = hat.states[static_cast<std::size_t>(k)] -
                                      hat.states[static_cast<std::size_t>(k - 1)];
        const double tau = hat.grid.tau(k);
        const double dn = dual_norm(DualVector{mesh, mesh->mass_apply(delta)}, p);
        gap.gap_pow[static_cast<std::size_t>(k - 1)] = tau * std::pow(dn, q) * shape;
        gap.bound_pow[static_cast<std::size_t>(k - 1)] =
            (std::pow(tau, q) / (q + 1.0)) * tau * std::pow(dn / tau, q);
    }
    return gap;
}

} // namespace thetaincl
