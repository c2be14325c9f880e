#include "thetaincl/operators.hpp"

#include <cmath>
#include <stdexcept>

#include "thetaincl/quadrature.hpp"
#include "thetaincl/rng.hpp"

namespace thetaincl {

namespace {

double signed_power(double s, double p) {
    if (s == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(s), p - 1.0), s);
}

// Registry perturbation b(t, s) = -kappa * s / (1 + s^2) and its s-derivative.
double perturbation(double kappa, double s) { return -kappa * s / (1.0 + s * s); }

double perturbation_deriv(double kappa, double s) {
    const double d = 1.0 + s * s;
    return -kappa * (1.0 - s * s) / (d * d);
}

Eigen::VectorXd random_coeffs(Rng& rng, int n) {
    const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
}

} // namespace

// --- time profiles ---------------------------------------------------------

double TimeProfile::value(double t) const {
    if (kind == "const") return a;
    if (kind == "linear") return a + b * t;
    if (kind == "cos") return a + b * std::cos(omega * t);
    throw std::invalid_argument("time profile: unknown kind '" + kind + "'");
}

double TimeProfile::antiderivative(double t) const {
    if (kind == "const") return a * t;
    if (kind == "linear") return a * t + 0.5 * b * t * t;
    if (kind == "cos") return a * t + (b / omega) * std::sin(omega * t);
    throw std::invalid_argument("time profile: unknown kind '" + kind + "'");
}

double TimeProfile::mean(double t0, double t1) const {
    if (!(t1 > t0)) throw std::invalid_argument("time profile: empty interval");
    return (antiderivative(t1) - antiderivative(t0)) / (t1 - t0);
}

double TimeProfile::min_on(double T) const {
    if (kind == "const") return a;
    if (kind == "linear") return std::min(a, a + b * T);
    double lo = std::min(value(0.0), value(T));
    // Interior cosine extremes sit at multiples of pi / omega.
    const double pi = 3.14159265358979323846;
    for (int k = 0; k * pi / omega <= T; ++k)
        lo = std::min(lo, value(k * pi / omega));
    return lo;
}

double TimeProfile::max_on(double T) const {
    if (kind == "const") return a;
    if (kind == "linear") return std::max(a, a + b * T);
    double hi = std::max(value(0.0), value(T));
    const double pi = 3.14159265358979323846;
    for (int k = 0; k * pi / omega <= T; ++k)
        hi = std::max(hi, value(k * pi / omega));
    return hi;
}

TimeProfile make_profile(const std::string& kind, double a, double b, double omega) {
    if (kind != "const" && kind != "linear" && kind != "cos")
        throw std::invalid_argument("time profile: unknown kind '" + kind + "'");
    TimeProfile prof;
    prof.kind = kind;
    prof.a = a;
    prof.b = b;
    prof.omega = omega;
    if (kind == "cos" && !(omega > 0.0))
        throw std::invalid_argument("time profile: cosine frequency must be positive");
    return prof;
}

void validate_operator_spec(const OperatorSpec& spec, double T) {
    if (!(spec.p > 1.0)) throw std::invalid_argument("operator: p must exceed 1");
    if (!(spec.alpha > 0.0)) throw std::invalid_argument("operator: alpha must be positive");
    if (spec.beta < 0.0) throw std::invalid_argument("operator: beta must be nonnegative");
    if (spec.kappa < 0.0) throw std::invalid_argument("operator: kappa must be nonnegative");
    if (!(spec.mu.min_on(T) > 0.0))
        throw std::invalid_argument("operator: mu must stay positive on [0, T]");
    if (spec.holder) {
        const double upper = spec.p * (spec.holder->gamma + 1.0) - 1.0;
        if (!(spec.holder->delta > 0.0 && spec.holder->delta < upper))
            throw std::invalid_argument("operator: Hoelder delta outside (0, p(gamma+1)-1)");
        if (!(spec.holder->gamma > 0.0 && spec.holder->gamma <= 1.0))
            throw std::invalid_argument("operator: Hoelder gamma outside (0, 1]");
    }
}

// --- application and Jacobian ----------------------------------------------

DualVector apply(const OperatorSpec& spec, const MeshPtr& mesh, double t,
                 const Eigen::VectorXd& coeffs) {
    const double mu = spec.mu.value(t);
    if (mesh->is_desk()) {
        Eigen::VectorXd g(1);
        g[0] = mu * signed_power(coeffs[0], spec.p) + perturbation(spec.kappa, coeffs[0]);
        return {mesh, std::move(g)};
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh->free_count());
    const Eigen::VectorXd s = mesh->slopes(coeffs);
    for (int e = 0; e < mesh->element_count(); ++e) {
        // <principal, phi_i> = sum_e mu |s|^{p-2} s int_e phi_i'.
        const double flux = mu * signed_power(s[e], spec.p);
        const int il = mesh->free_index(e);
        const int ir = mesh->free_index(e + 1);
        if (il >= 0) g[il] -= flux;
        if (ir >= 0) g[ir] += flux;
    }
    if (spec.kappa != 0.0) {
        const Eigen::VectorXd full = mesh->full_values(coeffs);
        const GaussRule rule = gauss2();
        for (int e = 0; e < mesh->element_count(); ++e) {
            const double h = mesh->element_lengths()[static_cast<std::size_t>(e)];
            for (std::size_t q = 0; q < rule.size; ++q) {
                const double xi = rule.nodes[q];
                const double phi[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
                const double val = phi[0] * full[e] + phi[1] * full[e + 1];
                const double w = 0.5 * h * rule.weights[q] * perturbation(spec.kappa, val);
                const int il = mesh->free_index(e);
                const int ir = mesh->free_index(e + 1);
                if (il >= 0) g[il] += w * phi[0];
                if (ir >= 0) g[ir] += w * phi[1];
            }
        }
    }
    return {mesh, std::move(g)};
}

Eigen::SparseMatrix<double> apply_jacobian(const OperatorSpec& spec, const MeshPtr& mesh,
                                           double t, const Eigen::VectorXd& coeffs) {
    const double mu = spec.mu.value(t);
    if (mesh->is_desk()) {
        Eigen::SparseMatrix<double> J(1, 1);
        J.insert(0, 0) = mu * (spec.p - 1.0) * std::pow(std::abs(coeffs[0]), spec.p - 2.0) +
                         perturbation_deriv(spec.kappa, coeffs[0]);
        return J;
    }
    const Eigen::VectorXd s = mesh->slopes(coeffs);
    Eigen::VectorXd c(mesh->element_count());
    for (int e = 0; e < mesh->element_count(); ++e)
        c[e] = mu * (spec.p - 1.0) * std::pow(std::abs(s[e]), spec.p - 2.0);
    Eigen::SparseMatrix<double> J = mesh->weighted_stiffness(c);
    if (spec.kappa != 0.0) {
        const Eigen::VectorXd full = mesh->full_values(coeffs);
        const GaussRule rule = gauss2();
        Eigen::MatrixXd w(mesh->element_count(), 2);
        for (int e = 0; e < mesh->element_count(); ++e) {
            for (std::size_t q = 0; q < rule.size; ++q) {
                const double xi = rule.nodes[q];
                const double val =
                    0.5 * (1.0 - xi) * full[e] + 0.5 * (1.0 + xi) * full[e + 1];
                w(e, static_cast<int>(q)) = perturbation_deriv(spec.kappa, val);
            }
        }
        J = J + mesh->weighted_mass(w);
    }
    return J;
}

DualVector slab_average_apply(const OperatorSpec& spec, const MeshPtr& mesh,
                              const TimeGrid& grid, int k, const Eigen::VectorXd& coeffs) {
    const GaussRule rule = gauss3();
    const double t0 = grid.left(k), t1 = grid.right(k);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(mesh->free_count());
    for (std::size_t q = 0; q < rule.size; ++q) {
        const double t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * rule.nodes[q];
        acc += 0.5 * rule.weights[q] * apply(spec, mesh, t, coeffs).coeffs;
    }
    return {mesh, std::move(acc)};
}

Eigen::SparseMatrix<double> slab_average_jacobian(const OperatorSpec& spec,
                                                  const MeshPtr& mesh, const TimeGrid& grid,
                                                  int k, const Eigen::VectorXd& coeffs) {
    // The t-dependence enters only through scalar coefficients, so averaging
    // the Jacobian equals the Jacobian of the average.
    const GaussRule rule = gauss3();
    const double t0 = grid.left(k), t1 = grid.right(k);
    Eigen::SparseMatrix<double> J(mesh->free_count(), mesh->free_count());
    for (std::size_t q = 0; q < rule.size; ++q) {
        const double t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * rule.nodes[q];
        Eigen::SparseMatrix<double> Jq = apply_jacobian(spec, mesh, t, coeffs);
        J = (q == 0) ? Eigen::SparseMatrix<double>(0.5 * rule.weights[q] * Jq)
                     : Eigen::SparseMatrix<double>(J + 0.5 * rule.weights[q] * Jq);
    }
    return J;
}

// --- loads -----------------------------------------------------------------

DualVector load_vector(const SourceSpec& source, const MeshPtr& mesh, double t) {
    if (!source.f) return {mesh, Eigen::VectorXd::Zero(mesh->free_count())};
    if (mesh->is_desk()) {
        Eigen::VectorXd g(1);
        g[0] = source.f(t, 0.0);
        return {mesh, std::move(g)};
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(mesh->free_count());
    const GaussRule rule = gauss5();
    for (int e = 0; e < mesh->element_count(); ++e) {
        const double xl = mesh->nodes()[static_cast<std::size_t>(e)];
        const double xr = mesh->nodes()[static_cast<std::size_t>(e) + 1];
        const double h = xr - xl;
        for (std::size_t q = 0; q < rule.size; ++q) {
            const double xi = rule.nodes[q];
            const double x = 0.5 * (xl + xr) + 0.5 * h * xi;
            const double w = 0.5 * h * rule.weights[q] * source.f(t, x);
            const double phi[2] = {0.5 * (1.0 - xi), 0.5 * (1.0 + xi)};
            const int il = mesh->free_index(e);
            const int ir = mesh->free_index(e + 1);
            if (il >= 0) b[il] += w * phi[0];
            if (ir >= 0) b[ir] += w * phi[1];
        }
    }
    return {mesh, std::move(b)};
}

DualVector slab_average_load(const SourceSpec& source, const MeshPtr& mesh,
                             const TimeGrid& grid, int k) {
    const GaussRule rule = gauss3();
    const double t0 = grid.left(k), t1 = grid.right(k);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(mesh->free_count());
    for (std::size_t q = 0; q < rule.size; ++q) {
        const double t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * rule.nodes[q];
        acc += 0.5 * rule.weights[q] * load_vector(source, mesh, t).coeffs;
    }
    return {mesh, std::move(acc)};
}

// --- validators ------------------------------------------------------------

HypothesisReport validate_H_A(const OperatorSpec& spec, const MeshPtr& mesh, double T,
                              int samples, std::uint64_t seed) {
    validate_operator_spec(spec, T);
    Rng rng(seed);
    HypothesisReport report;
    report.samples = samples;
    double worst_coercive = std::numeric_limits<double>::infinity();
    double worst_growth = std::numeric_limits<double>::infinity();
    for (int s = 0; s < samples; ++s) {
        const double t = rng.uniform(0.0, T);
        const Eigen::VectorXd v = random_coeffs(rng, mesh->free_count());
        const DiscreteFunction vf{mesh, spec.p, v};
        const double nv = v_norm(vf);
        const double nh = h_norm(vf);
        const DualVector Av = apply(spec, mesh, t, v);
        const double pairing = Av.coeffs.dot(v);
        const double scale = std::max({1.0, std::pow(nv, spec.p), nh * nh});
        worst_coercive = std::min(
            worst_coercive,
            (pairing - spec.alpha * std::pow(nv, spec.p) + spec.beta * nh * nh) / scale);
        const double majorant = (spec.growth_a0 + spec.growth_a1 * nh) *
                                (1.0 + std::pow(nv, spec.p - 1.0));
        const double dn = dual_norm(Av, spec.p);
        worst_growth =
            std::min(worst_growth, (majorant - dn) / std::max(1.0, majorant));
    }
    report.worst_coercivity_margin = worst_coercive;
    report.worst_growth_margin = worst_growth;
    report.pass = worst_coercive >= -1e-9 && worst_growth >= -1e-9;
    return report;
}

HolderReport validate_holder(const OperatorSpec& spec, const MeshPtr& mesh, double T,
                             int samples, std::uint64_t seed) {
    validate_operator_spec(spec, T);
    if (!spec.holder)
        throw std::invalid_argument("validate_holder: operator declares no Hoelder data");
    const HolderData& hd = *spec.holder;
    Rng rng(seed);
    HolderReport report;
    report.samples = samples;
    const double upper = spec.p * (hd.gamma + 1.0) - 1.0;
    report.delta_in_range = hd.delta > 0.0 && hd.delta < upper;
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        double t = rng.uniform(0.0, T);
        double u = rng.uniform(0.0, T);
        if (t == u) continue;
        const Eigen::VectorXd v = random_coeffs(rng, mesh->free_count());
        const double nv = v_norm(mesh, spec.p, v);
        Eigen::VectorXd diff =
            apply(spec, mesh, t, v).coeffs - apply(spec, mesh, u, v).coeffs;
        const double dn = dual_norm(DualVector{mesh, std::move(diff)}, spec.p);
        const double denom = (hd.C1 + hd.C2 * std::pow(nv, hd.delta)) *
                             std::pow(std::abs(t - u), hd.gamma);
        if (denom > 0.0) worst = std::max(worst, dn / denom);
    }
    report.worst_ratio = worst;
    report.pass = report.delta_in_range && worst <= 1.0 + 1e-9;
    return report;
}

} // namespace thetaincl
