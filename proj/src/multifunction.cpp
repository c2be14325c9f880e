#include "thetaincl/multifunction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "thetaincl/rng.hpp"

namespace thetaincl {

namespace {

// Index of the largest jump strictly below s, or -1.
int cell_of(const std::vector<double>& jumps, double s) {
    int idx = -1;
    for (std::size_t j = 0; j < jumps.size(); ++j)
        if (jumps[j] < s) idx = static_cast<int>(j);
    return idx;
}

} // namespace

// --- branch registry -------------------------------------------------------

double FilledGraph::base(double s) const {
    if (family == "heaviside") {
        double v = 0.0;
        for (double a : jumps)
            if (s > a) v += jump_size;
        return v;
    }
    if (family == "sawtooth") {
        const int j = cell_of(jumps, s);
        if (j >= 0) return s - jumps[static_cast<std::size_t>(j)];
        // Synthetic reference one gap below the first jump keeps the leftmost
        // branch bounded near the jump like every interior branch.
        const double gap = jumps.size() >= 2 ? jumps[1] - jumps[0] : 1.0;
        return s - (jumps.front() - gap);
    }
    if (family == "cubic_jump")
        return s * s * s + (s > jumps.front() ? jump_size : 0.0);
    throw std::invalid_argument("filled graph: unknown family '" + family + "'");
}

double FilledGraph::base_deriv(double s) const {
    if (family == "heaviside") return 0.0;
    if (family == "sawtooth") return 1.0;
    if (family == "cubic_jump") return 3.0 * s * s;
    throw std::invalid_argument("filled graph: unknown family '" + family + "'");
}

double FilledGraph::left_limit(std::size_t j) const {
    const double a = jumps[j];
    if (family == "heaviside") return jump_size * static_cast<double>(j);
    if (family == "sawtooth") {
        if (j >= 1) return a - jumps[j - 1];
        const double gap = jumps.size() >= 2 ? jumps[1] - jumps[0] : 1.0;
        return gap;
    }
    if (family == "cubic_jump") return a * a * a;
    throw std::invalid_argument("filled graph: unknown family '" + family + "'");
}

double FilledGraph::right_limit(std::size_t j) const {
    const double a = jumps[j];
    if (family == "heaviside") return jump_size * static_cast<double>(j + 1);
    if (family == "sawtooth") return 0.0;
    if (family == "cubic_jump") return a * a * a + jump_size;
    throw std::invalid_argument("filled graph: unknown family '" + family + "'");
}

double FilledGraph::min_gap() const {
    if (jumps.size() < 2) return std::numeric_limits<double>::infinity();
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j + 1 < jumps.size(); ++j)
        gap = std::min(gap, jumps[j + 1] - jumps[j]);
    return gap;
}

FilledGraph make_filled_graph(const std::string& family, std::vector<double> jumps,
                              const TimeProfile& modulation, double jump_size) {
    if (family != "heaviside" && family != "sawtooth" && family != "cubic_jump")
        throw std::invalid_argument("filled graph: unknown family '" + family + "'");
    if (jumps.empty())
        throw std::invalid_argument("filled graph: at least one jump point required");
    if (!std::is_sorted(jumps.begin(), jumps.end()))
        throw std::invalid_argument("filled graph: jumps must be sorted");
    for (std::size_t j = 0; j + 1 < jumps.size(); ++j)
        if (!(jumps[j] < jumps[j + 1]))
            throw std::invalid_argument("filled graph: jumps must be strictly increasing");
    if (family == "cubic_jump" && jumps.size() != 1)
        throw std::invalid_argument("filled graph: cubic_jump takes exactly one jump");
    if (!(jump_size > 0.0))
        throw std::invalid_argument("filled graph: jump size must be positive");
    FilledGraph graph;
    graph.family = family;
    graph.jumps = std::move(jumps);
    graph.jump_size = jump_size;
    graph.modulation = modulation;
    return graph;
}

TimeProfile make_modulation(const std::string& name) {
    if (name == "const") return make_profile("const", 1.0, 0.0, 1.0);
    if (name == "t") return make_profile("linear", 0.0, 1.0, 1.0);
    if (name == "1+cos") return make_profile("cos", 1.0, 1.0, 1.0);
    throw std::invalid_argument("modulation: unknown profile '" + name + "'");
}

// --- intervals -------------------------------------------------------------

Interval base_interval(const FilledGraph& graph, double s) {
    for (std::size_t j = 0; j < graph.jumps.size(); ++j) {
        if (s == graph.jumps[j]) {
            const double a = graph.left_limit(j), b = graph.right_limit(j);
            return {std::min(a, b), std::max(a, b)};
        }
    }
    const double v = graph.base(s);
    return {v, v};
}

Interval base_hull(const FilledGraph& graph, double s, double halfwidth) {
    if (halfwidth < 0.0)
        throw std::invalid_argument("interval_hull: halfwidth must be nonnegative");
    if (halfwidth == 0.0) return base_interval(graph, s);
    const double wl = s - halfwidth, wr = s + halfwidth;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    auto take = [&](double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    };
    // Window endpoints: branch values, or both limits when an endpoint sits
    // exactly on a jump.  Registry branches are monotone between jumps, so the
    // hull is determined by these candidates plus the one-sided limits at
    // interior jumps.
    for (double endpoint : {wl, wr}) {
        bool at_jump = false;
        for (std::size_t j = 0; j < graph.jumps.size(); ++j) {
            if (endpoint == graph.jumps[j]) {
                take(graph.left_limit(j));
                take(graph.right_limit(j));
                at_jump = true;
                break;
            }
        }
        if (!at_jump) take(graph.base(endpoint));
    }
    for (std::size_t j = 0; j < graph.jumps.size(); ++j) {
        if (graph.jumps[j] > wl && graph.jumps[j] < wr) {
            take(graph.left_limit(j));
            take(graph.right_limit(j));
        }
    }
    return {lo, hi};
}

namespace {

double modulation_at(const FilledGraph& graph, double t) {
    const double m = graph.modulation.value(t);
    if (m < 0.0) throw std::invalid_argument("filled graph: modulation went negative");
    return m;
}

} // namespace

Interval interval_at(const FilledGraph& graph, double t, double s) {
    const double m = modulation_at(graph, t);
    const Interval base = base_interval(graph, s);
    return {m * base.lo, m * base.hi};
}

Interval interval_hull(const FilledGraph& graph, double t, double s, double halfwidth) {
    const double m = modulation_at(graph, t);
    const Interval base = base_hull(graph, s, halfwidth);
    return {m * base.lo, m * base.hi};
}

// --- regularization --------------------------------------------------------

RegularizedSelection regularize(const FilledGraph& graph, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("regularize: eps must be positive");
    if (!(2.0 * eps < graph.min_gap()))
        throw std::invalid_argument(
            "regularize: eps must stay below half the minimal jump spacing");
    return {graph, eps};
}

double RegularizedSelection::base_eps(double s) const {
    for (std::size_t j = 0; j < graph.jumps.size(); ++j) {
        const double a = graph.jumps[j];
        if (s >= a - eps && s <= a + eps) {
            const double fl = graph.base(a - eps);
            const double fr = graph.base(a + eps);
            return fl + (fr - fl) * (s - (a - eps)) / (2.0 * eps);
        }
    }
    return graph.base(s);
}

double RegularizedSelection::base_eps_deriv(double s) const {
    for (std::size_t j = 0; j < graph.jumps.size(); ++j) {
        const double a = graph.jumps[j];
        if (s >= a - eps && s <= a + eps) {
            const double fl = graph.base(a - eps);
            const double fr = graph.base(a + eps);
            return (fr - fl) / (2.0 * eps);
        }
    }
    return graph.base_deriv(s);
}

// --- membership ------------------------------------------------------------

MembershipReport slab_average_membership(const FilledGraph& graph, const TimeGrid& grid,
                                         int k, const Eigen::VectorXd& u_values,
                                         const Eigen::VectorXd& xi_values, double tol,
                                         double halfwidth) {
    if (u_values.size() != xi_values.size())
        throw std::invalid_argument("membership: u and xi sizes differ");
    const double mbar = graph.modulation.mean(grid.left(k), grid.right(k));
    if (mbar < 0.0) throw std::invalid_argument("membership: negative modulation mean");
    MembershipReport report;
    report.worst_distance = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < u_values.size(); ++i) {
        // Scale the unscaled hull by the exact modulation mean; mbar >= 0
        // preserves endpoint ordering.
        const Interval base = base_hull(graph, u_values[i], halfwidth);
        const Interval avg{mbar * base.lo, mbar * base.hi};
        report.worst_distance =
            std::max(report.worst_distance, avg.signed_distance(xi_values[i]));
    }
    report.pass = report.worst_distance <= tol;
    return report;
}

// --- growth validators -----------------------------------------------------

void validate_growth_params(const GrowthParams& params) {
    if (params.case_tag != "A" && params.case_tag != "B")
        throw std::invalid_argument("growth params: case must be A or B");
    if (params.case_tag == "A") {
        if (params.c1 < 0.0 || params.d1 < 0.0)
            throw std::invalid_argument("growth params: c1, d1 must be nonnegative");
    } else {
        if (params.c2 < 0.0 || params.d2 < 0.0)
            throw std::invalid_argument("growth params: c2, d2 must be nonnegative");
        if (!(params.lambda > 0.0))
            throw std::invalid_argument("growth params: lambda must be positive");
    }
}

GrowthReport validate_growth(const FilledGraph& graph, const GrowthParams& params,
                             const GrowthContext& ctx, int samples, std::uint64_t seed) {
    validate_growth_params(params);
    validate_embedding(ctx.embedding, ctx.mesh);
    Rng rng(seed);
    GrowthReport report;
    report.samples = samples;
    report.r = params.r(ctx.p);
    const bool case_b = params.case_tag == "B";
    report.worst_growth_margin = std::numeric_limits<double>::infinity();
    report.worst_coercivity_margin = std::numeric_limits<double>::infinity();
    report.lambda_margin = std::numeric_limits<double>::infinity();
    if (case_b) {
        const double iota = embedding_norm(ctx.embedding, ctx.mesh, ctx.p);
        report.lambda_margin = ctx.alpha - params.lambda * std::pow(iota, ctx.p);
    }

    const int dim = ctx.embedding.mode == EmbeddingMode::boundary ? 2 : ctx.mesh->free_count();
    for (int s = 0; s < samples; ++s) {
        const double t = rng.uniform(0.0, ctx.T);
        const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
        Eigen::VectorXd u(dim);
        for (int i = 0; i < dim; ++i) u[i] = scale * rng.normal();
        UElement ue{u};
        const double nu = u_norm(ctx.embedding, ctx.mesh, ue);

        Eigen::VectorXd lo(dim), hi(dim), extreme(dim);
        for (int i = 0; i < dim; ++i) {
            const Interval iv = interval_at(graph, t, u[i]);
            lo[i] = iv.lo;
            hi[i] = iv.hi;
            extreme[i] = std::abs(iv.lo) >= std::abs(iv.hi) ? iv.lo : iv.hi;
        }
        // The U-Gram has nonnegative entries, so the componentwise max-abs
        // vertex maximizes the norm over the interval box.
        const double nxi = u_norm(ctx.embedding, ctx.mesh, UElement{extreme});
        const double majorant = case_b
                                    ? params.c2 + params.d2 * std::pow(nu, ctx.p - 1.0)
                                    : params.c1 + params.d1 * nu;
        report.worst_growth_margin =
            std::min(report.worst_growth_margin,
                     (majorant - nxi) / std::max(1.0, majorant));

        if (case_b) {
            // <xi, u>_U is linear in xi: the minimizing selection picks the
            // interval end opposing the sign of the U-Riesz weight of u.
            Eigen::VectorXd weight =
                ctx.embedding.mode == EmbeddingMode::boundary ? u : ctx.mesh->mass_apply(u);
            Eigen::VectorXd minimizer(dim);
            for (int i = 0; i < dim; ++i) minimizer[i] = weight[i] >= 0.0 ? lo[i] : hi[i];
            const double pairing = minimizer.dot(weight);
            const double floor = params.g.value(t) - params.lambda * std::pow(nu, ctx.p);
            report.worst_coercivity_margin =
                std::min(report.worst_coercivity_margin,
                         (pairing - floor) /
                             std::max({1.0, std::abs(floor),
                                       params.lambda * std::pow(nu, ctx.p)}));
        }
    }
    // The lambda condition is strict; demand clearance above roundoff so that
    // lambda = alpha / ||iota||^p fails regardless of how the product rounds.
    report.pass = report.worst_growth_margin >= -1e-9 &&
                  (!case_b || (report.worst_coercivity_margin >= -1e-9 &&
                               report.lambda_margin > 1e-12 * std::max(1.0, ctx.alpha)));
    return report;
}

} // namespace thetaincl
