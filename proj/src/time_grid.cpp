#include "thetaincl/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "thetaincl/rng.hpp"

namespace thetaincl {

namespace {

TimeGrid from_taus(std::vector<double> taus) {
    TimeGrid grid;
    grid.points.resize(taus.size() + 1);
    grid.points[0] = 0.0;
    for (std::size_t k = 0; k < taus.size(); ++k)
        grid.points[k + 1] = grid.points[k] + taus[k];
    grid.taus = std::move(taus);
    return grid;
}

void check_shape(double T, int N) {
    if (!(T > 0.0)) throw std::invalid_argument("time grid: horizon must be positive");
    if (N < 1) throw std::invalid_argument("time grid: need at least one slab");
}

} // namespace

TimeGrid build_uniform(double T, int N) {
    check_shape(T, N);
    std::vector<double> taus(static_cast<std::size_t>(N), T / N);
    TimeGrid grid = from_taus(std::move(taus));
    // Pin the endpoint: the running sum can drift by an ulp for N not a power
    // of two, and t^N == T is part of the grid contract.
    grid.taus.back() += T - grid.points.back();
    grid.points.back() = T;
    return grid;
}

TimeGrid build_random_regular(double T, int N, double K_target, std::uint64_t seed) {
    check_shape(T, N);
    if (!(K_target >= 1.0))
        throw std::invalid_argument("time grid: K_target must be >= 1");
    Rng rng(seed);
    std::vector<double> weights(static_cast<std::size_t>(N));
    double total = 0.0;
    for (double& w : weights) {
        w = rng.uniform(1.0, K_target);
        total += w;
    }
    std::vector<double> taus(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k)
        taus[k] = T * weights[k] / total;
    TimeGrid grid = from_taus(std::move(taus));
    grid.taus.back() += T - grid.points.back();
    grid.points.back() = T;
    return grid;
}

TimeGrid build_grid(double T, const GridConfig& config) {
    if (config.kind == "uniform") return build_uniform(T, config.N);
    if (config.kind == "random_regular")
        return build_random_regular(T, config.N, config.K_target, config.seed);
    throw std::invalid_argument("time grid: unknown kind '" + config.kind + "'");
}

TimeGrid grid_from_points(const std::vector<double>& points) {
    if (points.size() < 2 || points.front() != 0.0)
        throw std::invalid_argument("time grid: points must start at 0 with >= 1 slab");
    std::vector<double> taus(points.size() - 1);
    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
        taus[k] = points[k + 1] - points[k];
        if (!(taus[k] > 0.0))
            throw std::invalid_argument("time grid: points must be strictly increasing");
    }
    TimeGrid grid = from_taus(std::move(taus));
    grid.points = points; // keep caller's representation exactly
    return grid;
}

GridRegularity regularity(const TimeGrid& grid) {
    GridRegularity reg;
    reg.tau_max = 0.0;
    reg.tau_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid.taus.size(); ++k) {
        reg.tau_max = std::max(reg.tau_max, grid.taus[k]);
        reg.tau_min = std::min(reg.tau_min, grid.taus[k]);
        if (k + 1 < grid.taus.size())
            reg.r_ratios.push_back(grid.taus[k + 1] / grid.taus[k]);
    }
    reg.K_observed = reg.tau_max / reg.tau_min;
    reg.r_max = 1.0; // single-slab convention: no interior ratio
    if (!reg.r_ratios.empty())
        reg.r_max = *std::max_element(reg.r_ratios.begin(), reg.r_ratios.end());
    return reg;
}

RatioConditionReport validate_ratio_condition(const TimeGrid& grid, double theta, double p) {
    if (!(theta > 0.0 && theta <= 1.0))
        throw std::invalid_argument("ratio condition: theta must lie in (0, 1]");
    if (!(p > 1.0)) throw std::invalid_argument("ratio condition: p must exceed 1");
    RatioConditionReport report;
    report.r_max = regularity(grid).r_max;
    if (theta == 1.0) {
        // Implicit Euler: the spread constant may be arbitrary.
        report.bound = std::numeric_limits<double>::infinity();
        report.pass = true;
        report.margin = std::numeric_limits<double>::infinity();
        return report;
    }
    report.bound = std::pow(theta / (1.0 - theta), p);
    report.pass = report.r_max < report.bound;
    report.margin = report.bound - report.r_max;
    return report;
}

int slab_of(const TimeGrid& grid, double t) {
    if (!(t >= 0.0) || t > grid.horizon())
        throw std::invalid_argument("slab_of: t outside [0, T]");
    if (t <= grid.points[1]) return 1; // covers the t = 0 convention
    // First point >= t gives the slab's right endpoint.
    auto it = std::lower_bound(grid.points.begin(), grid.points.end(), t);
    return static_cast<int>(it - grid.points.begin());
}

std::vector<TimeGrid> build_refinement_family(double T, int N0, int levels,
                                              const GridConfig& config) {
    if (levels < 1) throw std::invalid_argument("refinement family: need >= 1 level");
    std::vector<TimeGrid> family;
    family.reserve(static_cast<std::size_t>(levels));
    int N = N0;
    for (int l = 0; l < levels; ++l, N *= 2) {
        GridConfig level_config = config;
        level_config.N = N;
        level_config.seed = config.seed + static_cast<std::uint64_t>(l);
        family.push_back(build_grid(T, level_config));
    }
    return family;
}

TimeGrid split_slabs(const TimeGrid& grid, int factor) {
    if (factor < 1) throw std::invalid_argument("split_slabs: factor must be >= 1");
    std::vector<double> taus;
    taus.reserve(grid.taus.size() * static_cast<std::size_t>(factor));
    for (double tau : grid.taus)
        for (int j = 0; j < factor; ++j) taus.push_back(tau / factor);
    TimeGrid fine = from_taus(std::move(taus));
    fine.taus.back() += grid.horizon() - fine.points.back();
    fine.points.back() = grid.horizon();
    return fine;
}

} // namespace thetaincl
