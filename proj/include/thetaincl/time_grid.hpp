#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace thetaincl {

// Partition 0 = t^0 < t^1 < ... < t^N = T of the time horizon.  Slab k is the
// half-open interval (t^{k-1}, t^k] with length tau[k-1]; points are stored as
// exact running sums of the slab lengths so repeated refinement does not
// accumulate drift between `points` and `taus`.
struct TimeGrid {
    std::vector<double> points; // size N + 1, points[0] == 0
    std::vector<double> taus;   // size N

    int slab_count() const { return static_cast<int>(taus.size()); }
    double horizon() const { return points.back(); }
    // 1-based slab accessors, matching the k = 1..N indexing of the scheme.
    double tau(int k) const { return taus[static_cast<std::size_t>(k - 1)]; }
    double left(int k) const { return points[static_cast<std::size_t>(k - 1)]; }
    double right(int k) const { return points[static_cast<std::size_t>(k)]; }
};

struct GridRegularity {
    double tau_max = 0.0;
    double tau_min = 0.0;
    double K_observed = 1.0;      // tau_max / tau_min
    std::vector<double> r_ratios; // r^k = tau^k / tau^{k-1}, k = 2..N
    double r_max = 1.0;           // max of r_ratios, 1 when there is none
};

struct RatioConditionReport {
    bool pass;
    double bound;  // (theta/(1-theta))^p, +inf at theta = 1
    double r_max;
    double margin; // bound - r_max (may be -inf-free: finite unless theta == 1)
};

struct GridConfig {
    std::string kind = "uniform"; // "uniform" | "random_regular"
    int N = 1;
    double K_target = 1.0;        // slab-length spread bound for random grids
    std::uint64_t seed = 0;
};

TimeGrid build_uniform(double T, int N);

// Random grid with slab lengths proportional to iid weights in [1, K_target],
// rescaled to sum to T.  Adjacent ratios are bounded by K_target by
// construction, and a fixed seed reproduces the grid bit-for-bit.
TimeGrid build_random_regular(double T, int N, double K_target, std::uint64_t seed);

TimeGrid build_grid(double T, const GridConfig& config);

// Grid from explicit partition points (first must be 0, strictly increasing).
TimeGrid grid_from_points(const std::vector<double>& points);

GridRegularity regularity(const TimeGrid& grid);

// Grid-ratio admissibility for the averaged scheme: r_max < (theta/(1-theta))^p,
// with the bound unconstrained at theta = 1.
RatioConditionReport validate_ratio_condition(const TimeGrid& grid, double theta, double p);

// Index k in 1..N with t in (t^{k-1}, t^k]; t = 0 maps to slab 1.
int slab_of(const TimeGrid& grid, double t);

// Doubling refinements grid[0] = base N0, grid[l] = 2^l * N0 slabs.  Random
// families draw level l with seed + l so members are independent but pinned.
std::vector<TimeGrid> build_refinement_family(double T, int N0, int levels,
                                              const GridConfig& config);

// Split every slab into `factor` equal parts.  Parent grid points are
// reproduced up to summation roundoff (exactly for dyadic steps); the final
// point is pinned to the parent horizon.
TimeGrid split_slabs(const TimeGrid& grid, int factor);

} // namespace thetaincl
