#pragma once

#include <array>
#include <cstddef>

namespace thetaincl {

// Gauss-Legendre rules on the reference interval [-1, 1].  The 3-point rule
// (exact through degree 5) is the contractual rule for slab averages in time;
// the 2- and 5-point rules serve spatial element integrals.
struct GaussRule {
    const double* nodes;
    const double* weights;
    std::size_t size;
};

namespace detail {
inline constexpr std::array<double, 2> g2_nodes = {
    -0.57735026918962576450914878050196, 0.57735026918962576450914878050196};
inline constexpr std::array<double, 2> g2_weights = {1.0, 1.0};

inline constexpr std::array<double, 3> g3_nodes = {
    -0.77459666924148337703585307995648, 0.0,
    0.77459666924148337703585307995648};
inline constexpr std::array<double, 3> g3_weights = {
    0.55555555555555555555555555555556, 0.88888888888888888888888888888889,
    0.55555555555555555555555555555556};

inline constexpr std::array<double, 5> g5_nodes = {
    -0.90617984593866399279762687829939, -0.53846931010568309103631442070021,
    0.0, 0.53846931010568309103631442070021,
    0.90617984593866399279762687829939};
inline constexpr std::array<double, 5> g5_weights = {
    0.23692688505618908751426404071992, 0.47862867049936646804129151483564,
    0.56888888888888888888888888888889, 0.47862867049936646804129151483564,
    0.23692688505618908751426404071992};
} // namespace detail

inline GaussRule gauss2() { return {detail::g2_nodes.data(), detail::g2_weights.data(), 2}; }
inline GaussRule gauss3() { return {detail::g3_nodes.data(), detail::g3_weights.data(), 3}; }
inline GaussRule gauss5() { return {detail::g5_nodes.data(), detail::g5_weights.data(), 5}; }

// Integrate f over [a, b] with the given rule.
template <typename F>
double integrate(const GaussRule& rule, double a, double b, F&& f) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.size; ++q)
        acc += rule.weights[q] * f(mid + half * rule.nodes[q]);
    return half * acc;
}

} // namespace thetaincl
