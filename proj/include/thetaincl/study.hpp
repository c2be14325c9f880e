#pragma once

#include <string>
#include <vector>

#include "thetaincl/scenario.hpp"

namespace thetaincl {

// Resolved single-run configuration.  theta travels inside `solver`.
struct SolveConfig {
    std::string scenario = "heat";
    ThetaConfig solver;
    GridConfig grid;
    int mesh_elements = 0;    // 0: keep the scenario default
    double eps_offset = -1.0; // < 0: keep the scenario default
};

// Refinement study over theta values and a doubling grid family.
struct StudyPlan {
    std::string scenario = "heat";
    std::vector<double> thetas = {1.0};
    GridConfig family;  // family.N is the base slab count N0
    int levels = 4;     // N0, 2 N0, ..., 2^{levels-1} N0 (strictly increasing)
    int mesh_elements = 0;
    ThetaConfig solver; // theta replaced per family member
    double eps_offset = -1.0;
};

// JSON loaders; throw ConfigError with key / parse context.
SolveConfig solve_config_from_text(const std::string& text);
SolveConfig solve_config_from_file(const std::string& path);
StudyPlan study_plan_from_text(const std::string& text);
StudyPlan study_plan_from_file(const std::string& path);

// Solve one configuration and persist the trajectory alongside its report:
// states.csv, mids.csv, selections.csv, records.csv, run.json, report.json.
// Returns the serialized report.
std::string run_solve(const SolveConfig& config, const std::string& out_dir);

// Execute the study plan (optionally with `jobs` worker threads), writing one
// run directory per (theta, grid) plus summary.csv and study.json at the root.
// Returns the serialized study report.
std::string run_study(const StudyPlan& plan, const std::string& out_dir, int jobs = 1);

// Sampling validation of a registered scenario; returns a human-readable
// summary and throws ValidationError when any hypothesis fails.
std::string run_validate(const std::string& scenario_name, int samples = 300,
                         std::uint64_t seed = 2026);

// Re-read a persisted run directory, recompute every certificate and report
// entry from the stored trajectory, and compare against the stored report.
// Writes diagnose.json into the directory and returns it serialized; throws
// ValidationError when recomputation disagrees or a certificate fails.
std::string run_diagnose(const std::string& trajectory_dir);

} // namespace thetaincl
