#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "thetaincl/errors.hpp"
#include "thetaincl/log.hpp"
#include "thetaincl/scenario.hpp"
#include "thetaincl/study.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitValidation = 4;

int dispatch(const std::function<std::string()>& action) {
    try {
        std::cout << action();
        return kExitOk;
    } catch (const thetaincl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const thetaincl::ValidationError& e) {
        std::cerr << "validation failed: " << e.what() << '\n';
        return kExitValidation;
    } catch (const thetaincl::SolverError& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSolver;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "thetaincl - variable time-step theta-scheme solver for quasilinear "
        "parabolic differential inclusions"};
    app.require_subcommand(1);

    std::string config_path, plan_path, out_dir, scenario_name, trajectory_dir;
    int jobs = 1;

    CLI::App* solve = app.add_subcommand(
        "solve", "Solve one scenario on one time grid and persist the trajectory");
    solve->add_option("--config", config_path, "JSON solve configuration")->required();
    solve->add_option("--out", out_dir, "output directory")->required();

    CLI::App* study = app.add_subcommand(
        "study", "Run a refinement study over thetas and nested time grids");
    study->add_option("--plan", plan_path, "JSON study plan")->required();
    study->add_option("--out", out_dir, "output directory")->required();
    study->add_option("--jobs", jobs, "worker threads (results are merged in a fixed order)")
        ->check(CLI::PositiveNumber);

    CLI::App* validate = app.add_subcommand(
        "validate", "Check the structural hypotheses of a built-in scenario");
    validate->add_option("--scenario", scenario_name, "scenario name")->required();

    CLI::App* diagnose = app.add_subcommand(
        "diagnose", "Recompute certificates and reports from a persisted trajectory");
    diagnose->add_option("--trajectory", trajectory_dir, "directory written by solve/study")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (solve->parsed()) {
        return dispatch([&] {
            thetaincl::log_info("solve: config " + config_path + " -> " + out_dir);
            return thetaincl::run_solve(thetaincl::solve_config_from_file(config_path),
                                        out_dir);
        });
    }
    if (study->parsed()) {
        return dispatch([&] {
            thetaincl::log_info("study: plan " + plan_path + " -> " + out_dir);
            return thetaincl::run_study(thetaincl::study_plan_from_file(plan_path),
                                        out_dir, jobs);
        });
    }
    if (validate->parsed()) {
        return dispatch([&] { return thetaincl::run_validate(scenario_name); });
    }
    if (diagnose->parsed()) {
        return dispatch([&] { return thetaincl::run_diagnose(trajectory_dir); });
    }
    return kExitConfig; // unreachable given require_subcommand(1)
}
