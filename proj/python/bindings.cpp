#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "thetaincl/diagnostics.hpp"
#include "thetaincl/errors.hpp"
#include "thetaincl/interpolants.hpp"
#include "thetaincl/scenario.hpp"
#include "thetaincl/stepper.hpp"
#include "thetaincl/study.hpp"
#include "thetaincl/time_grid.hpp"

namespace py = pybind11;
using namespace thetaincl;

namespace {

py::dict solve_scenario(const std::string& name, double theta, int N,
                        const std::string& grid_kind, double K_target,
                        std::uint64_t seed, int elements) {
    ThetaConfig solver;
    solver.theta = theta;
    validate_theta_config(solver);

    const Scenario sc = get_scenario(name);
    const MeshPtr mesh = build_mesh(sc.mesh, elements);
    const Problem problem = make_problem(sc, mesh);
    const DiscreteFunction u0 = initial_state(sc, mesh);
    GridConfig gc;
    gc.kind = grid_kind;
    gc.N = N;
    gc.K_target = K_target;
    gc.seed = seed;
    const TimeGrid grid = build_grid(sc.T, gc);

    const TrajectorySolution traj = solve_trajectory(solver, problem, grid, u0);
    py::list times, states;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        times.append(grid.points[k]);
        const Eigen::VectorXd full = mesh->full_values(traj.states[k].coeffs);
        py::list row;
        for (Eigen::Index i = 0; i < full.size(); ++i) row.append(full[i]);
        states.append(row);
    }
    double residual_max = 0.0;
    for (const auto& rec : traj.records)
        residual_max = std::max(residual_max, rec.residual);
    const AprioriReport ap = apriori(traj, problem, theta);

    py::dict out;
    out["scenario"] = name;
    out["theta"] = theta;
    out["N"] = grid.slab_count();
    out["t"] = times;
    out["states"] = states;
    out["residual_max"] = residual_max;
    out["lhs_lemma42"] = ap.lhs_lemma42;
    out["data_constant"] = ap.data_constant;
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "theta-scheme solver for parabolic differential inclusions";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<SolverError>(m, "SolverError");
    py::register_exception<ValidationError>(m, "ValidationError");

    m.def("scenario_names", &scenario_names, "Names of the built-in scenarios");

    m.def("solve_scenario", &solve_scenario, py::arg("scenario"), py::arg("theta"),
          py::arg("N"), py::arg("grid_kind") = "uniform", py::arg("K_target") = 2.0,
          py::arg("seed") = 0, py::arg("elements") = 0,
          "Solve a built-in scenario in memory; returns times, nodal states and "
          "summary certificates");

    m.def(
        "run_solve",
        [](const std::string& config_text, const std::string& out_dir) {
            return run_solve(solve_config_from_text(config_text), out_dir);
        },
        py::arg("config_json"), py::arg("out_dir"),
        "Run one persisted solve from a JSON config string; returns the report JSON");

    m.def(
        "run_study",
        [](const std::string& plan_text, const std::string& out_dir, int jobs) {
            return run_study(study_plan_from_text(plan_text), out_dir, jobs);
        },
        py::arg("plan_json"), py::arg("out_dir"), py::arg("jobs") = 1,
        "Run a refinement study from a JSON plan string; returns the study JSON");

    m.def("run_validate", &run_validate, py::arg("scenario"), py::arg("samples") = 300,
          py::arg("seed") = 2026,
          "Validate the structural hypotheses of a scenario; raises ValidationError "
          "on failure");

    m.def("run_diagnose", &run_diagnose, py::arg("trajectory_dir"),
          "Recompute certificates from a persisted trajectory directory");

    m.def(
        "admissible_tau0_for",
        [](const std::string& name, double theta) {
            const Scenario sc = get_scenario(name);
            return admissible_tau0(sc.op, sc.growth ? &*sc.growth : nullptr,
                                   sc.embedding, theta);
        },
        py::arg("scenario"), py::arg("theta"),
        "Admissible step-size bound tau0 for a scenario at the given theta");

    m.def("algebraic_identity_check", &algebraic_identity_check, py::arg("a"),
          py::arg("b"), py::arg("theta"),
          "Residual of the scalar theta-pairing identity");

    m.def(
        "bvq_seminorm",
        [](const std::vector<double>& values, double q) {
            std::vector<Eigen::VectorXd> vs;
            vs.reserve(values.size());
            for (double v : values) {
                Eigen::VectorXd one(1);
                one[0] = v;
                vs.push_back(one);
            }
            return bvq_seminorm(vs, q,
                                [](const Eigen::VectorXd& d) { return std::abs(d[0]); });
        },
        py::arg("values"), py::arg("q"),
        "BV^q seminorm of a scalar slabwise-constant track");

    m.def(
        "observed_order",
        [](const std::vector<double>& errors, const std::vector<double>& taus) {
            const OrderFit fit = observed_order(errors, taus);
            return py::make_tuple(fit.slope, fit.fit_residual);
        },
        py::arg("errors"), py::arg("tau_maxes"),
        "Log-log least-squares order fit; returns (slope, fit_residual)");

    m.def(
        "uniform_grid",
        [](double T, int N) { return build_uniform(T, N).points; },
        py::arg("T"), py::arg("N"), "Uniform time grid points");

    m.def(
        "random_regular_grid",
        [](double T, int N, double K_target, std::uint64_t seed) {
            GridConfig gc;
            gc.kind = "random_regular";
            gc.N = N;
            gc.K_target = K_target;
            gc.seed = seed;
            return build_grid(T, gc).points;
        },
        py::arg("T"), py::arg("N"), py::arg("K_target") = 2.0, py::arg("seed") = 0,
        "Random grid with bounded step ratio; deterministic per seed");

#ifdef VERSION_INFO
    m.attr("__version__") = VERSION_INFO;
#else
    m.attr("__version__") = "dev";
#endif
}
