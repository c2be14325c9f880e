#include "thetaincl/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "thetaincl/errors.hpp"
#include "thetaincl/interpolants.hpp"
#include "thetaincl/log.hpp"

namespace thetaincl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// --- formatting ------------------------------------------------------------

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

// --- strict JSON access ----------------------------------------------------

json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json_text(ss.str(), path);
}

void require_object(const json& j, const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T get_req(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ConfigError(ctx + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(ctx + ": bad value for '" + std::string(key) + "': " + e.what());
    }
}

template <typename T>
T get_opt(const json& j, const char* key, T fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(ctx + ": bad value for '" + std::string(key) + "': " + e.what());
    }
}

GridConfig parse_grid_config(const json& j, const char* count_key, const std::string& ctx) {
    require_object(j, ctx);
    reject_unknown_keys(j, {"kind", count_key, "K_target", "seed"}, ctx);
    GridConfig grid;
    grid.kind = get_opt<std::string>(j, "kind", "uniform", ctx);
    if (grid.kind != "uniform" && grid.kind != "random_regular")
        throw ConfigError(ctx + ": kind must be 'uniform' or 'random_regular'");
    grid.N = get_req<int>(j, count_key, ctx);
    if (grid.N < 1) throw ConfigError(ctx + ": slab count must be >= 1");
    grid.K_target = get_opt<double>(j, "K_target", 2.0, ctx);
    if (!(grid.K_target >= 1.0)) throw ConfigError(ctx + ": K_target must be >= 1");
    grid.seed = get_opt<std::uint64_t>(j, "seed", 0, ctx);
    return grid;
}

void parse_solver_block(const json& j, ThetaConfig& solver, const std::string& ctx) {
    require_object(j, ctx);
    reject_unknown_keys(j,
                        {"newton_tol", "newton_max_iter", "damping_floor", "eps_min",
                         "c_eps", "picard_fallback", "picard_max_iter",
                         "strict_admissibility"},
                        ctx);
    solver.newton_tol = get_opt<double>(j, "newton_tol", solver.newton_tol, ctx);
    solver.newton_max_iter = get_opt<int>(j, "newton_max_iter", solver.newton_max_iter, ctx);
    solver.damping_floor = get_opt<double>(j, "damping_floor", solver.damping_floor, ctx);
    solver.eps_min = get_opt<double>(j, "eps_min", solver.eps_min, ctx);
    solver.c_eps = get_opt<double>(j, "c_eps", solver.c_eps, ctx);
    solver.picard_fallback = get_opt<bool>(j, "picard_fallback", solver.picard_fallback, ctx);
    solver.picard_max_iter = get_opt<int>(j, "picard_max_iter", solver.picard_max_iter, ctx);
    solver.strict_admissibility =
        get_opt<bool>(j, "strict_admissibility", solver.strict_admissibility, ctx);
}

void check_theta_config(const ThetaConfig& solver) {
    try {
        validate_theta_config(solver);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

int parse_mesh_elements(const json& j, const std::string& ctx) {
    require_object(j, ctx);
    reject_unknown_keys(j, {"elements"}, ctx);
    const int elements = get_req<int>(j, "elements", ctx);
    if (elements < 1) throw ConfigError(ctx + ": elements must be >= 1");
    return elements;
}

SolveConfig solve_config_from_json(const json& j) {
    const std::string ctx = "solve config";
    require_object(j, ctx);
    reject_unknown_keys(j, {"scenario", "theta", "grid", "mesh", "solver", "epsilon_offset"},
                        ctx);
    SolveConfig cfg;
    cfg.scenario = get_req<std::string>(j, "scenario", ctx);
    if (!is_scenario(cfg.scenario))
        throw ConfigError(ctx + ": unknown scenario '" + cfg.scenario + "'");
    cfg.solver.theta = get_req<double>(j, "theta", ctx);
    cfg.grid = parse_grid_config(j.at("grid"), "N", ctx + ".grid");
    if (j.contains("mesh")) cfg.mesh_elements = parse_mesh_elements(j.at("mesh"), ctx + ".mesh");
    if (j.contains("solver")) parse_solver_block(j.at("solver"), cfg.solver, ctx + ".solver");
    cfg.eps_offset = get_opt<double>(j, "epsilon_offset", -1.0, ctx);
    if (j.contains("epsilon_offset") && !(cfg.eps_offset >= 0.0))
        throw ConfigError(ctx + ": epsilon_offset must be >= 0");
    check_theta_config(cfg.solver);
    return cfg;
}

StudyPlan study_plan_from_json(const json& j) {
    const std::string ctx = "study plan";
    require_object(j, ctx);
    reject_unknown_keys(
        j, {"scenario", "thetas", "family", "levels", "mesh", "solver", "epsilon_offset"},
        ctx);
    StudyPlan plan;
    plan.scenario = get_req<std::string>(j, "scenario", ctx);
    if (!is_scenario(plan.scenario))
        throw ConfigError(ctx + ": unknown scenario '" + plan.scenario + "'");
    plan.thetas = get_req<std::vector<double>>(j, "thetas", ctx);
    if (plan.thetas.empty()) throw ConfigError(ctx + ": thetas must be non-empty");
    if (!j.contains("family")) throw ConfigError(ctx + ": missing key 'family'");
    plan.family = parse_grid_config(j.at("family"), "N0", ctx + ".family");
    plan.levels = get_opt<int>(j, "levels", 4, ctx);
    if (plan.levels < 1) throw ConfigError(ctx + ": levels must be >= 1");
    if (j.contains("mesh"))
        plan.mesh_elements = parse_mesh_elements(j.at("mesh"), ctx + ".mesh");
    if (j.contains("solver")) parse_solver_block(j.at("solver"), plan.solver, ctx + ".solver");
    plan.eps_offset = get_opt<double>(j, "epsilon_offset", -1.0, ctx);
    if (j.contains("epsilon_offset") && !(plan.eps_offset >= 0.0))
        throw ConfigError(ctx + ": epsilon_offset must be >= 0");
    for (double theta : plan.thetas) {
        ThetaConfig probe = plan.solver;
        probe.theta = theta;
        check_theta_config(probe);
    }
    return plan;
}

// --- CSV -------------------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SolverError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw SolverError("write failed for '" + path.string() + "'");
}

std::string csv_join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    line += '\n';
    return line;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_csv_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            table.header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& cell : cells) row.push_back(std::strtod(cell.c_str(), nullptr));
        table.rows.push_back(std::move(row));
    }
    return table;
}

// --- run artifacts ---------------------------------------------------------

// The U-space coordinate count used for the selections table.
int u_dimension(const Problem& problem) {
    if (problem.embedding.mode == EmbeddingMode::boundary) return 2;
    return problem.mesh->free_count();
}

struct RunArtifacts {
    TrajectorySolution traj;
    AprioriReport ap;
    GridRegularity reg;
    double err_pointwise = kNaN;
    double err_l2th = kNaN;
    double err_l2tv = kNaN;
    double initial_growth = 0.0;
    double residual_max = 0.0;
    double clamp_max = 0.0;
    double membership_worst = -kInf;
    bool membership_pass = true;
    double tau0 = kInf;
    int warned_slabs = 0;
    double bbb_residual = 0.0;
    double algebraic_residual = 0.0;
    RatioConditionReport ratio;
    json report;
};

json json_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

json apriori_to_json(const AprioriReport& ap) {
    return json{{"max_h_sq", ap.max_h_sq},
                {"sum_v_p", ap.sum_v_p},
                {"increment_sum", ap.increment_sum},
                {"lhs_lemma42", ap.lhs_lemma42},
                {"data_constant", ap.data_constant}};
}

json lemma43_to_json(const AprioriReport& ap) {
    return json{{"sum_ak_q", ap.sum_ak_q},
                {"sum_xik_q", ap.sum_xik_q},
                {"sum_rate_q", ap.sum_rate_q}};
}

RunArtifacts execute_run(const Scenario& sc, const Problem& problem,
                         const DiscreteFunction& u0, const TimeGrid& grid,
                         const ThetaConfig& solver, double eps_offset,
                         const PiecewiseLinearTrack* reference_hat,
                         json reference_meta) {
    RunArtifacts art;
    art.traj = solve_trajectory(solver, problem, grid, u0);
    art.ap = apriori(art.traj, problem, solver.theta);
    art.reg = regularity(grid);
    art.ratio = validate_ratio_condition(grid, solver.theta, problem.op.p);
    art.tau0 = admissible_tau0(problem.op, problem.growth ? &*problem.growth : nullptr,
                               problem.embedding, solver.theta);
    art.initial_growth = initial_growth_value(u0, grid);

    const PiecewiseLinearTrack hat = hat_track(art.traj);
    const PiecewiseConstantTrack bar = bar_track(art.traj);
    const BbbResult bbb = bbb_identity(hat, bar, problem.mesh, solver.theta);
    art.bbb_residual = bbb.residual;

    for (int k = 1; k <= grid.slab_count(); ++k) {
        const double a = h_norm(art.traj.states[static_cast<std::size_t>(k)]);
        const double b = h_norm(art.traj.states[static_cast<std::size_t>(k - 1)]);
        art.algebraic_residual =
            std::max(art.algebraic_residual, algebraic_identity_check(a, b, solver.theta));
    }

    for (const auto& rec : art.traj.records) {
        art.residual_max = std::max(art.residual_max, rec.residual);
        art.clamp_max = std::max(art.clamp_max, rec.clamp_distance);
        if (rec.admissibility_warned) ++art.warned_slabs;
    }

    if (problem.graph) {
        for (int k = 1; k <= grid.slab_count(); ++k) {
            const auto& rec = art.traj.records[static_cast<std::size_t>(k - 1)];
            const auto& w = art.traj.mids[static_cast<std::size_t>(k - 1)];
            const UElement trace = iota_apply(problem.embedding, w);
            const MembershipReport mem = slab_average_membership(
                *problem.graph, grid, k, trace.values,
                art.traj.selections[static_cast<std::size_t>(k - 1)].values,
                rec.eps + 1e-9, rec.eps);
            art.membership_worst = std::max(art.membership_worst, mem.worst_distance);
            art.membership_pass = art.membership_pass && mem.pass;
        }
    }

    const std::vector<double> times = check_times(grid, std::max(eps_offset, 0.0));
    json errors = json::object();
    if (sc.reference.kind == ReferenceSpec::Kind::exact) {
        art.err_pointwise =
            pointwise_h_error_exact(hat, problem.mesh, sc.reference.exact, times);
        art.err_l2th = l2th_error_exact(hat, problem.mesh, sc.reference.exact);
        if (problem.op.p == 2.0 && sc.reference.exact.dx)
            art.err_l2tv = l2tv_error_bar_exact(bar, problem.mesh, sc.reference.exact);
    } else if (reference_hat != nullptr) {
        art.err_pointwise = pointwise_h_error_track(hat, problem.mesh, *reference_hat, times);
        art.err_l2th = l2th_error_track(hat, problem.mesh, *reference_hat);
        if (problem.op.p == 2.0)
            art.err_l2tv = l2tv_error_bar_track(bar, problem.mesh, *reference_hat);
    }
    if (std::isfinite(art.err_pointwise)) errors["pointwise_h"] = art.err_pointwise;
    if (std::isfinite(art.err_l2th)) errors["l2th"] = art.err_l2th;
    if (std::isfinite(art.err_l2tv)) errors["l2tv"] = art.err_l2tv;
    errors["initial_growth"] = art.initial_growth;

    json checks;
    checks["bbb_residual"] = art.bbb_residual;
    checks["algebraic_residual"] = art.algebraic_residual;
    checks["ratio_condition"] = json{{"pass", art.ratio.pass},
                                     {"bound", json_or_null(art.ratio.bound)},
                                     {"r_max", art.ratio.r_max}};
    checks["admissibility"] = json{{"pass", art.warned_slabs == 0},
                                   {"tau0", json_or_null(art.tau0)},
                                   {"tau_max", art.reg.tau_max},
                                   {"warned_slabs", art.warned_slabs}};
    checks["selection"] = json{{"residual_max", art.residual_max},
                               {"clamp_max", art.clamp_max},
                               {"membership_pass", art.membership_pass}};

    art.report = json{{"scenario", sc.name},
                      {"theta", solver.theta},
                      {"grid",
                       json{{"N", grid.slab_count()},
                            {"K", art.reg.K_observed},
                            {"r_max", art.reg.r_max},
                            {"tau_max", art.reg.tau_max}}},
                      {"apriori", apriori_to_json(art.ap)},
                      {"lemma43", lemma43_to_json(art.ap)},
                      {"errors", errors},
                      {"orders", json::object()},
                      {"checks", checks}};
    if (!reference_meta.is_null()) art.report["reference"] = std::move(reference_meta);
    return art;
}

// --- persistence -----------------------------------------------------------

std::string state_csv(const Problem& problem, const TimeGrid& grid,
                      const std::vector<DiscreteFunction>& states, bool mids) {
    const int nodes = problem.mesh->node_count();
    std::vector<std::string> header;
    header.push_back("t");
    const char* prefix = mids ? "w" : "u";
    for (int i = 0; i < nodes; ++i) header.push_back(prefix + std::to_string(i));
    std::string text = csv_join(header);
    for (std::size_t row = 0; row < states.size(); ++row) {
        const double t = mids ? grid.right(static_cast<int>(row) + 1)
                              : grid.points[row];
        std::vector<std::string> cells;
        cells.push_back(fmt(t));
        const Eigen::VectorXd full = problem.mesh->full_values(states[row].coeffs);
        for (int i = 0; i < full.size(); ++i) cells.push_back(fmt(full[i]));
        text += csv_join(cells);
    }
    return text;
}

std::string selections_csv(const Problem& problem, const TrajectorySolution& traj) {
    const int dim = u_dimension(problem);
    std::vector<std::string> header;
    header.push_back("t");
    for (int i = 0; i < dim; ++i) header.push_back("xi" + std::to_string(i));
    std::string text = csv_join(header);
    for (int k = 1; k <= traj.grid.slab_count(); ++k) {
        std::vector<std::string> cells;
        cells.push_back(fmt(traj.grid.right(k)));
        const auto& xi = traj.selections[static_cast<std::size_t>(k - 1)].values;
        for (int i = 0; i < dim; ++i)
            cells.push_back(fmt(i < xi.size() ? xi[i] : 0.0));
        text += csv_join(cells);
    }
    return text;
}

std::string records_csv(const TrajectorySolution& traj) {
    std::string text =
        "k,tau,eps,residual,clamp_distance,tau0,newton_iterations,picard_iterations,"
        "used_picard,admissibility_warned\n";
    for (const auto& rec : traj.records) {
        std::vector<std::string> cells;
        cells.push_back(std::to_string(rec.k));
        cells.push_back(fmt(rec.tau));
        cells.push_back(fmt(rec.eps));
        cells.push_back(fmt(rec.residual));
        cells.push_back(fmt(rec.clamp_distance));
        cells.push_back(fmt(rec.tau0));
        cells.push_back(std::to_string(rec.newton_iterations));
        cells.push_back(std::to_string(rec.picard_iterations));
        cells.push_back(rec.used_picard ? "1" : "0");
        cells.push_back(rec.admissibility_warned ? "1" : "0");
        text += csv_join(cells);
    }
    return text;
}

json run_manifest(const Scenario& sc, const SolveConfig& cfg, const Problem& problem,
                  const TimeGrid& grid, double eps_offset) {
    json grid_json{{"kind", cfg.grid.kind},
                   {"N", grid.slab_count()},
                   {"K_target", cfg.grid.K_target},
                   {"seed", cfg.grid.seed},
                   {"points", grid.points},
                   {"taus", grid.taus}};
    json mesh_json{{"desk", problem.mesh->is_desk()},
                   {"length", problem.mesh->length()},
                   {"elements", problem.mesh->element_count()},
                   {"bc", problem.mesh->bc() == BoundaryCondition::dirichlet ? "dirichlet"
                                                                            : "natural"}};
    json solver_json{{"theta", cfg.solver.theta},
                     {"newton_tol", cfg.solver.newton_tol},
                     {"newton_max_iter", cfg.solver.newton_max_iter},
                     {"damping_floor", cfg.solver.damping_floor},
                     {"eps_min", cfg.solver.eps_min},
                     {"c_eps", cfg.solver.c_eps},
                     {"picard_fallback", cfg.solver.picard_fallback},
                     {"picard_max_iter", cfg.solver.picard_max_iter},
                     {"strict_admissibility", cfg.solver.strict_admissibility}};
    json reference_json;
    if (sc.reference.kind == ReferenceSpec::Kind::exact)
        reference_json = json{{"kind", "exact"}};
    else
        reference_json = json{{"kind", "fine_grid"},
                              {"refine_factor", sc.reference.refine_factor},
                              {"fine_theta", sc.reference.fine_theta}};
    return json{{"scenario", sc.name},
                {"grid", grid_json},
                {"mesh", mesh_json},
                {"solver", solver_json},
                {"epsilon_offset", eps_offset},
                {"reference", reference_json}};
}

void persist_run(const fs::path& dir, const Scenario& sc, const SolveConfig& cfg,
                 const Problem& problem, const TimeGrid& grid, double eps_offset,
                 const RunArtifacts& art) {
    fs::create_directories(dir);
    write_text_file(dir / "states.csv", state_csv(problem, grid, art.traj.states, false));
    write_text_file(dir / "mids.csv", state_csv(problem, grid, art.traj.mids, true));
    write_text_file(dir / "selections.csv", selections_csv(problem, art.traj));
    write_text_file(dir / "records.csv", records_csv(art.traj));
    write_text_file(dir / "run.json",
                    run_manifest(sc, cfg, problem, grid, eps_offset).dump(2) + "\n");
    write_text_file(dir / "report.json", art.report.dump(2) + "\n");
}

double resolve_eps_offset(const Scenario& sc, double requested) {
    return requested >= 0.0 ? requested : sc.eps_offset;
}

// Solve the fine-grid reference demanded by the scenario's lineage and return
// its hat track together with report metadata.
PiecewiseLinearTrack solve_reference(const Scenario& sc, const Problem& problem,
                                     const DiscreteFunction& u0, const TimeGrid& grid,
                                     const ThetaConfig& solver, json& meta) {
    TimeGrid fine = split_slabs(grid, sc.reference.refine_factor);
    ThetaConfig fine_solver = solver;
    fine_solver.theta = sc.reference.fine_theta;
    const TrajectorySolution ref = solve_trajectory(fine_solver, problem, fine, u0);
    double residual_max = 0.0;
    for (const auto& rec : ref.records) residual_max = std::max(residual_max, rec.residual);
    meta = json{{"kind", "fine_grid"},
                {"refine_factor", sc.reference.refine_factor},
                {"fine_theta", sc.reference.fine_theta},
                {"N", fine.slab_count()},
                {"residual_max", residual_max}};
    return hat_track(ref);
}

// --- family aggregation ----------------------------------------------------

double family_ratio(const std::vector<double>& values) {
    double lo = kInf, hi = -kInf;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == 0.0) return 1.0; // identically zero family (e.g. no selections)
    if (!(lo > 0.0)) return kInf;
    return hi / lo;
}

} // namespace

SolveConfig solve_config_from_text(const std::string& text) {
    return solve_config_from_json(parse_json_text(text, "solve config"));
}

SolveConfig solve_config_from_file(const std::string& path) {
    return solve_config_from_json(load_json_file(path));
}

StudyPlan study_plan_from_text(const std::string& text) {
    return study_plan_from_json(parse_json_text(text, "study plan"));
}

StudyPlan study_plan_from_file(const std::string& path) {
    return study_plan_from_json(load_json_file(path));
}

std::string run_solve(const SolveConfig& config, const std::string& out_dir) {
    check_theta_config(config.solver);
    const Scenario sc = get_scenario(config.scenario);
    const MeshPtr mesh = build_mesh(sc.mesh, config.mesh_elements);
    const Problem problem = make_problem(sc, mesh);
    const DiscreteFunction u0 = initial_state(sc, mesh);
    const TimeGrid grid = build_grid(sc.T, config.grid);
    const double eps_offset = resolve_eps_offset(sc, config.eps_offset);

    json reference_meta;
    if (sc.reference.kind == ReferenceSpec::Kind::exact)
        reference_meta = json{{"kind", "exact"}};
    else
        reference_meta = json{{"kind", "fine_grid"},
                              {"refine_factor", sc.reference.refine_factor},
                              {"fine_theta", sc.reference.fine_theta},
                              {"materialized", false}};
    RunArtifacts art = execute_run(sc, problem, u0, grid, config.solver, eps_offset,
                                   nullptr, std::move(reference_meta));
    persist_run(out_dir, sc, config, problem, grid, eps_offset, art);
    return art.report.dump(2) + "\n";
}

std::string run_study(const StudyPlan& plan, const std::string& out_dir, int jobs) {
    if (plan.levels < 1) throw ConfigError("study plan: levels must be >= 1");
    if (plan.thetas.empty()) throw ConfigError("study plan: thetas must be non-empty");
    for (double theta : plan.thetas) {
        ThetaConfig probe = plan.solver;
        probe.theta = theta;
        check_theta_config(probe);
    }
    const Scenario sc = get_scenario(plan.scenario);
    const MeshPtr mesh = build_mesh(sc.mesh, plan.mesh_elements);
    const Problem problem = make_problem(sc, mesh);
    const DiscreteFunction u0 = initial_state(sc, mesh);
    const double eps_offset = resolve_eps_offset(sc, plan.eps_offset);
    const std::vector<TimeGrid> grids =
        build_refinement_family(sc.T, plan.family.N, plan.levels, plan.family);

    struct RunSlot {
        double theta;
        int level;
        RunArtifacts art;
        std::string error;
    };
    // Report assembly merges by ascending (theta, N) regardless of the plan's
    // listing order or of which worker finishes first.
    std::vector<double> thetas = plan.thetas;
    std::sort(thetas.begin(), thetas.end());
    std::vector<RunSlot> slots;
    for (double theta : thetas)
        for (int level = 0; level < plan.levels; ++level)
            slots.push_back(RunSlot{theta, level, {}, {}});

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(slots.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= slots.size()) return;
            RunSlot& slot = slots[i];
            try {
                const TimeGrid& grid = grids[static_cast<std::size_t>(slot.level)];
                ThetaConfig solver = plan.solver;
                solver.theta = slot.theta;
                json meta;
                if (sc.reference.kind == ReferenceSpec::Kind::fine_grid) {
                    const PiecewiseLinearTrack ref =
                        solve_reference(sc, problem, u0, grid, solver, meta);
                    slot.art = execute_run(sc, problem, u0, grid, solver, eps_offset,
                                           &ref, std::move(meta));
                } else {
                    slot.art = execute_run(sc, problem, u0, grid, solver, eps_offset,
                                           nullptr, json{{"kind", "exact"}});
                }
            } catch (const std::exception& e) {
                slot.error = e.what();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (const auto& slot : slots)
        if (!slot.error.empty())
            throw SolverError("study member theta=" + fmt_short(slot.theta) + " level " +
                              std::to_string(slot.level) + " failed: " + slot.error);

    // Deterministic ordered persistence and merge by (theta, N).
    fs::create_directories(out_dir);
    std::string summary =
        "theta,N,K_observed,r_max,tau_max,err_pointwise_h,err_l2th,err_l2tv,"
        "lhs_lemma42,sum_ak_q,sum_xik_q,sum_rate_q,residual_max,clamp_max,"
        "initial_growth\n";
    json families = json::array();
    std::vector<std::string> warnings;

    std::size_t slot_index = 0;
    for (double theta : thetas) {
        json family;
        family["theta"] = theta;
        json grid_rows = json::array();
        std::vector<double> errs_pointwise, errs_l2th, tau_maxes;
        std::vector<double> lhs42, ak, xik, rate, growth0;
        double admissibility_margin = kInf;
        for (int level = 0; level < plan.levels; ++level, ++slot_index) {
            const RunSlot& slot = slots[slot_index];
            const RunArtifacts& art = slot.art;
            const TimeGrid& grid = grids[static_cast<std::size_t>(level)];

            SolveConfig member;
            member.scenario = plan.scenario;
            member.solver = plan.solver;
            member.solver.theta = theta;
            member.grid = plan.family;
            member.grid.N = grid.slab_count();
            member.grid.seed = plan.family.seed + static_cast<std::uint64_t>(level);
            member.mesh_elements = plan.mesh_elements;
            member.eps_offset = plan.eps_offset;
            const fs::path run_dir = fs::path(out_dir) / ("run_t" + fmt_short(theta) +
                                                          "_N" + std::to_string(grid.slab_count()));
            persist_run(run_dir, sc, member, problem, grid, eps_offset, art);

            tau_maxes.push_back(art.reg.tau_max);
            if (std::isfinite(art.err_pointwise)) errs_pointwise.push_back(art.err_pointwise);
            if (std::isfinite(art.err_l2th)) errs_l2th.push_back(art.err_l2th);
            lhs42.push_back(art.ap.lhs_lemma42);
            ak.push_back(art.ap.sum_ak_q);
            xik.push_back(art.ap.sum_xik_q);
            rate.push_back(art.ap.sum_rate_q);
            growth0.push_back(art.initial_growth);
            admissibility_margin = std::min(admissibility_margin, art.tau0 - art.reg.tau_max);

            grid_rows.push_back(json{{"N", grid.slab_count()},
                                     {"tau_max", art.reg.tau_max},
                                     {"r_max", art.reg.r_max},
                                     {"K_observed", art.reg.K_observed},
                                     {"errors", art.report.at("errors")},
                                     {"apriori", apriori_to_json(art.ap)},
                                     {"lemma43", lemma43_to_json(art.ap)},
                                     {"checks", art.report.at("checks")}});

            summary += csv_join({fmt(theta), std::to_string(grid.slab_count()),
                                 fmt(art.reg.K_observed), fmt(art.reg.r_max),
                                 fmt(art.reg.tau_max), fmt(art.err_pointwise),
                                 fmt(art.err_l2th), fmt(art.err_l2tv),
                                 fmt(art.ap.lhs_lemma42), fmt(art.ap.sum_ak_q),
                                 fmt(art.ap.sum_xik_q), fmt(art.ap.sum_rate_q),
                                 fmt(art.residual_max), fmt(art.clamp_max),
                                 fmt(art.initial_growth)});
        }
        family["grids"] = grid_rows;

        json orders = json::object();
        if (plan.levels >= 3) {
            if (errs_pointwise.size() == tau_maxes.size()) {
                const OrderFit fit = observed_order(errs_pointwise, tau_maxes);
                orders["pointwise_h"] =
                    json{{"slope", fit.slope}, {"fit_residual", fit.fit_residual}};
            }
            if (errs_l2th.size() == tau_maxes.size()) {
                const OrderFit fit = observed_order(errs_l2th, tau_maxes);
                orders["l2th"] = json{{"slope", fit.slope}, {"fit_residual", fit.fit_residual}};
            }
        } else {
            const std::string warning = "theta=" + fmt_short(theta) +
                                        ": fewer than 3 grids, orders omitted";
            warnings.push_back(warning);
            log_warn("study: " + warning);
        }
        family["orders"] = orders;
        family["uniform_bounds"] =
            json{{"lhs_lemma42_ratio", family_ratio(lhs42)},
                 {"sum_ak_q_ratio", family_ratio(ak)},
                 {"sum_xik_q_ratio", family_ratio(xik)},
                 {"sum_rate_q_ratio", family_ratio(rate)},
                 {"pass", family_ratio(lhs42) < 1.25 && family_ratio(ak) < 1.25 &&
                              family_ratio(xik) < 1.25 && family_ratio(rate) < 1.25}};
        family["initial_growth"] =
            json{{"max", *std::max_element(growth0.begin(), growth0.end())},
                 {"min", *std::min_element(growth0.begin(), growth0.end())}};
        family["admissibility_margin"] = json_or_null(admissibility_margin);
        families.push_back(std::move(family));
    }

    json study{{"scenario", plan.scenario},
               {"plan",
                json{{"thetas", plan.thetas},
                     {"kind", plan.family.kind},
                     {"N0", plan.family.N},
                     {"levels", plan.levels},
                     {"K_target", plan.family.K_target},
                     {"seed", plan.family.seed},
                     {"mesh_elements",
                      plan.mesh_elements > 0 ? plan.mesh_elements : sc.mesh.elements},
                     {"epsilon_offset", eps_offset}}},
               {"families", std::move(families)},
               {"warnings", warnings}};

    write_text_file(fs::path(out_dir) / "summary.csv", summary);
    const std::string text = study.dump(2) + "\n";
    write_text_file(fs::path(out_dir) / "study.json", text);
    return text;
}

std::string run_validate(const std::string& scenario_name, int samples,
                         std::uint64_t seed) {
    const Scenario sc = get_scenario(scenario_name);
    const ScenarioValidation v = validate_scenario(sc, 0, samples, seed);

    std::ostringstream out;
    out << "scenario: " << sc.name << "\n";
    out << "H(A) coercivity/growth: " << (v.ha.pass ? "pass" : "FAIL")
        << " (worst coercivity margin " << fmt(v.ha.worst_coercivity_margin)
        << ", worst growth margin " << fmt(v.ha.worst_growth_margin) << ", "
        << v.ha.samples << " samples)\n";
    if (v.holder) {
        out << "H(t) Hoelder envelope: " << (v.holder->pass ? "pass" : "FAIL")
            << " (worst ratio " << fmt(v.holder->worst_ratio) << ", delta in range: "
            << (v.holder->delta_in_range ? "yes" : "no") << ")\n";
    }
    if (v.growth_report) {
        const GrowthReport& g = *v.growth_report;
        out << "H(F) growth (case " << (sc.growth ? sc.growth->case_tag : "?")
            << "): " << (g.pass ? "pass" : "FAIL") << " (worst growth margin "
            << fmt(g.worst_growth_margin) << ", worst coercivity margin "
            << fmt(g.worst_coercivity_margin) << ", lambda margin "
            << fmt(g.lambda_margin) << ")\n";
    }
    out << "admissible tau0 at theta=1: " << fmt(v.tau0) << "\n";
    out << "overall: " << (v.pass ? "pass" : "FAIL") << "\n";
    if (!v.pass) throw ValidationError(out.str());
    return out.str();
}

std::string run_diagnose(const std::string& trajectory_dir) {
    const fs::path dir(trajectory_dir);
    const json run = load_json_file((dir / "run.json").string());
    const json stored_report = load_json_file((dir / "report.json").string());
    const std::string ctx = "run manifest";

    const Scenario sc = get_scenario(get_req<std::string>(run, "scenario", ctx));
    const json& mesh_json = run.at("mesh");
    const bool desk = get_req<bool>(mesh_json, "desk", ctx + ".mesh");
    MeshPtr mesh;
    if (desk) {
        mesh = SpatialMesh::desk();
    } else {
        mesh = SpatialMesh::interval(
            get_req<double>(mesh_json, "length", ctx + ".mesh"),
            get_req<int>(mesh_json, "elements", ctx + ".mesh"),
            get_req<std::string>(mesh_json, "bc", ctx + ".mesh") == "dirichlet"
                ? BoundaryCondition::dirichlet
                : BoundaryCondition::natural);
    }
    const Problem problem = make_problem(sc, mesh);

    TimeGrid grid;
    grid.points = get_req<std::vector<double>>(run.at("grid"), "points", ctx + ".grid");
    grid.taus = get_req<std::vector<double>>(run.at("grid"), "taus", ctx + ".grid");
    if (grid.points.size() != grid.taus.size() + 1)
        throw ConfigError(ctx + ": inconsistent grid arrays");

    ThetaConfig solver;
    const json& solver_json = run.at("solver");
    solver.theta = get_req<double>(solver_json, "theta", ctx + ".solver");
    solver.newton_tol = get_req<double>(solver_json, "newton_tol", ctx + ".solver");
    const double eps_offset = get_req<double>(run, "epsilon_offset", ctx);

    const CsvTable states_csv_t = read_csv_file(dir / "states.csv");
    const CsvTable mids_csv_t = read_csv_file(dir / "mids.csv");
    const CsvTable selections_csv_t = read_csv_file(dir / "selections.csv");
    const CsvTable records_csv_t = read_csv_file(dir / "records.csv");
    const int N = grid.slab_count();
    if (static_cast<int>(states_csv_t.rows.size()) != N + 1 ||
        static_cast<int>(mids_csv_t.rows.size()) != N ||
        static_cast<int>(selections_csv_t.rows.size()) != N ||
        static_cast<int>(records_csv_t.rows.size()) != N)
        throw ValidationError("diagnose: persisted row counts do not match the grid");

    auto free_from_full = [&](const std::vector<double>& row) {
        Eigen::VectorXd free(mesh->free_count());
        for (int i = 0; i < mesh->free_count(); ++i)
            free[i] = row[static_cast<std::size_t>(mesh->node_of_free(i)) + 1];
        return free;
    };

    TrajectorySolution traj;
    traj.grid = grid;
    for (int k = 0; k <= N; ++k)
        traj.states.push_back(
            DiscreteFunction{mesh, problem.op.p,
                             free_from_full(states_csv_t.rows[static_cast<std::size_t>(k)])});
    for (int k = 1; k <= N; ++k)
        traj.mids.push_back(
            DiscreteFunction{mesh, problem.op.p,
                             free_from_full(mids_csv_t.rows[static_cast<std::size_t>(k - 1)])});
    for (int k = 1; k <= N; ++k) {
        const auto& row = selections_csv_t.rows[static_cast<std::size_t>(k - 1)];
        Eigen::VectorXd xi(static_cast<int>(row.size()) - 1);
        for (int i = 0; i < xi.size(); ++i) xi[i] = row[static_cast<std::size_t>(i) + 1];
        traj.selections.push_back(UElement{std::move(xi)});
    }

    // Re-derive every certificate from the persisted (w, xi) pairs.
    double recomputed_residual_max = 0.0;
    double worst_gap = 0.0;
    bool membership_pass = true;
    double membership_worst = -kInf;
    for (int k = 1; k <= N; ++k) {
        const auto& row = records_csv_t.rows[static_cast<std::size_t>(k - 1)];
        const double stored_eps = row[2];
        const double stored_residual = row[3];
        const auto& w = traj.mids[static_cast<std::size_t>(k - 1)];
        const auto& u_prev = traj.states[static_cast<std::size_t>(k - 1)];
        Eigen::VectorXd res = mesh->mass_apply(w.coeffs - u_prev.coeffs) /
                              (solver.theta * grid.tau(k));
        res += slab_average_apply(problem.op, mesh, grid, k, w.coeffs).coeffs;
        res -= slab_average_load(problem.source, mesh, grid, k).coeffs;
        const auto& xi = traj.selections[static_cast<std::size_t>(k - 1)].values;
        if (problem.graph && xi.size() > 0)
            res += iota_adjoint(problem.embedding, mesh, UElement{xi}).coeffs;
        const double certificate = dual_norm(DualVector{mesh, res}, problem.op.p);
        recomputed_residual_max = std::max(recomputed_residual_max, certificate);
        worst_gap = std::max(worst_gap, std::abs(certificate - stored_residual));
        if (problem.graph) {
            const UElement trace = iota_apply(problem.embedding, w);
            const MembershipReport mem =
                slab_average_membership(*problem.graph, grid, k, trace.values, xi,
                                        stored_eps + 1e-9, stored_eps);
            membership_pass = membership_pass && mem.pass;
            membership_worst = std::max(membership_worst, mem.worst_distance);
        }
    }

    const AprioriReport ap = apriori(traj, problem, solver.theta);
    const PiecewiseLinearTrack hat = hat_track(traj);
    const PiecewiseConstantTrack bar = bar_track(traj);
    const BbbResult bbb = bbb_identity(hat, bar, mesh, solver.theta);

    auto close = [](double a, double b) {
        return std::abs(a - b) <= 1e-9 * (1.0 + std::abs(a) + std::abs(b));
    };
    const json& stored_ap = stored_report.at("apriori");
    const json& stored_l43 = stored_report.at("lemma43");
    bool report_match = close(ap.lhs_lemma42, stored_ap.at("lhs_lemma42").get<double>()) &&
                        close(ap.max_h_sq, stored_ap.at("max_h_sq").get<double>()) &&
                        close(ap.sum_v_p, stored_ap.at("sum_v_p").get<double>()) &&
                        close(ap.sum_ak_q, stored_l43.at("sum_ak_q").get<double>()) &&
                        close(ap.sum_xik_q, stored_l43.at("sum_xik_q").get<double>()) &&
                        close(ap.sum_rate_q, stored_l43.at("sum_rate_q").get<double>());

    // Errors: rematerialize the reference per the recorded lineage.
    json errors_check = json::object();
    const json& stored_errors = stored_report.at("errors");
    if (stored_errors.contains("pointwise_h")) {
        const std::vector<double> times = check_times(grid, std::max(eps_offset, 0.0));
        double err_pointwise = kNaN, err_l2th = kNaN;
        if (sc.reference.kind == ReferenceSpec::Kind::exact) {
            err_pointwise = pointwise_h_error_exact(hat, mesh, sc.reference.exact, times);
            err_l2th = l2th_error_exact(hat, mesh, sc.reference.exact);
        } else {
            json meta;
            const DiscreteFunction u0 = traj.states.front();
            const PiecewiseLinearTrack ref =
                solve_reference(sc, problem, u0, grid, solver, meta);
            err_pointwise = pointwise_h_error_track(hat, mesh, ref, times);
            err_l2th = l2th_error_track(hat, mesh, ref);
        }
        const bool pointwise_ok =
            close(err_pointwise, stored_errors.at("pointwise_h").get<double>());
        const bool l2th_ok = !stored_errors.contains("l2th") ||
                             close(err_l2th, stored_errors.at("l2th").get<double>());
        errors_check = json{{"pointwise_h", err_pointwise},
                            {"l2th", err_l2th},
                            {"match", pointwise_ok && l2th_ok}};
        report_match = report_match && pointwise_ok && l2th_ok;
    }

    const bool certificates_ok =
        recomputed_residual_max <= solver.newton_tol * (1.0 + 1e-6) + 1e-14;
    const bool gap_ok = worst_gap <= 1e-12 + 1e-6 * recomputed_residual_max;
    const bool pass = certificates_ok && gap_ok && membership_pass && report_match &&
                      close(bbb.residual,
                            stored_report.at("checks").at("bbb_residual").get<double>());

    json diagnose{{"pass", pass},
                  {"residual_max_recomputed", recomputed_residual_max},
                  {"residual_gap_max", worst_gap},
                  {"certificates_within_tol", certificates_ok},
                  {"membership_pass", membership_pass},
                  {"membership_worst", json_or_null(membership_worst)},
                  {"report_match", report_match},
                  {"bbb_residual_recomputed", bbb.residual},
                  {"errors_check", errors_check}};
    const std::string text = diagnose.dump(2) + "\n";
    write_text_file(dir / "diagnose.json", text);
    if (!pass) throw ValidationError("diagnose found inconsistencies:\n" + text);
    return text;
}

} // namespace thetaincl
