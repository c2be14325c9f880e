"""Python interface to the theta-scheme inclusion solver."""

import json as _json

from ._core import (
    ConfigError,
    SolverError,
    ValidationError,
    __version__,
    admissible_tau0_for,
    algebraic_identity_check,
    bvq_seminorm,
    observed_order,
    random_regular_grid,
    run_diagnose,
    run_solve,
    run_study,
    run_validate,
    scenario_names,
    solve_scenario,
    uniform_grid,
)

__all__ = [
    "ConfigError",
    "SolverError",
    "ValidationError",
    "__version__",
    "admissible_tau0_for",
    "algebraic_identity_check",
    "bvq_seminorm",
    "observed_order",
    "random_regular_grid",
    "run_diagnose",
    "run_solve",
    "run_study",
    "run_validate",
    "scenario_names",
    "solve",
    "solve_scenario",
    "study",
    "uniform_grid",
]


def solve(config, out_dir):
    """Run a persisted solve; ``config`` is a dict, returns the parsed report."""
    return _json.loads(run_solve(_json.dumps(config), str(out_dir)))


def study(plan, out_dir, jobs=1):
    """Run a refinement study; ``plan`` is a dict, returns the parsed summary."""
    return _json.loads(run_study(_json.dumps(plan), str(out_dir), jobs))
