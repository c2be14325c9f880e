import json
import math

import pytest

import thetaincl as ti


def test_scenario_registry():
    names = ti.scenario_names()
    assert set(names) == {
        "heat",
        "heat_tdep",
        "jump_source",
        "plap_jump",
        "robin_mv",
        "ode_desk",
    }


def test_desk_solve_matches_product_formula():
    theta, n = 0.75, 10
    out = ti.solve_scenario("ode_desk", theta=theta, N=n)
    tau = 1.0 / n
    factor = (1.0 - (1.0 - theta) * tau) / (1.0 + theta * tau)
    expected = factor**n
    assert out["states"][-1][0] == pytest.approx(expected, abs=1e-12)
    assert out["residual_max"] <= 1e-10


def test_heat_solve_shape_and_certificates():
    out = ti.solve_scenario("heat", theta=1.0, N=8, elements=32)
    assert len(out["t"]) == 9
    assert len(out["states"]) == 9
    assert len(out["states"][0]) == 33
    assert out["residual_max"] <= 1e-10
    assert out["lhs_lemma42"] <= out["data_constant"] * 10


def test_tau0_plugins():
    assert ti.admissible_tau0_for("jump_source", 1.0) == pytest.approx(4.0)
    assert math.isinf(ti.admissible_tau0_for("heat", 1.0))


def test_algebraic_identity():
    assert ti.algebraic_identity_check(0.3, -1.2, 0.75) <= 1e-15


def test_bvq_seminorm_values():
    assert ti.bvq_seminorm([0.0, 1.0, 3.0], 2.0) == pytest.approx(9.0)
    assert ti.bvq_seminorm([0.0, 1.0, 0.0], 1.0) == pytest.approx(2.0)


def test_grids():
    pts = ti.uniform_grid(1.0, 4)
    assert pts == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    rnd = ti.random_regular_grid(1.0, 16, K_target=2.0, seed=7)
    assert rnd == ti.random_regular_grid(1.0, 16, K_target=2.0, seed=7)
    assert len(rnd) == 17 and rnd[0] == 0.0 and rnd[-1] == pytest.approx(1.0)


def test_run_solve_roundtrip(tmp_path):
    config = {"scenario": "ode_desk", "theta": 1.0, "grid": {"N": 4}}
    report = ti.solve(config, tmp_path / "run")
    assert report["scenario"] == "ode_desk"
    assert report["grid"]["N"] == 4
    assert report["checks"]["bbb_residual"] <= 1e-12
    assert (tmp_path / "run" / "states.csv").exists()
    assert ti.run_diagnose(str(tmp_path / "run"))


def test_bad_config_raises():
    with pytest.raises(ti.ConfigError):
        ti.run_solve(json.dumps({"scenario": "nope", "theta": 1.0, "grid": {"N": 2}}), "/tmp/x")
    with pytest.raises(Exception):
        ti.solve_scenario("heat", theta=0.0, N=4)


def test_validate_heat():
    text = ti.run_validate("heat")
    assert "pass" in text
