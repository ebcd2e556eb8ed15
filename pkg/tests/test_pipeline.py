import json
from dataclasses import replace

import pytest

from armorsim import validation
from armorsim.config import load_builtin
from armorsim.errors import StageError
from armorsim.materials import ThinFacingSpec, catalog_lookup, kevlar29
from armorsim.pipeline import (
    HandoffOverrides,
    Scenario,
    SolverSettings,
    apply_overrides,
    ply_count_sweep,
    run_facing,
    run_scenario,
    validation_suite,
    velocity_sweep,
)


@pytest.fixture
def thin_kevlar():
    return Scenario(catalog_lookup("AK47"), ThinFacingSpec(0.004, 500), 740.0, backing=kevlar29(4),
                    name="thin_kevlar", mass_retention=0.3, solver=SolverSettings(snapshot_every=None))


def test_thin_facing_stops_projectile(thin_kevlar):
    rep = run_scenario(thin_kevlar.with_velocity(300.0))
    assert rep.status == "stopped_in_facing"
    assert rep.backing is None and rep.handoff is None
    assert rep.residual_velocity == 0.0


def test_thin_facing_hands_off_to_backing(thin_kevlar):
    rep = run_scenario(thin_kevlar)
    assert rep.handoff.source == "computed"
    assert rep.handoff.diameter == pytest.approx(1.33 * 7.6e-3)
    assert rep.handoff.mass == pytest.approx(0.3 * 9.7e-3)
    assert rep.status in ("perforated", "stopped_in_backing")
    assert rep.backing.plies == 4


def test_facing_is_independent_of_backing(thin_kevlar):
    a = run_scenario(thin_kevlar)
    b = run_scenario(replace(thin_kevlar, backing=None))
    assert b.status == "facing_perforated"
    assert a.facing_dict() == b.facing_dict()
    assert a.handoff == b.handoff


def test_overrides_pin_handoff(thin_kevlar):
    ov = HandoffOverrides(velocity=567.0, mass=3e-3, diameter=7.2e-3)
    rep = run_scenario(replace(thin_kevlar, overrides=ov))
    assert rep.handoff.as_dict() == {"Vr_mps": 567.0, "mr_kg": 3e-3, "dr_m": 7.2e-3, "source": "override"}
    assert any("below the caliber" in w for w in rep.warnings)


def test_partial_override_without_perforation_gives_none():
    assert apply_overrides(None, HandoffOverrides(velocity=100.0)) is None


def test_backing_errors_carry_stage_label(thin_kevlar):
    bad = replace(thin_kevlar, solver=SolverSettings(n_r=50, r_max=0.05, snapshot_every=None))
    with pytest.raises(StageError) as err:
        run_scenario(bad)
    assert err.value.stage == "backing"


def test_thick_facing_breach_handoff():
    rc = load_builtin("ak47_ceramic_kevlar30")
    trace, handoff, _ = run_facing(rc.scenario)
    assert trace.breached
    assert handoff.velocity == pytest.approx(trace.exit.velocity)
    assert handoff.diameter == pytest.approx(trace.exit.diameter)


def test_fgm_breakdown_handoff_is_opt_in():
    rc = load_builtin("ak47_fgm_kevlar30")
    _, handoff, warnings = run_facing(rc.scenario)
    assert handoff.source == "breakdown"
    assert warnings
    strict = replace(rc.scenario, solver=replace(rc.scenario.solver, handoff_on_breakdown=False),
                     backing=None)
    rep = run_scenario(strict)
    assert rep.status == "facing_breakdown" and rep.handoff is None


def test_report_is_json_and_echoes_solver(thin_kevlar):
    rep = run_scenario(replace(thin_kevlar, solver=replace(thin_kevlar.solver, jet_dt=5e-9)))
    doc = json.loads(rep.to_json({"facing": "facing.csv"}))
    assert doc["scenario"]["solver"]["jet_dt_s"] == 5e-9
    assert doc["artifacts"] == {"facing": "facing.csv"}
    assert doc["checks"]["energy_balance_ok"]


def test_reports_are_byte_identical(thin_kevlar):
    assert run_scenario(thin_kevlar).to_json() == run_scenario(thin_kevlar).to_json()


def test_velocity_sweep_single_point_matches_run():
    template = load_builtin("p1_t3_normalized").scenario
    (point,) = velocity_sweep(template, [1500.0])
    assert point.report.to_json() == run_scenario(template.with_velocity(1500.0)).to_json()


def test_velocity_sweep_duplicates_are_identical():
    template = load_builtin("p1_t3_normalized").scenario
    a, b = velocity_sweep(template, [1200.0, 1200.0])
    assert a.report.to_json() == b.report.to_json()


def test_velocity_sweep_depth_monotone():
    template = load_builtin("p1_t3_normalized").scenario
    points = velocity_sweep(template, [1000, 1500, 2000, 3000, 5000])
    depths = [p.report.facing_result.final.P for p in points]
    assert depths == sorted(depths)


def test_velocity_sweep_records_errors():
    template = replace(load_builtin("p1_t3_normalized").scenario, solver=SolverSettings(jet_t_max=1e-7))
    (point,) = velocity_sweep(template, [1500.0])
    assert point.report is None and point.error.startswith("StageError: [facing]")


def test_velocity_sweep_rejects_empty():
    with pytest.raises(ValueError):
        velocity_sweep(load_builtin("p1_t3_normalized").scenario, [])


def test_ply_sweep_runs_facing_once(thin_kevlar):
    res = ply_count_sweep(thin_kevlar, [0, 2])
    assert res.handoff.source == "computed"
    assert res.rows[0].outcome.residual_velocity == pytest.approx(res.handoff.velocity)


def test_ply_sweep_parallel_matches_serial(thin_kevlar):
    a = ply_count_sweep(thin_kevlar, [1, 3], workers=1)
    b = ply_count_sweep(thin_kevlar, [1, 3], workers=2)
    assert [r.outcome.row() for r in a.rows] == [r.outcome.row() for r in b.rows]


def test_validation_rejects_unknown_block():
    with pytest.raises(ValueError):
        validation_suite(["nope"])


def test_validation_shot_table_sensitive_to_factor(monkeypatch):
    monkeypatch.setattr(validation, "SHOT_TABLE_FACTOR", 1.2 * validation.SHOT_TABLE_FACTOR)
    report = validation_suite(["table1"])
    assert sum(c.passed for c in report.checks) == 0


def test_validation_is_deterministic():
    a = validation_suite(["table1", "fit", "quadrature"]).to_json()
    assert a == validation_suite(["table1", "fit", "quadrature"]).to_json()


def test_soft_checks_do_not_fail_report():
    from armorsim.pipeline import CheckResult, ValidationReport

    report = ValidationReport([CheckResult("b", "x", True, 1, 1), CheckResult("b", "y", False, 1, 2, hard=False)])
    assert report.passed
