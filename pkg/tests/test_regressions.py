"""Frozen outcome regressions for scenarios without external numeric anchors."""
import json
from dataclasses import replace
from pathlib import Path

import pytest

from armorsim.config import load_builtin
from armorsim.materials import GPa, StressStrainCurve
from armorsim.pipeline import run_scenario

GOLDEN = json.loads((Path(__file__).parent / "golden" / "regressions.json").read_text())["rigidity"]


def _with_modulus(scenario, modulus):
    # the limit stress scales with the modulus so every variant fails at the same strain
    fab = scenario.backing
    return replace(scenario, backing=replace(fab, curve=StressStrainCurve.linear(modulus, 0.05),
                                             tensile_limit=0.02 * modulus))


@pytest.fixture(scope="module")
def rigidity_outcomes():
    scenario = load_builtin("m16_plate_kevlar40").scenario
    return {f"{e}GPa": run_scenario(_with_modulus(scenario, e * GPa)).backing for e in (35, 70, 140)}


@pytest.mark.parametrize("key", ["35GPa", "70GPa", "140GPa"])
def test_rigidity_outcome_frozen(rigidity_outcomes, key):
    out, gold = rigidity_outcomes[key], GOLDEN[key]
    assert (out.stopped, out.perforated) == (gold["stopped"], gold["perforated"])
    assert out.perforated_plies == gold["Np_star"]
    assert out.residual_velocity == pytest.approx(gold["Vr_mps"], rel=1e-6)


def test_rigidity_ordering_frozen(rigidity_outcomes):
    order = sorted(rigidity_outcomes, key=lambda k: rigidity_outcomes[k].residual_velocity)
    assert order == sorted(GOLDEN, key=lambda k: GOLDEN[k]["Vr_mps"])
