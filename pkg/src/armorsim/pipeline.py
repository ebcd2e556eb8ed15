"""Facing stage followed by the fabric backing stage, plus sweeps and the validation suite.

The two stages are independent: the facing solver produces a
:class:`HandoffState` (exit velocity, mass and diameter) which seeds the backing
solver as a rigid impactor. Known handoff values can be pinned through
:class:`HandoffOverrides` without touching the facing computation.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import fabric_backing, jet_model, thin_facing
from .errors import ArmorSimError, StageError
from .fabric_backing import BackingOutcome, ImpactorState
from .jet_model import LambdaVariant, PenetrationTrace, StopReason
from .materials import FabricSpec, ProjectileSpec, ThickFacingSpec, ThinFacingSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverSettings:
    jet_dt: float = jet_model.DEFAULT_DT
    jet_t_max: float = 1e-3
    record_every: int = 1
    warm_start: bool = False
    lambda_variant: LambdaVariant = LambdaVariant.GEOMETRIC
    rtol: float = jet_model.ITERATION_RTOL
    max_iter: int = jet_model.MAX_ITERATIONS
    handoff_on_breakdown: bool = False
    fabric_dt: float | None = None
    fabric_t_max: float = 400e-6
    n_r: int = 200
    r_max: float | None = None
    snapshot_every: float | None = 10e-6

    def __post_init__(self):
        object.__setattr__(self, "lambda_variant", LambdaVariant(self.lambda_variant))
        if not (self.jet_dt > 0 and self.jet_t_max > 0 and self.fabric_t_max > 0):
            raise ValueError("time steps and time limits must be positive")
        if self.fabric_dt is not None and not self.fabric_dt > 0:
            raise ValueError("fabric_dt must be positive")
        if self.record_every < 1 or self.max_iter < 1:
            raise ValueError("record_every and max_iter must be at least 1")
        if not 0 < self.rtol < 1:
            raise ValueError("rtol must lie in (0, 1)")


@dataclass(frozen=True)
class HandoffOverrides:
    velocity: float | None = None
    mass: float | None = None
    diameter: float | None = None

    @property
    def any(self) -> bool:
        return any(v is not None for v in (self.velocity, self.mass, self.diameter))


@dataclass(frozen=True)
class Scenario:
    """One shot: projectile, one facing (thin or thick), optional backing and impact speed."""

    projectile: ProjectileSpec
    facing: ThinFacingSpec | ThickFacingSpec
    v0: float
    backing: FabricSpec | None = None
    name: str = "scenario"
    mass_retention: float = 1.0  # thin facings only
    perforation_factor: float | None = None  # thin facings only; None uses the projectile's
    overrides: HandoffOverrides = field(default_factory=HandoffOverrides)
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if not isinstance(self.facing, (ThinFacingSpec, ThickFacingSpec)):
            raise TypeError("facing must be a ThinFacingSpec or a ThickFacingSpec")
        if not self.v0 > 0:
            raise ValueError("impact velocity must be positive")

    @property
    def facing_kind(self) -> str:
        return "thin" if isinstance(self.facing, ThinFacingSpec) else "thick"

    def with_velocity(self, v0: float) -> "Scenario":
        return replace(self, v0=float(v0))


@dataclass(frozen=True)
class HandoffState:
    velocity: float
    mass: float
    diameter: float
    source: str = "computed"  # computed | override | breakdown

    def __post_init__(self):
        if not self.velocity >= 0:
            raise ValueError("handoff velocity must be nonnegative")
        if not (self.mass > 0 and self.diameter > 0):
            raise ValueError("handoff mass and diameter must be positive")

    def impactor(self) -> ImpactorState:
        return ImpactorState(mass=self.mass, radius=0.5 * self.diameter, velocity=self.velocity)

    def as_dict(self):
        return {"Vr_mps": self.velocity, "mr_kg": self.mass, "dr_m": self.diameter, "source": self.source}


@dataclass
class ScenarioReport:
    scenario: Scenario
    facing_result: thin_facing.PerforationResult | PenetrationTrace
    handoff: HandoffState | None
    backing: BackingOutcome | None
    status: str
    warnings: list = field(default_factory=list)

    @property
    def residual_velocity(self) -> float:
        if self.backing is not None:
            return self.backing.residual_velocity
        if self.handoff is not None:
            return self.handoff.velocity
        return 0.0

    def facing_dict(self):
        r = self.facing_result
        if isinstance(r, thin_facing.PerforationResult):
            return {"kind": "thin", "ballistic_limit_mps": r.ballistic_limit, "perforated": r.perforated,
                    "Vrc_mps": r.residual_velocity, "dr_m": r.residual_diameter, "mr_kg": r.residual_mass}
        fin = r.final
        out = {"kind": "thick", "stop": r.stop.value, "detail": r.detail, "steps": r.steps,
               "dt_s": r.dt, "dt_halvings": r.dt_halvings, "max_residual": r.max_residual,
               "max_iterations": max(r.iterations) if r.iterations else 0,
               "final": {"t_s": fin.t, "V_mps": fin.V, "Lr_m": fin.length, "m_kg": fin.mass,
                         "P_m": fin.P, "Q_m3": fin.Q}}
        if r.exit is not None:
            e = r.exit
            out["exit"] = {"V_mps": e.velocity, "m_kg": e.mass, "d_m": e.diameter, "t_s": e.time,
                           "P_m": e.depth}
        return out

    def backing_dict(self):
        b = self.backing
        if b is None:
            return None
        return {
            "Np": b.plies, "stopped": b.stopped, "perforated": b.perforated, "inconclusive": b.inconclusive,
            "t_end_us": b.t_end * 1e6, "P_mm": b.depth * 1e3, "Np_star": b.perforated_plies,
            "Wc_J": b.absorbed_energy, "Vr_mps": b.residual_velocity, "dt_s": b.dt, "steps": b.steps,
            "snapshots": len(b.snapshots),
        }

    def checks(self):
        out = {}
        if self.backing is not None:
            out["energy_balance_max_rel_error"] = self.backing.max_energy_error
            out["energy_balance_ok"] = self.backing.max_energy_error < 0.01
            out["boundary_reached"] = self.backing.boundary_warned
        if self.handoff is not None:
            out["handoff_diameter_ge_caliber"] = self.handoff.diameter >= self.scenario.projectile.diameter
        r = self.facing_result
        if isinstance(r, PenetrationTrace):
            out["closure_max_residual"] = r.max_residual
        return out

    def to_dict(self, artifacts: dict | None = None):
        from .config import scenario_to_config

        return {
            "scenario": scenario_to_config(self.scenario),
            "status": self.status,
            "facing": self.facing_dict(),
            "handoff": None if self.handoff is None else self.handoff.as_dict(),
            "backing": self.backing_dict(),
            "residual_velocity_mps": self.residual_velocity,
            "checks": self.checks(),
            "warnings": list(self.warnings),
            "artifacts": dict(artifacts or {}),
        }

    def to_json(self, artifacts: dict | None = None) -> str:
        return json.dumps(self.to_dict(artifacts), indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


# ---------------------------------------------------------------------------

def run_facing(scenario: Scenario):
    """Facing stage only: returns (result, handoff or None, warnings)."""
    proj, facing = scenario.projectile, scenario.facing
    s = scenario.solver
    warnings = []
    try:
        if isinstance(facing, ThinFacingSpec):
            res = thin_facing.perforate_thin(proj, facing, scenario.v0, scenario.mass_retention,
                                             scenario.perforation_factor)
            handoff = (HandoffState(res.residual_velocity, res.residual_mass, res.residual_diameter)
                       if res.perforated else None)
            return res, handoff, warnings
        trace = jet_model.integrate(proj, facing, scenario.v0, dt=s.jet_dt, t_max=s.jet_t_max,
                                    record_every=s.record_every, warm_start=s.warm_start,
                                    variant=s.lambda_variant, rtol=s.rtol, max_iter=s.max_iter)
    except (ArmorSimError, ValueError, ArithmeticError) as exc:
        raise StageError("facing", exc) from exc
    handoff = None
    if trace.exit is not None:
        e = trace.exit
        handoff = HandoffState(max(e.velocity, 0.0), e.mass, e.diameter)
    elif trace.stop is StopReason.MODEL_BREAKDOWN:
        warnings.append(f"facing closure broke down ({trace.detail}) at P = {trace.final.P:.6g} m")
        if s.handoff_on_breakdown and not facing.semi_infinite:
            handoff = _breakdown_handoff(trace)
    return trace, handoff, warnings


def _breakdown_handoff(trace: PenetrationTrace) -> HandoffState:
    """Exit state taken from the last step whose closure converged."""
    radius = trace.column("R1_m")
    good = np.nonzero(np.isfinite(radius))[0]
    k = int(good[-1])
    lr = trace.column("Lr_m")[-1]
    p = trace.projectile
    mass = math.pi * p.radius**2 * p.density * lr
    return HandoffState(max(float(trace.column("V_mps")[-1]), 0.0), mass, 2.0 * float(radius[k]), "breakdown")


def apply_overrides(handoff: HandoffState | None, ov: HandoffOverrides) -> HandoffState | None:
    if not ov.any:
        return handoff
    if handoff is None:
        if ov.velocity is None or ov.mass is None or ov.diameter is None:
            return None
        return HandoffState(ov.velocity, ov.mass, ov.diameter, "override")
    return HandoffState(
        handoff.velocity if ov.velocity is None else ov.velocity,
        handoff.mass if ov.mass is None else ov.mass,
        handoff.diameter if ov.diameter is None else ov.diameter,
        "override",
    )


def _run_backing(fabric: FabricSpec, handoff: HandoffState, s: SolverSettings) -> BackingOutcome:
    try:
        return fabric_backing.run_backing(fabric, handoff.impactor(), dt=s.fabric_dt, t_max=s.fabric_t_max,
                                          r_max=s.r_max, n_r=s.n_r, snapshot_every=s.snapshot_every)
    except (ArmorSimError, ValueError, ArithmeticError) as exc:
        raise StageError("backing", exc) from exc


def run_scenario(scenario: Scenario) -> ScenarioReport:
    """Facing stage, then (if the facing is perforated and a backing exists) the backing stage.

    A projectile stopped by the facing is a valid outcome. Sub-solver failures
    are raised as :class:`StageError` naming the stage.
    """
    result, handoff, warnings = run_facing(scenario)
    handoff = apply_overrides(handoff, scenario.overrides)
    if handoff is not None and handoff.diameter < scenario.projectile.diameter:
        warnings.append(f"handoff diameter {handoff.diameter:.6g} m is below the caliber "
                        f"{scenario.projectile.diameter:.6g} m")
    if handoff is None:
        status = "facing_breakdown" if (isinstance(result, PenetrationTrace)
                                        and result.stop is StopReason.MODEL_BREAKDOWN) else "stopped_in_facing"
        return ScenarioReport(scenario, result, None, None, status, warnings)
    if scenario.backing is None:
        return ScenarioReport(scenario, result, handoff, None, "facing_perforated", warnings)
    outcome = _run_backing(scenario.backing, handoff, scenario.solver)
    if outcome.boundary_warned:
        warnings.append("backing disturbance reached the clamped rim before termination")
    if outcome.stopped:
        status = "stopped_in_backing"
    elif outcome.perforated:
        status = "perforated"
    else:
        status = "inconclusive"
    return ScenarioReport(scenario, result, handoff, outcome, status, warnings)


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepPoint:
    value: float
    report: ScenarioReport | None
    error: str = ""


def _safe_run(scenario):
    try:
        return run_scenario(scenario), ""
    except ArmorSimError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _fan_out(fn, items, workers):
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # map keeps input order


def velocity_sweep(template: Scenario, velocities: Sequence[float], workers: int | None = 1) -> list[SweepPoint]:
    """Independent runs of ``template`` at each impact velocity, in input order."""
    vs = [float(v) for v in velocities]
    if not vs:
        raise ValueError("empty velocity list")
    results = _fan_out(_safe_run, [template.with_velocity(v) for v in vs], workers)
    return [SweepPoint(v, rep, err) for v, (rep, err) in zip(vs, results)]


@dataclass
class PlySweepResult:
    handoff: HandoffState | None
    rows: list


def _ply_point(args):
    fabric, handoff, s = args
    try:
        return _run_backing(fabric, handoff, s), ""
    except ArmorSimError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def ply_count_sweep(template: Scenario, counts: Sequence[int], workers: int | None = 1) -> PlySweepResult:
    """Facing once, then one backing run per ply count (per-ply areal density fixed)."""
    counts = [int(n) for n in counts]
    if not counts:
        raise ValueError("empty ply range")
    if template.backing is None:
        raise ValueError("ply sweep needs a backing")
    if min(counts) < 0 or max(counts) > 200:
        raise ValueError("ply counts must lie in [0, 200]")
    _, handoff, _ = run_facing(template)
    handoff = apply_overrides(handoff, template.overrides)
    if handoff is None:
        return PlySweepResult(None, [fabric_backing.SweepRow(n, None, "facing not perforated") for n in counts])
    s = replace(template.solver, snapshot_every=None)
    items = [(template.backing.with_plies(n), handoff, s) for n in counts]
    results = _fan_out(_ply_point, items, workers)
    return PlySweepResult(handoff, [fabric_backing.SweepRow(n, out, err) for n, (out, err) in zip(counts, results)])


# ---------------------------------------------------------------------------
# validation suite

@dataclass
class CheckResult:
    block: str
    name: str
    passed: bool
    measured: object
    expected: object
    tolerance: object = None
    hard: bool = True
    detail: str = ""

    def as_dict(self):
        return {"block": self.block, "name": self.name, "passed": bool(self.passed), "hard": self.hard,
                "measured": self.measured, "expected": self.expected, "tolerance": self.tolerance,
                "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.as_dict() for c in self.checks]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, allow_nan=True, default=_json_default) + "\n"


def validation_suite(only: Sequence[str] | None = None) -> ValidationReport:
    """Run the built-in checks; ``only`` selects blocks by name."""
    from . import validation

    names = list(validation.BLOCKS) if not only else list(only)
    unknown = [n for n in names if n not in validation.BLOCKS]
    if unknown:
        raise ValueError(f"unknown validation block(s) {unknown}; available: {', '.join(validation.BLOCKS)}")
    checks = []
    for name in names:
        checks.extend(validation.BLOCKS[name]())
    return ValidationReport(checks)
