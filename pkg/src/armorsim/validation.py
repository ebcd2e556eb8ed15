"""Built-in checks behind ``armorsim validate``.

Each block returns a list of :class:`~armorsim.pipeline.CheckResult`. Hard
checks decide the exit status; soft checks are frozen regressions reported for
information.
"""
from __future__ import annotations

import math
import os
from importlib import resources

import numpy as np

from . import fabric_backing, jet_model, thin_facing
from .config import load_builtin
from .materials import catalog_lookup
from .pipeline import CheckResult, apply_overrides, ply_count_sweep, run_facing, run_scenario

# reference residual velocities for the bundled shot data (m/s)
SHOT_TABLE_CALCULATED = (383.0, 596.0, 655.0, 503.0, 652.0, 732.0, 762.0)
SHOT_TABLE_FACTOR = 2.47e7
SHOT_TABLE_RTOL = 0.02
FIT_BRACKET = (2.3e7, 2.6e7)
RATIO_BRACKET = (0.90, 1.10)

JET_PROJECTILES = ("p1", "p2")
JET_TARGETS = ("t1", "t2", "t3")
JET_VELOCITIES = (1000.0, 1200.0, 1500.0, 1800.0, 2100.0, 2400.0, 3000.0)
RESIDUAL_TOL = 1e-9

FGM_SPEED_GAP = 17.0  # percent, soft
FGM_DIAMETER_GAP = 15.0  # percent, soft
GAP_BAND = 10.0
GRADED_TRAUMA = 15

PLY_SWEEP = tuple(range(0, 101, 5))
MONOTONE_NOISE = 0.01
MESH_RTOL = 0.03
ENERGY_RTOL = 0.01


def shot_table():
    ref = resources.files("armorsim") / "data" / "m16_plate_shots.csv"
    return thin_facing.read_shots(ref)


def block_table1():
    proj = catalog_lookup("M16")
    out = []
    for i, (shot, expected) in enumerate(zip(shot_table(), SHOT_TABLE_CALCULATED), start=1):
        vrc = thin_facing.residual_velocity(SHOT_TABLE_FACTOR, shot, proj)
        rel = abs(vrc - expected) / expected
        out.append(CheckResult("table1", f"series {i} V_rc", rel <= SHOT_TABLE_RTOL, vrc, expected, SHOT_TABLE_RTOL,
                               detail=f"relative error {rel:.4f}"))
    return out


def block_fit():
    fit = thin_facing.fit_factor(shot_table(), catalog_lookup("M16"))
    lo, hi = min(fit.ratios), max(fit.ratios)
    return [
        CheckResult("fit", "fitted factor", FIT_BRACKET[0] <= fit.factor <= FIT_BRACKET[1], fit.factor,
                    list(FIT_BRACKET)),
        CheckResult("fit", "ratio spread", RATIO_BRACKET[0] <= lo and hi <= RATIO_BRACKET[1], [lo, hi],
                    list(RATIO_BRACKET), detail="ratios " + ", ".join(f"{r:.3f}" for r in fit.ratios)),
    ]


def jet_grid():
    """Run the residual grid; returns {(proj, target): [(v0, trace), ...]}."""
    grid = {}
    for pn in JET_PROJECTILES:
        for tn in JET_TARGETS:
            proj, target = catalog_lookup(pn), catalog_lookup(tn)
            grid[(pn, tn)] = [(v, jet_model.integrate(proj, target, v, record_every=1000))
                              for v in JET_VELOCITIES]
    return grid


def block_jet_residuals(grid=None):
    grid = jet_grid() if grid is None else grid
    out = []
    for (pn, tn), runs in grid.items():
        worst = max(tr.max_residual for _, tr in runs)
        iters = max((max(tr.iterations) if tr.iterations else 0) for _, tr in runs)
        depths = [float(tr.column("P_m")[-1]) for _, tr in runs]
        monotone = all(b >= a for a, b in zip(depths, depths[1:]))
        out.append(CheckResult("jet_residuals", f"{pn}/{tn} max residual", worst <= RESIDUAL_TOL, worst,
                               RESIDUAL_TOL))
        out.append(CheckResult("jet_residuals", f"{pn}/{tn} max iterations", iters <= jet_model.MAX_ITERATIONS,
                               iters, jet_model.MAX_ITERATIONS))
        out.append(CheckResult("jet_residuals", f"{pn}/{tn} final P monotone in V0", monotone, depths, None,
                               detail="final depths (m) over " + ", ".join(f"{v:g}" for v in JET_VELOCITIES)))
    return out


def block_asymptotics():
    proj, target = catalog_lookup("p1"), catalog_lookup("t3")
    low = jet_model.converge_step(1000.0, 0.0, proj, target)
    ratio = low.vp_minus / low.vt_minus
    high = jet_model.converge_step(5000.0, 0.0, proj, target)
    half = 2500.0
    dev = max(abs(high.vt_minus - half), abs(high.vp_minus - half)) / half
    return [
        CheckResult("asymptotics", "Vp-/Vt- at 1000 m/s", abs(ratio - 2.0) <= 0.4, ratio, 2.0, 0.4),
        CheckResult("asymptotics", "speeds near V/2 at 5000 m/s", dev <= 0.10, [high.vt_minus, high.vp_minus],
                    half, 0.10, detail=f"max relative deviation {dev:.4f}"),
    ]


def block_quadrature():
    # projectile jet with R1^2 - R0^2 = r0^2 and R0 = r0 has lam = lam_z = 1
    r0, sy = 1.0e-3, 1.0e9
    _, sp_plus = jet_model.plastic_work_factors(2 * r0, math.sqrt(2) * r0, r0, r0, sy, sy)
    exact = sy * 2 * math.log(2) / math.sqrt(3)
    rel = abs(sp_plus - exact) / exact
    return [CheckResult("quadrature", "sigma+ at lam = lam_z = 1", rel <= 1e-8, sp_plus, exact, 1e-8,
                        detail=f"relative error {rel:.2e}")]


def graded_handoffs():
    out = {}
    for key in ("ceramic", "fgm"):
        rc = load_builtin(f"ak47_{key}_kevlar30")
        _, handoff, warnings = run_facing(rc.scenario)
        out[key] = (rc.scenario, apply_overrides(handoff, rc.scenario.overrides), warnings)
    return out


def block_fgm(handoffs=None):
    handoffs = graded_handoffs() if handoffs is None else handoffs
    hc, hf = handoffs["ceramic"][1], handoffs["fgm"][1]
    if hc is None or hf is None:
        missing = [k for k in ("ceramic", "fgm") if handoffs[k][1] is None]
        return [CheckResult("fgm", "exit states available", False, None, "both", detail=f"no exit for {missing}")]
    v_gap = 100.0 * (hc.velocity - hf.velocity) / hf.velocity
    d_gap = 100.0 * (hf.diameter - hc.diameter) / hc.diameter
    note = f"ceramic exit {hc.source}, FGM exit {hf.source}"
    return [
        CheckResult("fgm", "ceramic exit V > FGM exit V", hc.velocity > hf.velocity,
                    [hc.velocity, hf.velocity], "ceramic > fgm", detail=note),
        CheckResult("fgm", "FGM exit d > ceramic exit d", hf.diameter > hc.diameter,
                    [hf.diameter, hc.diameter], "fgm > ceramic", detail=note),
        CheckResult("fgm", "velocity gap percent", abs(v_gap - FGM_SPEED_GAP) <= GAP_BAND, v_gap, FGM_SPEED_GAP,
                    GAP_BAND, hard=False),
        CheckResult("fgm", "diameter gap percent", abs(d_gap - FGM_DIAMETER_GAP) <= GAP_BAND, d_gap,
                    FGM_DIAMETER_GAP, GAP_BAND, hard=False),
    ]


def block_graded_backing(handoffs=None):
    handoffs = graded_handoffs() if handoffs is None else handoffs
    outcomes = {}
    for key, (scenario, handoff, _) in handoffs.items():
        if handoff is None:
            return [CheckResult("graded_backing", "handoffs available", False, None, "both", detail=f"no exit for {key}")]
        outcomes[key] = fabric_backing.run_backing(scenario.backing, handoff.impactor(),
                                                   n_r=scenario.solver.n_r, snapshot_every=None,
                                                   t_max=scenario.solver.fabric_t_max)
    nc, nf = outcomes["ceramic"].perforated_plies, outcomes["fgm"].perforated_plies
    pc, pf = outcomes["ceramic"].depth, outcomes["fgm"].depth
    return [
        CheckResult("graded_backing", "equal trauma N_p*", nc == nf, [nc, nf], "equal"),
        CheckResult("graded_backing", "ceramic depth >= FGM depth", pc >= pf, [pc, pf], "ceramic >= fgm"),
        CheckResult("graded_backing", "trauma value", nc == GRADED_TRAUMA and nf == GRADED_TRAUMA, [nc, nf], GRADED_TRAUMA,
                    hard=False),
    ]


FABRIC_SCENARIOS = ("ak47_plate_kevlar40", "m16_plate_kevlar40")


def fabric_sweep(name=FABRIC_SCENARIOS[0], counts=PLY_SWEEP):
    return ply_count_sweep(load_builtin(name).scenario, counts, workers=os.cpu_count())


def _sweep_checks(name, sweep):
    counts = [r.plies for r in sweep.rows]
    vr = [r.outcome.residual_velocity if r.outcome is not None else math.nan for r in sweep.rows]
    ok = all(np.isfinite(vr)) and all(b <= a * (1 + MONOTONE_NOISE) for a, b in zip(vr, vr[1:]))
    out = [CheckResult("fabric", f"{name} V_r nonincreasing over N_p", ok, vr, None, MONOTONE_NOISE,
                       detail="N_p = " + ", ".join(str(n) for n in counts))]
    stops = [r for r in sweep.rows if r.outcome is not None and r.outcome.stopped]
    first = stops[0].plies if stops else None
    out.append(CheckResult("fabric", f"{name} stopping N_p <= {max(counts)} exists", first is not None, first,
                           f"<= {max(counts)}"))
    if stops:
        o = stops[0].outcome
        out.append(CheckResult("fabric", f"{name} N_p* <= N_p at threshold", o.perforated_plies <= o.plies,
                               o.perforated_plies, o.plies))
    return out


def block_fabric(sweeps=None):
    """``sweeps`` maps scenario name to a precomputed ply sweep."""
    rc = load_builtin(FABRIC_SCENARIOS[0])
    rep = run_scenario(rc.scenario)
    err = rep.backing.max_energy_error
    out = [CheckResult("fabric", "energy balance N_p = 40", err < ENERGY_RTOL, err, 0.0, ENERGY_RTOL)]

    sweeps = {} if sweeps is None else sweeps
    for name in FABRIC_SCENARIOS:
        sweep = sweeps[name] if name in sweeps else fabric_sweep(name)
        out.extend(_sweep_checks(name, sweep))

    fine = run_backing_like(rc.scenario, rep.handoff, 2 * rc.scenario.solver.n_r)
    v1, v2 = rep.backing.residual_velocity, fine.residual_velocity
    scale = max(v1, v2)
    change = abs(v2 - v1) / scale if scale > 0 else 0.0
    out.append(CheckResult("fabric", "mesh doubling change in V_r", change < MESH_RTOL, [v1, v2], 0.0, MESH_RTOL,
                           detail=f"relative change {change:.4f}"))
    return out


def run_backing_like(scenario, handoff, n_r):
    s = scenario.solver
    return fabric_backing.run_backing(scenario.backing, handoff.impactor(), dt=s.fabric_dt, t_max=s.fabric_t_max,
                                      r_max=s.r_max, n_r=n_r, snapshot_every=None)


def block_determinism():
    rc = load_builtin("ak47_plate_kevlar40")
    a = run_scenario(rc.scenario).to_json()
    b = run_scenario(rc.scenario).to_json()
    return [CheckResult("determinism", "repeated report bytes", a == b, len(a), len(b))]


BLOCKS = {
    "table1": block_table1,
    "fit": block_fit,
    "jet_residuals": block_jet_residuals,
    "asymptotics": block_asymptotics,
    "quadrature": block_quadrature,
    "fgm": block_fgm,
    "fabric": block_fabric,
    "graded_backing": block_graded_backing,
    "determinism": block_determinism,
}
