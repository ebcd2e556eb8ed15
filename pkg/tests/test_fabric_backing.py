import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from armorsim import fabric_backing as fb
from armorsim.errors import CFLViolationError, GeometryError
from armorsim.fabric_backing import ImpactorState, build_mesh, energy_audit, run_backing, step
from armorsim.materials import kevlar29

AK_EXIT = dict(mass=3.0e-3, radius=3.6e-3)


def elastic(fabric):
    return replace(fabric, tensile_limit=math.inf, shear_limit=math.inf, normal_limit=math.inf)


def resting_impactor(radius=2e-3):
    return ImpactorState(mass=1.0, radius=radius, velocity=0.0)


def test_mesh_shape_and_spacing():
    state = build_mesh(kevlar29(40), 7.2e-3, 0.108, 200)
    assert state.w.shape == (40, 201)
    assert state.dr == 0.108 / 200
    assert not state.broken_edge.any() and not state.link_failed.any()
    assert state.link_failed.shape == (39, 201)


def test_mesh_rejects_small_panel():
    with pytest.raises(GeometryError):
        build_mesh(kevlar29(40), 0.02, 0.1, 200)


def test_mesh_rejects_coarse_grid():
    with pytest.raises(GeometryError):
        build_mesh(kevlar29(40), 7.2e-3, 0.108, 20)


def test_node_areas_tile_the_disc():
    state = build_mesh(kevlar29(2), 4e-3, 0.05, 100)
    total = state.node_area.sum()
    # the rim node carries a full ring; the disc plus half a ring beyond R_max
    assert total == pytest.approx(math.pi * (0.05 + 0.5 * state.dr) ** 2, rel=1e-3)


def test_stable_step_respects_cfl():
    fab = kevlar29(40)
    dr = 0.108 / 200
    assert fb.stable_dt(fab, dr) <= fb.cfl_limit(fab, dr)
    assert fb.cfl_limit(fab, dr) == pytest.approx(0.5 * dr / math.sqrt(70e9 / 1440))


def test_cfl_violation_raises():
    state = build_mesh(kevlar29(2), 4e-3, 0.05, 100)
    with pytest.raises(CFLViolationError):
        step(state, resting_impactor(), 2 * fb.cfl_limit(state.fabric, state.dr))


def test_zero_velocity_equilibrium():
    state = build_mesh(kevlar29(5), 4e-3, 0.05, 60)
    imp = resting_impactor()
    fu, fw, energy, _, _ = fb.internal_forces(state)
    assert not fu.any() and not fw.any() and energy == 0.0
    dt = fb.stable_dt(state.fabric, state.dr)
    for _ in range(20):
        step(state, imp, dt)
    assert not state.w.any() and not state.u.any() and not state.wd.any()


def test_audit_at_first_contact():
    state = build_mesh(kevlar29(10), 7.2e-3, 0.108, 200)
    imp = ImpactorState(velocity=567.0, **AK_EXIT)
    ledger = energy_audit(state, imp)
    assert ledger.impactor_kinetic == pytest.approx(0.5 * 3e-3 * 567.0**2)
    assert ledger.fabric_kinetic == ledger.strain == ledger.dissipated == ledger.contact_work == 0.0
    assert ledger.relative_error == 0.0


def test_forces_are_energy_gradient():
    fab = kevlar29(3)
    state = build_mesh(fab, 4e-3, 0.05, 60)
    rng = np.random.default_rng(7)
    state.w[:] = 1e-4 * rng.standard_normal(state.w.shape)
    state.u[:] = 2e-5 * rng.standard_normal(state.u.shape)
    state.u[:, 0] = 0.0
    state.link_failed[0, 10:20] = True
    state.penalty_armed[0, 10:15] = True
    fu, fw, _, _, _ = fb.internal_forces(state)
    h = 1e-10
    for arr, force in ((state.w, fw), (state.u, fu)):
        for idx in [(0, 5), (1, 12), (2, 30), (1, 17), (0, 40)]:
            old = arr[idx]
            arr[idx] = old + h
            ep = fb.strain_energy(state)
            arr[idx] = old - h
            em = fb.strain_energy(state)
            arr[idx] = old
            assert force[idx] == pytest.approx(-(ep - em) / (2 * h), rel=1e-4, abs=1e-3)


def _oracle_forces(q, r, dr, node_area, edge_area, h, E):
    """Single-ply membrane forces, loop by loop, from the strain energy."""
    n = len(r)
    u, w = q[:n], q[n:]
    fu = np.zeros(n)
    fw = np.zeros(n)
    for e in range(n - 1):
        a = 1 + (u[e + 1] - u[e]) / dr
        b = (w[e + 1] - w[e]) / dr
        stretch = math.hypot(a, b)
        sigma = E * max(stretch - 1.0, 0.0)
        t = edge_area[e] * h * sigma / (stretch * dr)
        fu[e] += t * a
        fu[e + 1] -= t * a
        fw[e] += t * b
        fw[e + 1] -= t * b
    for i in range(1, n):
        sigma = E * max(u[i] / r[i], 0.0)
        fu[i] -= node_area[i] * h * sigma / r[i]
    return fu, fw


def test_single_ply_matches_independent_solver():
    fab = elastic(kevlar29(1))
    state = build_mesh(fab, 4e-3, 0.05, 50)
    c = fb.wave_speed(fab)
    state.wd[0, :3] = 100.0
    w0 = state.wd[0].copy()

    E, h = 70e9, fab.ply_thickness
    mass = fab.ply_areal_density * state.node_area
    n = state.nodes

    def rhs(_, y):
        q, v = y[: 2 * n], y[2 * n:]
        fu, fw = _oracle_forces(q, state.r, state.dr, state.node_area, state.edge_area, h, E)
        acc = np.concatenate([fu, fw]) / np.concatenate([mass, mass])
        # axis has no radial motion; the rim is clamped
        for k in (0, n - 1, 2 * n - 1):
            acc[k] = 0.0
        return np.concatenate([v, acc])

    t_end = 0.3 * state.r_max / c
    y0 = np.concatenate([np.zeros(2 * n), np.zeros(n), w0])
    ref = solve_ivp(rhs, (0, t_end), y0, method="DOP853", rtol=1e-10, atol=1e-14).y[:, -1]

    dt = fb.cfl_limit(fab, state.dr) / 8
    imp = resting_impactor()
    steps = int(round(t_end / dt))
    dt = t_end / steps
    for _ in range(steps):
        step(state, imp, dt)
    w_ref = ref[n: 2 * n]
    scale = np.abs(w_ref).max()
    assert np.abs(state.w[0] - w_ref).max() <= 1e-3 * scale

    # the transverse disturbance has not outrun the longitudinal wave
    front = state.r[np.abs(w_ref) > 1e-3 * scale].max()
    assert front <= c * t_end + 2 * state.dr


def test_symmetric_data_stays_axisymmetric_and_finite():
    state = build_mesh(elastic(kevlar29(2)), 4e-3, 0.05, 60)
    state.wd[:, :4] = 50.0
    dt = fb.stable_dt(state.fabric, state.dr)
    for _ in range(100):
        step(state, resting_impactor(), dt)
    assert np.isfinite(state.w).all()
    assert state.u[:, 0].tolist() == [0.0, 0.0]
    assert not state.w[:, -1].any()


def test_zero_velocity_impactor_stops_immediately():
    out = run_backing(kevlar29(40), ImpactorState(velocity=0.0, **AK_EXIT))
    assert out.stopped and out.perforated_plies == 0 and out.absorbed_energy == 0.0


def test_empty_package_passes_projectile():
    out = run_backing(kevlar29().with_plies(0), ImpactorState(velocity=567.0, **AK_EXIT))
    assert out.perforated and out.t_end == 0.0 and out.residual_velocity == 567.0


def test_infinite_limits_never_fail():
    fab = elastic(kevlar29(5))
    out = run_backing(fab, ImpactorState(velocity=567.0, **AK_EXIT), t_max=10e-6, snapshot_every=None)
    assert out.inconclusive
    assert out.broken_history[-1][1:] == (0, 0)
    assert out.perforated_plies == 0
    assert out.max_energy_error < 0.01


def test_elastic_run_dissipates_only_the_contact_merge():
    fab = elastic(kevlar29(3))
    state = build_mesh(fab, 7.2e-3, 0.108, 200)
    imp = ImpactorState(velocity=50.0, **AK_EXIT)
    state.initial_energy = 0.5 * imp.mass * imp.velocity**2
    fb._slave_ply(state, 0, imp)
    merge_loss = state.dissipated
    assert merge_loss > 0
    dt = fb.stable_dt(fab, state.dr)
    for _ in range(300):
        step(state, imp, dt)
    assert state.dissipated == merge_loss
    assert energy_audit(state, imp).relative_error < 1e-3


@pytest.fixture(scope="module")
def ten_ply_run():
    return run_backing(kevlar29(10), ImpactorState(velocity=567.0, **AK_EXIT))


def test_run_outcome_invariants(ten_ply_run):
    out = ten_ply_run
    assert out.perforated_plies <= out.plies
    assert out.absorbed_energy == pytest.approx(0.5 * out.mass * (out.v_in**2 - out.residual_velocity**2))
    assert out.max_energy_error < 0.01
    assert 0 <= out.residual_velocity < out.v_in


def test_damage_is_irreversible(ten_ply_run):
    broken = [b for _, b, _ in ten_ply_run.broken_history]
    links = [k for _, _, k in ten_ply_run.broken_history]
    assert broken == sorted(broken) and links == sorted(links)


def test_energy_history_within_tolerance(ten_ply_run):
    assert all(led.relative_error < 0.01 for _, led in ten_ply_run.energy_history)
    times = [t for t, _ in ten_ply_run.energy_history]
    assert times == sorted(times)


def test_snapshot_text(ten_ply_run):
    snap = ten_ply_run.snapshots[0]
    text = snap.to_text()
    assert text.startswith("#")
    sections, current = {}, None
    for line in text.splitlines():
        if line.startswith("# ") and " " not in line[2:]:
            current = sections.setdefault(line[2:], [])
        elif not line.startswith("#"):
            current.append([float(x) for x in line.split()])
    n, nodes = ten_ply_run.plies, snap.w.shape[1]
    assert np.array(sections["w_m"]).shape == (n, nodes)
    assert np.array(sections["broken"]).shape == (n, nodes)
    assert np.array(sections["link_failed"]).shape == (n - 1, nodes)
    np.testing.assert_array_equal(np.array(sections["w_m"]), snap.w)


def test_ply_sweep_rows_and_errors():
    with pytest.raises(ValueError):
        fb.ply_sweep(kevlar29(), ImpactorState(velocity=567.0, **AK_EXIT), [])
    with pytest.raises(ValueError):
        fb.ply_sweep(kevlar29(), ImpactorState(velocity=567.0, **AK_EXIT), [0, 250])
    rows = fb.ply_sweep(kevlar29(), ImpactorState(velocity=567.0, **AK_EXIT), [0, 2, 4], n_r=30)
    assert [r.plies for r in rows] == [0, 2, 4]
    assert rows[0].outcome is not None
    assert rows[1].outcome is None and "GeometryError" in rows[1].error


def test_residual_velocity_nonincreasing_small_sweep():
    rows = fb.ply_sweep(kevlar29(), ImpactorState(velocity=567.0, **AK_EXIT), [0, 2, 4, 8], snapshot_every=None)
    vr = [r.outcome.residual_velocity for r in rows]
    assert all(b <= a * 1.01 for a, b in zip(vr, vr[1:]))
