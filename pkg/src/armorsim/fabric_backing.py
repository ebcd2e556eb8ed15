"""Axisymmetric dynamics of a bonded multi-ply fabric package under a rigid impactor.

Each ply is a membrane discretized on a uniform radial grid with transverse
displacement ``w`` and radial displacement ``u`` at every node. The meridional
strain of a segment is the stretch of its chord, ``sqrt((1 + u')**2 + w'**2) - 1``,
the hoop strain at a node is ``u / r``. Plies carry no compression and no
bending. Neighbouring plies are tied node-by-node by a massless adhesive with a
normal spring ``E_z / h_a`` and a shear spring ``E_s / h_a`` acting on the
relative slip

    s = (u_{n+1} - u_n) + (pitch / 2) * (w'_{n+1} - w'_n).

Failed adhesive links keep only a one-sided contact penalty (ten times the
normal stiffness) so delaminated plies cannot pass through each other.

The impactor is a flat rigid cylinder. Nodes under its face on the front-most
intact ply (and the punched-out discs of the plies already perforated) move
rigidly with it; when a ply tears inside the footprint zone the contact moves
on to the next ply. Time stepping is velocity Verlet, so the energy ledger
closes to O(dt^2) between discrete events, and the energy removed by failures
and by the inelastic pick-up of new plies is booked as dissipated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import csvio
from .errors import CFLViolationError, GeometryError, NonFiniteStateError
from .materials import FabricSpec

log = logging.getLogger(__name__)

PENALTY_FACTOR = 10.0
CFL_SAFETY = 0.5
MIN_NODES = 50
MIN_RADIUS_RATIO = 10.0
BOUNDARY_SIGNAL = 1e-6
OUTCOME_HEADER = ("Np", "t_end_us", "P_mm", "Np_star", "Wc_J", "Vr_mps")


@dataclass
class ImpactorState:
    mass: float
    radius: float
    velocity: float
    depth: float = 0.0
    stopped: bool = False
    perforated: bool = False


@dataclass
class EnergyLedger:
    impactor_kinetic: float
    fabric_kinetic: float
    strain: float
    dissipated: float
    boundary_work: float
    contact_work: float
    initial: float

    @property
    def kinetic(self) -> float:
        return self.impactor_kinetic + self.fabric_kinetic

    @property
    def total(self) -> float:
        return self.kinetic + self.strain + self.dissipated + self.boundary_work

    @property
    def balance_error(self) -> float:
        return self.total - self.initial

    @property
    def relative_error(self) -> float:
        return abs(self.balance_error) / self.initial if self.initial else 0.0


@dataclass
class Snapshot:
    t: float
    depth: float
    velocity: float
    w: np.ndarray
    broken: np.ndarray
    link_failed: np.ndarray

    def to_text(self) -> str:
        lines = [f"# t_s={csvio.fmt(self.t)} P_m={csvio.fmt(self.depth)} V_mps={csvio.fmt(self.velocity)}",
                 "# rows=plies cols=radial nodes; sections: w_m, broken, link_failed"]
        lines.append("# w_m")
        lines += [" ".join(csvio.fmt(float(x)) for x in row) for row in self.w]
        lines.append("# broken")
        lines += [" ".join("1" if b else "0" for b in row) for row in self.broken]
        lines.append("# link_failed")
        lines += [" ".join("1" if b else "0" for b in row) for row in self.link_failed]
        return "\n".join(lines) + "\n"


@dataclass
class FabricState:
    """Discretized package plus impactor coupling; :func:`step` advances it in place."""

    fabric: FabricSpec
    n_r: int
    r_max: float
    dr: float
    r: np.ndarray
    node_area: np.ndarray
    edge_area: np.ndarray
    u: np.ndarray
    w: np.ndarray
    ud: np.ndarray
    wd: np.ndarray
    broken_edge: np.ndarray
    broken_hoop: np.ndarray
    link_failed: np.ndarray
    penalty_armed: np.ndarray
    footprint: np.ndarray
    footprint_zone: np.ndarray
    t: float = 0.0
    contact_ply: int = 0
    slaved: np.ndarray | None = None
    offset: np.ndarray | None = None
    dissipated: float = 0.0
    initial_energy: float = 0.0
    boundary_warned: bool = False
    limit_strain: float = field(default=math.inf)
    stress_scale: float = 1.0

    @property
    def plies(self) -> int:
        return self.w.shape[0]

    @property
    def nodes(self) -> int:
        return self.w.shape[1]

    @property
    def pitch(self) -> float:
        return self.fabric.ply_thickness

    @property
    def node_mass(self) -> np.ndarray:
        return self.fabric.ply_areal_density * self.node_area

    def broken_nodes(self) -> np.ndarray:
        """Per node: the segment it owns (toward larger r) or its hoop ring has failed."""
        out = self.broken_hoop.copy()
        out[:, :-1] |= self.broken_edge
        return out

    def perforated_plies(self) -> np.ndarray:
        return (self.broken_edge & self.footprint_zone[None, :]).any(axis=1)

    def strains(self):
        du = np.diff(self.u, axis=1) / self.dr
        dw = np.diff(self.w, axis=1) / self.dr
        eps_r = np.sqrt((1.0 + du) ** 2 + dw * dw) - 1.0
        eps_t = np.zeros_like(self.u)
        eps_t[:, 1:] = self.u[:, 1:] / self.r[1:]
        return eps_r, eps_t


def wave_speed(fabric: FabricSpec) -> float:
    return math.sqrt(fabric.curve.max_slope / fabric.ply_density)


def cfl_limit(fabric: FabricSpec, dr: float) -> float:
    return CFL_SAFETY * dr / wave_speed(fabric)


def spring_limit(fabric: FabricSpec) -> float:
    """Stability bound of the stiffest adhesive spring pair around one node."""
    if fabric.plies < 2:
        return math.inf
    k = max(fabric.normal_modulus * PENALTY_FACTOR, fabric.shear_modulus) / fabric.adhesive_gap
    omega = math.sqrt(2.0 * k / fabric.ply_areal_density)
    return CFL_SAFETY * 2.0 / omega


def stable_dt(fabric: FabricSpec, dr: float) -> float:
    return min(cfl_limit(fabric, dr), spring_limit(fabric))


def build_mesh(fabric: FabricSpec, d_r: float, r_max: float, n_r: int) -> FabricState:
    """Uniform radial grid on [0, r_max] for every ply, all links intact, at rest."""
    if n_r < MIN_NODES:
        raise GeometryError(f"n_r must be at least {MIN_NODES}, got {n_r}")
    if not d_r > 0:
        raise GeometryError("impactor diameter must be positive")
    if r_max < MIN_RADIUS_RATIO * d_r:
        raise GeometryError(f"R_max = {r_max:.4g} m is below {MIN_RADIUS_RATIO:g} impactor diameters "
                            f"({MIN_RADIUS_RATIO * d_r:.4g} m)")
    plies = fabric.plies
    nn = n_r + 1
    dr = r_max / n_r
    r = np.arange(nn) * dr
    node_area = 2.0 * np.pi * r * dr
    node_area[0] = np.pi * (0.5 * dr) ** 2
    r_mid = (np.arange(n_r) + 0.5) * dr
    edge_area = 2.0 * np.pi * r_mid * dr
    a = 0.5 * d_r
    footprint = r <= a + 1e-12 * dr
    footprint_zone = r_mid <= d_r
    shape = (plies, nn)
    state = FabricState(
        fabric=fabric, n_r=n_r, r_max=r_max, dr=dr, r=r, node_area=node_area, edge_area=edge_area,
        u=np.zeros(shape), w=np.zeros(shape), ud=np.zeros(shape), wd=np.zeros(shape),
        broken_edge=np.zeros((plies, n_r), bool), broken_hoop=np.zeros(shape, bool),
        link_failed=np.zeros((max(plies - 1, 0), nn), bool),
        penalty_armed=np.zeros((max(plies - 1, 0), nn), bool),
        footprint=footprint, footprint_zone=footprint_zone,
        slaved=np.zeros(shape, bool), offset=np.zeros(shape),
        limit_strain=fabric.limit_strain,
    )
    return state


# ---------------------------------------------------------------------------
# forces and energy

def _membrane(state: FabricState):
    """Return (fu, fw, energy) of the ply membranes."""
    fab = state.fabric
    thick = fab.ply_thickness
    dr = state.dr
    du = np.diff(state.u, axis=1) / dr
    dw = np.diff(state.w, axis=1) / dr
    lam = np.sqrt((1.0 + du) ** 2 + dw * dw)
    eps = lam - 1.0
    alive = ~state.broken_edge
    sig = np.where(alive, fab.curve.stress(eps), 0.0)
    coef = state.edge_area * thick * sig / (lam * dr)
    gu = coef * (1.0 + du)
    gw = coef * dw
    fu = np.zeros_like(state.u)
    fw = np.zeros_like(state.w)
    fu[:, :-1] += gu
    fu[:, 1:] -= gu
    fw[:, :-1] += gw
    fw[:, 1:] -= gw
    energy = float(np.sum(state.edge_area * thick * np.where(alive, fab.curve.energy(eps), 0.0)))

    eps_t = state.u[:, 1:] / state.r[1:]
    hoop_alive = ~state.broken_hoop[:, 1:]
    sig_t = np.where(hoop_alive, fab.curve.stress(eps_t), 0.0)
    fu[:, 1:] -= 2.0 * np.pi * dr * thick * sig_t
    energy += float(np.sum(state.node_area[1:] * thick * np.where(hoop_alive, fab.curve.energy(eps_t), 0.0)))
    return fu, fw, energy


def _adhesive(state: FabricState):
    """Return (fu, fw, energy, sigma_z, tau) of the interply adhesive."""
    fu = np.zeros_like(state.u)
    fw = np.zeros_like(state.w)
    if state.plies < 2:
        empty = np.zeros((0, state.nodes))
        return fu, fw, 0.0, empty, empty[:, :-1]
    fab = state.fabric
    ha = fab.adhesive_gap
    kz = fab.normal_modulus / ha
    ks = fab.shear_modulus / ha
    intact = ~state.link_failed

    delta = state.w[1:] - state.w[:-1]
    # a link that fails while compressed keeps k_z until it first reopens, so
    # the stored energy does not jump when the contact penalty takes over
    k_contact = np.where(state.penalty_armed, PENALTY_FACTOR * kz, kz)
    k_eff = np.where(intact, kz, np.where(delta < 0, k_contact, 0.0))
    sigma_z = k_eff * delta
    fz = state.node_area * sigma_z
    fw[1:] -= fz
    fw[:-1] += fz
    energy = float(np.sum(0.5 * state.node_area * k_eff * delta * delta))

    dr = state.dr
    half_pitch = 0.5 * state.pitch
    ubar = 0.5 * (state.u[:, 1:] + state.u[:, :-1])
    slope = np.diff(state.w, axis=1) / dr
    slip = (ubar[1:] - ubar[:-1]) + half_pitch * (slope[1:] - slope[:-1])
    shear_on = intact[:, :-1]
    tau = np.where(shear_on, ks * slip, 0.0)
    g = state.edge_area * tau
    gu = 0.5 * g
    gw = half_pitch * g / dr
    fu[1:, :-1] -= gu
    fu[1:, 1:] -= gu
    fu[:-1, :-1] += gu
    fu[:-1, 1:] += gu
    fw[1:, 1:] -= gw
    fw[1:, :-1] += gw
    fw[:-1, 1:] += gw
    fw[:-1, :-1] -= gw
    energy += float(np.sum(0.5 * state.edge_area * tau * slip))
    return fu, fw, energy, sigma_z, tau


def internal_forces(state: FabricState):
    fu_m, fw_m, e_m = _membrane(state)
    fu_a, fw_a, e_a, sigma_z, tau = _adhesive(state)
    return fu_m + fu_a, fw_m + fw_a, e_m + e_a, sigma_z, tau


def strain_energy(state: FabricState) -> float:
    return _membrane(state)[2] + _adhesive(state)[2]


def kinetic_energy(state: FabricState) -> float:
    m = state.node_mass
    return float(0.5 * np.sum(m * (state.ud**2 + state.wd**2)))


def energy_audit(state: FabricState, impactor: ImpactorState) -> EnergyLedger:
    """Four-way energy split; ``initial`` is the impactor's kinetic energy at first contact."""
    imp_ke = 0.5 * impactor.mass * impactor.velocity**2
    initial = state.initial_energy or imp_ke
    return EnergyLedger(
        impactor_kinetic=imp_ke,
        fabric_kinetic=kinetic_energy(state),
        strain=strain_energy(state),
        dissipated=state.dissipated,
        boundary_work=0.0,  # the clamped rim does not move
        contact_work=initial - imp_ke,
        initial=initial,
    )


# ---------------------------------------------------------------------------
# impactor coupling

def _slave_ply(state: FabricState, ply: int, impactor: ImpactorState):
    """Attach the footprint nodes of ``ply`` to the impactor (perfectly inelastic)."""
    mask = state.footprint
    m = state.node_mass
    before = (0.5 * impactor.mass * impactor.velocity**2 + _slaved_ke(state, impactor)
              + float(np.sum(0.5 * m[mask] * (state.ud[ply, mask] ** 2 + state.wd[ply, mask] ** 2))))
    body = impactor.mass + float(np.sum(m[None, :] * state.slaved))
    p = body * impactor.velocity + float(np.sum(m[mask] * state.wd[ply, mask]))
    body += float(np.sum(m[mask]))
    impactor.velocity = p / body
    state.slaved[ply, mask] = True
    state.offset[ply, mask] = state.w[ply, mask] - impactor.depth
    state.ud[ply, mask] = 0.0
    _sync_slaved(state, impactor)
    after = 0.5 * impactor.mass * impactor.velocity**2 + _slaved_ke(state, impactor)
    state.dissipated += before - after


def _slaved_ke(state, impactor):
    m = state.node_mass
    return float(0.5 * np.sum((m[None, :] * state.slaved)) * impactor.velocity**2)


def _sync_slaved(state: FabricState, impactor: ImpactorState):
    s = state.slaved
    state.w[s] = impactor.depth + state.offset[s]
    state.wd[s] = impactor.velocity
    state.ud[s] = 0.0


def _failure_sweep(state: FabricState, sigma_z=None, tau=None):
    """Break overstrained segments and hoops and fail overstressed links; book the energy."""
    lim = state.limit_strain
    eps_r, eps_t = state.strains()
    new_edge = (~state.broken_edge) & (eps_r >= lim)
    new_hoop = (~state.broken_hoop) & (eps_t >= lim)
    new_link = None
    if state.plies > 1:
        fab = state.fabric
        if sigma_z is None or tau is None:
            _, _, _, sigma_z, tau = _adhesive(state)
        over_z = np.abs(sigma_z) >= fab.normal_limit
        over_s = np.zeros_like(over_z)
        over_s[:, :-1] = np.abs(tau) >= fab.shear_limit
        new_link = (~state.link_failed) & (over_z | over_s)
    if not (new_edge.any() or new_hoop.any() or (new_link is not None and new_link.any())):
        return False
    before = strain_energy(state)
    state.broken_edge |= new_edge
    state.broken_hoop |= new_hoop
    if new_link is not None:
        state.link_failed |= new_link
    state.dissipated += before - strain_energy(state)
    return True


def _arm_penalties(state: FabricState):
    if state.plies > 1:
        state.penalty_armed |= state.link_failed & (state.w[1:] >= state.w[:-1])


def step(state: FabricState, impactor: ImpactorState, dt: float) -> FabricState:
    """Advance the package and the impactor by one velocity-Verlet step of size ``dt``.

    Mutates and returns ``state``; ``impactor`` is updated in place as well.
    """
    dt_max = cfl_limit(state.fabric, state.dr)
    if dt > dt_max * (1 + 1e-12):
        raise CFLViolationError(dt, dt_max)
    if state.plies == 0:
        state.t += dt
        impactor.depth += impactor.velocity * dt
        return state
    m = state.node_mass
    slaved = state.slaved
    body_mass = impactor.mass + float(np.sum(m[None, :] * slaved))

    fu, fw, _, _, _ = internal_forces(state)
    _kick(state, impactor, fu, fw, m, body_mass, 0.5 * dt)
    _apply_constraints(state, impactor)
    state.u += dt * state.ud
    state.w += dt * state.wd
    impactor.depth += dt * impactor.velocity
    _apply_constraints(state, impactor)
    _arm_penalties(state)

    fu, fw, _, sigma_z, tau = internal_forces(state)
    if _failure_sweep(state, sigma_z, tau):
        fu, fw, _, _, _ = internal_forces(state)
    _kick(state, impactor, fu, fw, m, body_mass, 0.5 * dt)
    _apply_constraints(state, impactor)
    state.t += dt

    if not (np.isfinite(state.w).all() and np.isfinite(state.u).all() and math.isfinite(impactor.velocity)):
        raise NonFiniteStateError(f"non-finite field at t = {state.t:.6g} s")
    _check_boundary(state)
    return state


def _kick(state, impactor, fu, fw, m, body_mass, h):
    free_mass = np.where(m > 0, m, 1.0)
    state.ud += h * fu / free_mass
    state.wd += h * fw / free_mass
    if state.slaved.any():
        impactor.velocity += h * float(np.sum(fw[state.slaved])) / body_mass


def _apply_constraints(state: FabricState, impactor: ImpactorState):
    # symmetry axis and clamped rim
    state.u[:, 0] = 0.0
    state.ud[:, 0] = 0.0
    state.u[:, -1] = 0.0
    state.w[:, -1] = 0.0
    state.ud[:, -1] = 0.0
    state.wd[:, -1] = 0.0
    _sync_slaved(state, impactor)


def _check_boundary(state: FabricState):
    if state.boundary_warned:
        return
    peak = float(np.max(np.abs(state.w)))
    if peak > 0 and float(np.max(np.abs(state.w[:, -2]))) > BOUNDARY_SIGNAL * peak:
        state.boundary_warned = True
        log.warning("transverse disturbance reached the clamped rim at t = %.3g s; "
                    "enlarge R_max to keep the panel effectively unbounded", state.t)


# ---------------------------------------------------------------------------
# runs

@dataclass
class BackingOutcome:
    plies: int
    stopped: bool
    perforated: bool
    inconclusive: bool
    t_end: float
    depth: float
    perforated_thickness: float
    perforated_plies: int
    absorbed_energy: float
    residual_velocity: float
    v_in: float
    mass: float
    snapshots: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    max_energy_error: float = 0.0
    boundary_warned: bool = False
    dt: float = 0.0
    steps: int = 0
    broken_history: list = field(default_factory=list)

    @property
    def t_stop(self):
        return self.t_end if self.stopped else None

    @property
    def t_perf(self):
        return self.t_end if self.perforated else None

    def row(self):
        return (self.plies, self.t_end * 1e6, self.depth * 1e3, self.perforated_plies,
                self.absorbed_energy, self.residual_velocity)


def _advance_contact(state: FabricState, impactor: ImpactorState) -> bool:
    """Move contact past torn plies; True once every ply is perforated."""
    perforated = state.perforated_plies()
    while state.contact_ply < state.plies and perforated[state.contact_ply]:
        state.contact_ply += 1
        if state.contact_ply < state.plies:
            _slave_ply(state, state.contact_ply, impactor)
    return state.contact_ply >= state.plies


def run_backing(fabric: FabricSpec, impactor_in: ImpactorState, dt: float | None = None,
                t_max: float = 400e-6, r_max: float | None = None, n_r: int = 200,
                snapshot_every: float | None = 10e-6, audit_every: int = 50) -> BackingOutcome:
    """Simulate the impact until the impactor stops, perforates the package, or ``t_max``.

    ``r_max`` defaults to 15 impactor diameters (at least 0.1 m). With ``dt``
    unset the largest stable step for the mesh is used.
    """
    imp = ImpactorState(impactor_in.mass, impactor_in.radius, impactor_in.velocity, impactor_in.depth)
    d_r = 2.0 * imp.radius
    v_in = imp.velocity
    e0 = 0.5 * imp.mass * v_in**2
    if fabric.plies == 0 or v_in <= 0:
        stopped = v_in <= 0
        return BackingOutcome(plies=fabric.plies, stopped=stopped, perforated=not stopped, inconclusive=False,
                              t_end=0.0, depth=0.0, perforated_thickness=0.0, perforated_plies=0,
                              absorbed_energy=0.0, residual_velocity=max(v_in, 0.0), v_in=v_in,
                              mass=imp.mass)
    if r_max is None:
        r_max = max(15.0 * d_r, 0.1)
    state = build_mesh(fabric, d_r, r_max, n_r)
    state.initial_energy = e0
    if dt is None:
        dt = stable_dt(fabric, state.dr)
    _slave_ply(state, 0, imp)

    snapshots, history, broken_history = [], [], []
    next_snap = 0.0
    worst = 0.0
    n = 0
    stopped = perforated = False
    while True:
        if snapshot_every is not None and state.t >= next_snap - 1e-15:
            snapshots.append(Snapshot(state.t, imp.depth, imp.velocity, state.w.copy(),
                                      state.broken_nodes(), state.link_failed.copy()))
            next_snap += snapshot_every
        step(state, imp, dt)
        n += 1
        if _advance_contact(state, imp):
            perforated = True
        if n % audit_every == 0 or perforated:
            ledger = energy_audit(state, imp)
            worst = max(worst, ledger.relative_error)
            history.append((state.t, ledger))
            broken_history.append((state.t, int(state.broken_edge.sum() + state.broken_hoop.sum()),
                                    int(state.link_failed.sum())))
        if perforated:
            break
        if imp.velocity <= 0:
            stopped = True
            break
        if state.t >= t_max:
            break

    ledger = energy_audit(state, imp)
    worst = max(worst, ledger.relative_error)
    history.append((state.t, ledger))
    snapshots.append(Snapshot(state.t, imp.depth, imp.velocity, state.w.copy(),
                              state.broken_nodes(), state.link_failed.copy()))
    v_r = max(imp.velocity, 0.0) if perforated else 0.0
    if not (stopped or perforated):
        log.warning("backing run reached t_max = %.3g s without stopping or perforation", t_max)
        v_r = imp.velocity
    n_star = int(state.perforated_plies().sum())
    return BackingOutcome(
        plies=fabric.plies, stopped=stopped, perforated=perforated, inconclusive=not (stopped or perforated),
        t_end=state.t, depth=imp.depth, perforated_thickness=n_star * state.pitch,
        perforated_plies=n_star, absorbed_energy=0.5 * imp.mass * (v_in**2 - v_r**2),
        residual_velocity=v_r, v_in=v_in, mass=imp.mass, snapshots=snapshots, energy_history=history,
        max_energy_error=worst, boundary_warned=state.boundary_warned, dt=dt, steps=n,
        broken_history=broken_history,
    )


@dataclass
class SweepRow:
    plies: int
    outcome: BackingOutcome | None
    error: str = ""


def ply_sweep(fabric: FabricSpec, impactor_in: ImpactorState, ply_counts, **run_kw) -> list[SweepRow]:
    """Independent runs over ply counts; per-ply areal density is kept from ``fabric``."""
    counts = list(ply_counts)
    if not counts:
        raise ValueError("empty ply range")
    if min(counts) < 0 or max(counts) > 200:
        raise ValueError("ply counts must lie in [0, 200]")
    rows = []
    for n in counts:
        try:
            out = run_backing(fabric.with_plies(n), impactor_in, **run_kw)
            rows.append(SweepRow(n, out))
        except Exception as exc:  # recorded per row, the sweep goes on
            rows.append(SweepRow(n, None, f"{type(exc).__name__}: {exc}"))
    return rows
