"""Quasi-steady plastic-flow jet model of penetration into a thick facing.

At every time step the seven unknowns of the flow (penetration and erosion
speeds, the two backward-jet speeds and the radii R > R1 > R0 of the flow zone,
mushroom cup and crater) are closed by a fixed-point iteration on the two
backward-jet plastic-work factors. The closure then drives an explicit
integration of projectile length, velocity, crater depth and crater volume.

Sign conventions follow the usual stagnation-point frame: ``vt_minus`` is the
penetration velocity, ``vp_minus`` the erosion velocity, ``vt_plus``/``vp_plus``
the target and projectile backward jets.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import csvio
from .errors import ArmorSimError, ConvergenceError, ModelBreakdownError
from .materials import ProjectileSpec, ThickFacingSpec, eval_profile
from .quadrature import mean_plastic_work_pair

log = logging.getLogger(__name__)

DEFAULT_DT = 10e-9
ITERATION_RTOL = 1e-6
MAX_ITERATIONS = 100
RELAXATION = 0.5
MAX_VELOCITY_CHANGE = 0.01
# the rod counts as eroded below this fraction of L_0; the deceleration grows
# like 1/L_r, so step halving alone would only approach zero length
ERODED_FRACTION = 1e-6


class StopReason(str, Enum):
    BETA_GE_1 = "beta_ge_1"
    V_LE_0 = "V_le_0"
    VT_MINUS_LE_0 = "Vt_minus_le_0"
    VP_MINUS_LE_0 = "Vp_minus_le_0"
    ERODED = "eroded"
    IMAGINARY_BRANCH = "imaginary_branch"
    FACING_BREACHED = "facing_breached"
    MODEL_BREAKDOWN = "model_breakdown"


class PenetrationStop(ArmorSimError):
    """Raised by the closure when one of the termination conditions fires."""

    def __init__(self, reason: StopReason, detail: str = ""):
        self.reason = StopReason(reason)
        self.detail = detail
        super().__init__(f"{self.reason.value}: {detail}" if detail else self.reason.value)


class LambdaVariant(str, Enum):
    """How the projectile-jet stretch ratio is formed.

    GEOMETRIC uses the crater radius R0 as the inner radius of the projectile
    jet; MIRRORED reuses the target-jet expression R^2 / (lam_z * R1^2).
    """

    GEOMETRIC = "geometric"
    MIRRORED = "mirrored"


# ---------------------------------------------------------------------------
# single-state closure

def solve_interface(v, rho_t, rho_p, sigma_t, sigma_p):
    """Penetration and erosion speeds from the modified Bernoulli balance.

    Solves rho_t*vt^2 + 2*sigma_t = rho_p*(v - vt)^2 + 2*sigma_p for the root in
    [0, v].
    """
    if not v > 0:
        raise PenetrationStop(StopReason.V_LE_0, f"V = {v!r}")
    beta = 2.0 * (sigma_t - sigma_p) / (rho_p * v * v)
    if beta >= 1.0:
        raise PenetrationStop(StopReason.BETA_GE_1, f"beta = {beta:.6g}")
    # (rho_t - rho_p) vt^2 + 2 rho_p v vt - rho_p v^2 + 2 (sigma_t - sigma_p) = 0
    a = rho_t - rho_p
    b = 2.0 * rho_p * v
    c = -rho_p * v * v + 2.0 * (sigma_t - sigma_p)
    if a == 0.0:
        vt = -c / b
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            raise PenetrationStop(StopReason.IMAGINARY_BRANCH, f"interface discriminant = {disc:.6g}")
        # numerically stable form of the root with vt in [0, v]
        vt = 2.0 * (-c) / (b + math.sqrt(disc))
    return vt, v - vt


def interface_closed_form(v, rho_t, rho_p, sigma_t, sigma_p):
    """Closed-form root with alpha = rho_t/rho_p and beta = 2(sigma_t - sigma_p)/(rho_p v^2)."""
    alpha = rho_t / rho_p
    gamma = 1.0 - alpha
    beta = 2.0 * (sigma_t - sigma_p) / (rho_p * v * v)
    if alpha == 1.0:
        return 0.5 * v * (1.0 - beta), 0.5 * v * (1.0 + beta)
    root = math.sqrt(1.0 - gamma * (1.0 - beta))
    return v * (1.0 - root) / gamma, v * (root - alpha) / gamma


def backward_jet_speeds(vt_minus, vp_minus, sigma_t, sigma_p, sigma_t_plus, sigma_p_plus, rho_t, rho_p):
    rad_t = vt_minus**2 + 2.0 * (sigma_t - sigma_t_plus) / rho_t
    rad_p = vp_minus**2 + 2.0 * (sigma_p - sigma_p_plus) / rho_p
    if rad_t < 0:
        raise PenetrationStop(StopReason.IMAGINARY_BRANCH, f"target backward-jet radicand = {rad_t:.6g}")
    if rad_p < 0:
        raise PenetrationStop(StopReason.IMAGINARY_BRANCH, f"projectile backward-jet radicand = {rad_p:.6g}")
    return math.sqrt(rad_t), math.sqrt(rad_p)


def solve_radii(vt_minus, vp_minus, vt_plus, vp_plus, sigma_t, sigma_p, rho_t, rho_p, r0):
    """Flow-zone, cup and crater radii from momentum and incompressibility."""
    if min(vt_minus, vp_minus, vt_plus, vp_plus) <= 0:
        raise ModelBreakdownError("jet speed", min(vt_minus, vp_minus, vt_plus, vp_plus))
    a = vt_minus / vt_plus
    b = vp_minus / vp_plus
    num = sigma_p + rho_p * vp_minus**2 + b * rho_p * vp_plus**2
    den = sigma_t + rho_t * vt_minus**2 - a * rho_t * vt_plus**2
    if den <= 0:
        raise ModelBreakdownError("momentum denominator", den)
    R2 = r0 * r0 * num / den
    R1_2 = R2 * (1.0 - a)
    if R1_2 <= 0:
        raise ModelBreakdownError("R1^2", R1_2)
    R0_2 = R1_2 - b * r0 * r0
    if R0_2 <= 0:
        raise ModelBreakdownError("R0^2", R0_2)
    return math.sqrt(R2), math.sqrt(R1_2), math.sqrt(R0_2)


def stretch_ratios(R, R1, R0, r0, variant=LambdaVariant.GEOMETRIC):
    """((lam, lam_z) of the target jet, (lam, lam_z) of the projectile jet)."""
    R2, R12, R02 = R * R, R1 * R1, R0 * R0
    lz_t = R2 / (R2 - R12)
    lam_t = R2 / (lz_t * R12)
    lz_p = r0 * r0 / (R12 - R02)
    if LambdaVariant(variant) is LambdaVariant.GEOMETRIC:
        lam_p = r0 * r0 / (lz_p * R02)
    else:
        lam_p = R2 / (lz_p * R12)
    for name, value in (("lambda_z(target)", lz_t), ("lambda(target)", lam_t),
                        ("lambda_z(projectile)", lz_p), ("lambda(projectile)", lam_p)):
        if not value > 0 or not math.isfinite(value):
            raise ModelBreakdownError(name, value)
    return (lam_t, lz_t), (lam_p, lz_p)


def plastic_work_factors(R, R1, R0, r0, sigma_y_t, sigma_y_p, variant=LambdaVariant.GEOMETRIC):
    """Backward-jet plastic-work factors (sigma_t+, sigma_p+)."""
    (lam_t, lz_t), (lam_p, lz_p) = stretch_ratios(R, R1, R0, r0, variant)
    k = mean_plastic_work_pair(np.array([lam_t, lam_p]), np.array([lz_t, lz_p]))
    return sigma_y_t * float(k[0]), sigma_y_p * float(k[1])


@dataclass(frozen=True)
class JetClosure:
    V: float
    vt_minus: float
    vp_minus: float
    vt_plus: float
    vp_plus: float
    R: float
    R1: float
    R0: float
    sigma_t_plus: float
    sigma_p_plus: float
    sigma_t: float
    sigma_p: float
    rho_t: float
    rho_p: float
    r0: float
    iterations: int = 0

    def residuals(self) -> dict[str, float]:
        """Relative residuals of the interface, Bernoulli, momentum and continuity balances."""
        rt, rp, r0 = self.rho_t, self.rho_p, self.r0
        R2, R12, R02 = self.R**2, self.R1**2, self.R0**2

        def rel(lhs, rhs):
            scale = max(abs(lhs), abs(rhs))
            return abs(lhs - rhs) / scale if scale else 0.0

        lhs6 = R2 * (self.sigma_t + rt * self.vt_minus**2)
        rhs6 = ((R2 - R12) * rt * self.vt_plus**2 + r0 * r0 * (self.sigma_p + rp * self.vp_minus**2)
                + (R12 - R02) * rp * self.vp_plus**2)
        return {
            "interface": rel(self.vp_minus, self.V - self.vt_minus),
            "bernoulli": rel(rt * self.vt_minus**2 + 2 * self.sigma_t, rp * self.vp_minus**2 + 2 * self.sigma_p),
            "target_jet": rel(rt * self.vt_minus**2 + 2 * self.sigma_t,
                              rt * self.vt_plus**2 + 2 * self.sigma_t_plus),
            "projectile_jet": rel(rp * self.vp_minus**2 + 2 * self.sigma_p,
                                  rp * self.vp_plus**2 + 2 * self.sigma_p_plus),
            "momentum": rel(lhs6, rhs6),
            "target_continuity": rel(R2 * self.vt_minus, (R2 - R12) * self.vt_plus),
            "projectile_continuity": rel(r0 * r0 * self.vp_minus, (R12 - R02) * self.vp_plus),
        }

    def max_residual(self) -> float:
        return max(self.residuals().values())


def converge_step(V, P, proj: ProjectileSpec, facing: ThickFacingSpec, initial=None,
                  rtol=ITERATION_RTOL, max_iter=MAX_ITERATIONS,
                  variant=LambdaVariant.GEOMETRIC) -> JetClosure:
    """Close the seven flow unknowns at velocity ``V`` and depth ``P``.

    The plastic-work factors start from the static yield limits (or from
    ``initial``) and are iterated until their relative change drops below
    ``rtol``. Once an update flips sign relative to the previous one the
    iteration switches to under-relaxation with factor 0.5.
    """
    sy_t, s_t = eval_profile(facing.profile, P)
    sy_p, s_p = proj.yield_strength, proj.dynamic_strength
    rho_t, rho_p, r0 = facing.density, proj.density, proj.radius

    vt, vp = solve_interface(V, rho_t, rho_p, s_t, s_p)
    if vt <= 0:
        raise PenetrationStop(StopReason.VT_MINUS_LE_0, f"Vt- = {vt:.6g}")
    if vp <= 0:
        raise PenetrationStop(StopReason.VP_MINUS_LE_0, f"Vp- = {vp:.6g}")

    if initial is None:
        st_plus, sp_plus = sy_t, sy_p
    elif isinstance(initial, JetClosure):
        st_plus, sp_plus = initial.sigma_t_plus, initial.sigma_p_plus
    else:
        st_plus, sp_plus = initial

    weight = 1.0
    prev = None
    for it in range(1, max_iter + 1):
        vtp, vpp = backward_jet_speeds(vt, vp, s_t, s_p, st_plus, sp_plus, rho_t, rho_p)
        R, R1, R0 = solve_radii(vt, vp, vtp, vpp, s_t, s_p, rho_t, rho_p, r0)
        new_t, new_p = plastic_work_factors(R, R1, R0, r0, sy_t, sy_p, variant)
        d_t, d_p = new_t - st_plus, new_p - sp_plus
        change = max(abs(d_t) / st_plus if st_plus else abs(d_t),
                     abs(d_p) / sp_plus if sp_plus else abs(d_p))
        if change <= rtol:
            return JetClosure(V, vt, vp, vtp, vpp, R, R1, R0, st_plus, sp_plus, s_t, s_p,
                              rho_t, rho_p, r0, it)
        if prev is not None and (d_t * prev[0] < 0 or d_p * prev[1] < 0):
            weight = RELAXATION
        prev = (d_t, d_p)
        st_plus += weight * d_t
        sp_plus += weight * d_p
    raise ConvergenceError(f"plastic-work iteration did not converge in {max_iter} iterations "
                           f"at V = {V:.6g} m/s, P = {P:.6g} m", max_iter)


# ---------------------------------------------------------------------------
# transient integration

TRACE_COLUMNS = ("t_s", "V_mps", "Vt_minus", "Vp_minus", "Vt_plus", "Vp_plus",
                 "R_m", "R1_m", "R0_m", "Lr_m", "P_m", "Q_m3")
NORMALIZED_COLUMNS = ("t_s", "P_bar", "Lr_bar", "V_bar", "Vt_minus_bar", "Vp_minus_bar",
                      "Vt_plus_bar", "Vp_plus_bar", "Q_bar")


@dataclass(frozen=True)
class TransientState:
    t: float
    V: float
    length: float
    mass: float
    P: float
    Q: float


@dataclass(frozen=True)
class ExitState:
    """Projectile state when it leaves a finite facing."""

    velocity: float
    mass: float
    diameter: float
    time: float
    depth: float


@dataclass
class PenetrationTrace:
    """Time history of a jet-model run.

    ``rows`` holds one row per recorded step with the columns of
    ``TRACE_COLUMNS``; closure columns are NaN on the terminal row when the
    closure could not be formed there.
    """

    projectile: ProjectileSpec
    facing: ThickFacingSpec
    v0: float
    dt: float
    rows: np.ndarray
    stop: StopReason
    detail: str = ""
    exit: ExitState | None = None
    steps: int = 0
    iterations: list = field(default_factory=list)
    max_residual: float = 0.0
    dt_halvings: int = 0

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, TRACE_COLUMNS.index(name)]

    @property
    def final(self) -> TransientState:
        t, V, lr, P, Q = (self.rows[-1, TRACE_COLUMNS.index(c)] for c in ("t_s", "V_mps", "Lr_m", "P_m", "Q_m3"))
        p = self.projectile
        return TransientState(t, V, lr, math.pi * p.radius**2 * p.density * lr, P, Q)

    @property
    def breached(self) -> bool:
        return self.stop is StopReason.FACING_BREACHED

    def trailer(self) -> str:
        text = f"stop={self.stop.value}"
        if self.detail:
            text += f" detail={self.detail}"
        if self.exit is not None:
            e = self.exit
            text += (f" exit_V={csvio.fmt(e.velocity)} exit_m={csvio.fmt(e.mass)}"
                     f" exit_d={csvio.fmt(e.diameter)}")
        return text

    def to_csv(self, path_or_buffer):
        csvio.write_rows(path_or_buffer, TRACE_COLUMNS, self.rows.tolist(), trailer=self.trailer())

    def normalized(self) -> np.ndarray:
        return normalized_trace(self)

    def normalized_to_csv(self, path_or_buffer):
        csvio.write_rows(path_or_buffer, NORMALIZED_COLUMNS, normalized_trace(self).tolist(),
                         trailer=self.trailer())


def normalized_trace(trace: PenetrationTrace) -> np.ndarray:
    """Depth and length over L_0, speeds over V_0, volume over the rod volume."""
    p = trace.projectile
    L0, V0 = p.length, trace.v0
    q = math.pi * p.radius**2 * L0
    c = trace.column
    return np.column_stack([
        c("t_s"), c("P_m") / L0, c("Lr_m") / L0, c("V_mps") / V0,
        c("Vt_minus") / V0, c("Vp_minus") / V0, c("Vt_plus") / V0, c("Vp_plus") / V0,
        c("Q_m3") / q,
    ])


def _row(t, V, cl, L, P, Q):
    if cl is None:
        nan = math.nan
        return (t, V, nan, nan, nan, nan, nan, nan, nan, L, P, Q)
    return (t, V, cl.vt_minus, cl.vp_minus, cl.vt_plus, cl.vp_plus, cl.R, cl.R1, cl.R0, L, P, Q)


def integrate(proj: ProjectileSpec, facing: ThickFacingSpec, v0: float, dt: float = DEFAULT_DT,
              t_max: float = 1e-3, record_every: int = 1, warm_start: bool = False,
              variant=LambdaVariant.GEOMETRIC, rtol=ITERATION_RTOL, max_iter=MAX_ITERATIONS,
              closure_hook=None) -> PenetrationTrace:
    """Explicit time stepping of the eroding-rod penetration.

    Each step closes the flow at the current (V, P) and then advances

        L_r -= Vp- dt,  P += Vt- dt,  Q += pi R0^2 Vt- dt,
        V   += -sigma_p / (rho_p L_r) dt.

    A step whose velocity change exceeds 1 % of V is retried with half the
    step. ``warm_start`` seeds each closure from the previous one instead of the
    static yield limits. ``closure_hook`` is called with every converged closure.
    """
    if not v0 > 0:
        raise ValueError("impact velocity must be positive")
    if not dt > 0:
        raise ValueError("time step must be positive")
    rho_p, r0 = proj.density, proj.radius
    s_p = proj.dynamic_strength
    t, V, L, P, Q = 0.0, float(v0), proj.length, 0.0, 0.0
    rows = []
    iterations = []
    worst = 0.0
    halvings = 0
    prev = None
    step = 0
    stop, detail, exit_state = None, "", None
    last_closure = None

    while True:
        if V <= 0:
            stop, detail = StopReason.V_LE_0, f"V = {V:.6g}"
            rows.append(_row(t, V, None, L, P, Q))
            break
        try:
            cl = converge_step(V, P, proj, facing, initial=prev if warm_start else None,
                               rtol=rtol, max_iter=max_iter, variant=variant)
        except PenetrationStop as exc:
            stop, detail = exc.reason, exc.detail
            rows.append(_row(t, V, None, L, P, Q))
            break
        except ModelBreakdownError as exc:
            stop, detail = StopReason.MODEL_BREAKDOWN, f"{exc.quantity} = {exc.value:.6g}"
            rows.append(_row(t, V, None, L, P, Q))
            break
        if closure_hook is not None:
            closure_hook(cl)
        prev = cl
        last_closure = cl
        iterations.append(cl.iterations)
        worst = max(worst, cl.max_residual())
        if step % record_every == 0:
            rows.append(_row(t, V, cl, L, P, Q))

        accel = -s_p / (rho_p * L)
        while abs(accel * dt) > MAX_VELOCITY_CHANGE * V:
            dt *= 0.5
            halvings += 1
            log.info("velocity change above 1%% at t=%.6g s; time step halved to %.3e s", t, dt)
        L -= cl.vp_minus * dt
        P += cl.vt_minus * dt
        Q += math.pi * cl.R0**2 * cl.vt_minus * dt
        V += accel * dt
        t += dt
        step += 1

        if L <= ERODED_FRACTION * proj.length:
            stop, detail = StopReason.ERODED, f"L_r = {L:.6g}"
            rows.append(_row(t, V, None, max(L, 0.0), P, Q))
            L = max(L, 0.0)
            break
        if P >= facing.thickness:
            stop = StopReason.FACING_BREACHED
            detail = f"P = {P:.6g}"
            exit_state = ExitState(velocity=V, mass=math.pi * r0 * r0 * rho_p * L,
                                   diameter=2.0 * last_closure.R1, time=t, depth=P)
            rows.append(_row(t, V, last_closure, L, P, Q))
            break
        if t >= t_max:
            raise ConvergenceError(f"no termination before t_max = {t_max:.3g} s", step)

    return PenetrationTrace(projectile=proj, facing=facing, v0=float(v0), dt=dt,
                            rows=np.array(rows, dtype=float), stop=stop, detail=detail,
                            exit=exit_state, steps=step, iterations=iterations,
                            max_residual=worst, dt_halvings=halvings)
