"""Perforation of a thin hard-steel facing by an energy balance.

The plastic work of perforation is taken proportional to ``f * BH * h * d**2``;
equating it with the bullet's kinetic energy gives the ballistic limit

    V_bl**2 = f * BH * h * d**2 / m,     V_rc = sqrt(V_0**2 - V_bl**2).

BH is the raw Brinell number as tabulated, lengths in metres and mass in kg.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from . import csvio
from .errors import FitError, InsufficientDataError
from .materials import ProjectileSpec, ThinFacingSpec

SHOT_HEADER = ("h_m", "BH", "V0_mps", "Vr_mps")
FIT_HEADER = ("series", "V0", "Vr_meas", "Vrc_calc", "ratio")

GOLDEN_BRACKET = (1.0e6, 1.0e9)


@dataclass(frozen=True)
class ShotRecord:
    thickness: float
    hardness: float
    v0: float
    vr: float | None = None

    def __post_init__(self):
        if not self.v0 > 0:
            raise ValueError("impact velocity must be positive")
        if self.vr is not None and not (0 <= self.vr < self.v0):
            raise ValueError("measured residual velocity must satisfy 0 <= Vr < V0")

    @property
    def facing(self) -> ThinFacingSpec:
        return ThinFacingSpec(self.thickness, self.hardness)


@dataclass(frozen=True)
class PerforationResult:
    ballistic_limit: float
    residual_velocity: float
    residual_diameter: float
    residual_mass: float
    perforated: bool


def _limit_sq(f, hardness, thickness, diameter, mass):
    return f * hardness * thickness * diameter**2 / mass


def ballistic_limit(proj: ProjectileSpec, facing: ThinFacingSpec, factor: float | None = None) -> float:
    f = proj.perforation_factor if factor is None else factor
    if f is None:
        raise ValueError(f"projectile {proj.name!r} has no perforation factor")
    return math.sqrt(_limit_sq(f, facing.hardness, facing.thickness, proj.diameter, proj.mass))


def perforate_thin(proj: ProjectileSpec, facing: ThinFacingSpec, v0: float,
                   mass_retention: float = 1.0, factor: float | None = None) -> PerforationResult:
    """Residual state after a normal hit on a thin plate.

    ``mass_retention`` scales the exit mass; the measured exit masses scatter too
    much to pin it, so it is left to the caller (0 < kappa <= 1.6).
    """
    if not v0 > 0:
        raise ValueError("impact velocity must be positive")
    if not 0 < mass_retention <= 1.6:
        raise ValueError("mass_retention must lie in (0, 1.6]")
    vbl = ballistic_limit(proj, facing, factor)
    d_r = proj.residual_diameter_ratio * proj.diameter
    m_r = mass_retention * proj.mass
    if v0 <= vbl:
        return PerforationResult(vbl, 0.0, d_r, m_r, False)
    return PerforationResult(vbl, math.sqrt(v0 * v0 - vbl * vbl), d_r, m_r, True)


def residual_velocity(f, shot: ShotRecord, proj: ProjectileSpec) -> float:
    vbl2 = _limit_sq(f, shot.hardness, shot.thickness, proj.diameter, proj.mass)
    return math.sqrt(shot.v0**2 - vbl2) if shot.v0**2 > vbl2 else 0.0


@dataclass(frozen=True)
class FitResult:
    factor: float
    residuals: tuple[float, ...]  # V_rc - V_r per record
    ratios: tuple[float, ...]  # V_r / V_rc per record
    predicted: tuple[float, ...]
    iterations: int
    objective: float


def _objective(f, shots, proj):
    return sum((residual_velocity(f, s, proj) - s.vr) ** 2 for s in shots)


def _golden(fun, lo, hi, rtol=1e-12, max_iter=500):
    """Golden-section minimization of ``fun`` over log10 of the bracket."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = math.log10(lo), math.log10(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(10**c), fun(10**d)
    it = 0
    while (b - a) > rtol and it < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(10**c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(10**d)
        it += 1
    return 10 ** (0.5 * (a + b)), it


def fit_factor(shots: Sequence[ShotRecord], proj: ProjectileSpec,
               bracket: tuple[float, float] = GOLDEN_BRACKET) -> FitResult:
    """Least-squares fit of the perforation factor to measured residual velocities.

    Records whose impact speed falls below the trial ballistic limit predict
    V_rc = 0, so they contribute ``V_r**2`` and the objective stays finite.
    """
    measured = [s for s in shots if s.vr is not None]
    if len(measured) < 2:
        raise InsufficientDataError(f"need at least 2 shots with measured Vr, got {len(measured)}")
    fun = lambda f: _objective(f, measured, proj)  # noqa: E731
    f_opt, it = _golden(fun, *bracket)
    lo, hi = (math.log10(b) for b in bracket)
    edge = 1e-6 * (hi - lo)
    if math.log10(f_opt) - lo < edge or hi - math.log10(f_opt) < edge:
        raise FitError(f"objective has no interior minimum on [{bracket[0]:.3g}, {bracket[1]:.3g}]")
    pred = tuple(residual_velocity(f_opt, s, proj) for s in measured)
    if any(p <= 0 for p in pred):
        raise InsufficientDataError("fitted factor leaves some shots below the ballistic limit")
    return FitResult(
        factor=f_opt,
        residuals=tuple(p - s.vr for p, s in zip(pred, measured)),
        ratios=tuple(s.vr / p for p, s in zip(pred, measured)),
        predicted=pred,
        iterations=it,
        objective=fun(f_opt),
    )


def read_shots(path) -> list[ShotRecord]:
    header, rows = csvio.read_rows(Path(path))
    missing = [c for c in SHOT_HEADER[:3] if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}; expected header {','.join(SHOT_HEADER)}")
    shots = []
    for row in rows:
        vr = row.get("Vr_mps", "")
        shots.append(ShotRecord(float(row["h_m"]), float(row["BH"]), float(row["V0_mps"]),
                                float(vr) if vr not in ("", None) else None))
    return shots


def write_shots(path, shots: Iterable[ShotRecord]):
    csvio.write_rows(path, SHOT_HEADER, [(s.thickness, s.hardness, s.v0, s.vr) for s in shots])


def fit_report_rows(shots: Sequence[ShotRecord], fit: FitResult):
    measured = [s for s in shots if s.vr is not None]
    return [(i + 1, s.v0, s.vr, p, r)
            for i, (s, p, r) in enumerate(zip(measured, fit.predicted, fit.ratios))]


def write_fit_report(path, shots, fit: FitResult):
    csvio.write_rows(path, FIT_HEADER, fit_report_rows(shots, fit))
