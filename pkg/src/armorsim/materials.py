"""Material and geometry descriptions for impactors, facings and fabric backings.

All quantities are SI. Every type here is a frozen dataclass, so instances can be
shared freely between threads and sweep workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

import numpy as np

from .errors import UnknownMaterialError

MPa = 1.0e6
GPa = 1.0e9


@dataclass(frozen=True)
class ProjectileSpec:
    """Impactor idealized as an effective cylinder of radius ``radius`` and length ``length``.

    ``perforation_factor`` is the empirical factor of the thin-plate energy formula
    (BH taken as the raw table number, h and d in m, m in kg). Rods that are never
    fired at thin plates leave it as ``None``.
    """

    name: str
    mass: float  # kg
    diameter: float  # m, caliber
    length: float  # m, effective cylinder length L_0
    radius: float  # m, effective cylinder radius r_0
    density: float  # kg/m^3
    yield_strength: float  # Pa, static sigma_Y^(p)
    dynamic_strength: float  # Pa, sigma_p
    perforation_factor: float | None = None
    residual_diameter_ratio: float = 1.0

    def __post_init__(self):
        for name in ("mass", "diameter", "length", "radius", "density",
                     "yield_strength", "dynamic_strength", "residual_diameter_ratio"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"ProjectileSpec.{name} must be positive and finite, got {value!r}")
        if self.perforation_factor is not None and not self.perforation_factor > 0:
            raise ValueError("ProjectileSpec.perforation_factor must be positive")

    @property
    def cylinder_mass(self) -> float:
        return self.density * math.pi * self.radius**2 * self.length

    def check_cylinder(self, rtol: float = 0.02) -> bool:
        """True if ``mass`` agrees with the cylinder idealization within ``rtol``."""
        return abs(self.cylinder_mass - self.mass) <= rtol * self.mass

    def with_diameter(self, diameter: float) -> "ProjectileSpec":
        return replace(self, diameter=diameter)


class ProfileKind(str, Enum):
    CONSTANT = "constant"
    LINEAR_RAMP = "linear-ramp"


@dataclass(frozen=True)
class StrengthProfile:
    """Depth-dependent target strength: constant, or linear ramp then constant."""

    yield_surface: float  # Pa
    dynamic_surface: float  # Pa
    yield_terminal: float | None = None
    dynamic_terminal: float | None = None
    ramp_depth: float | None = None  # m
    kind: ProfileKind = ProfileKind.CONSTANT

    def __post_init__(self):
        object.__setattr__(self, "kind", ProfileKind(self.kind))
        if not (self.yield_surface > 0 and self.dynamic_surface > 0):
            raise ValueError("surface strengths must be positive")
        if self.kind is ProfileKind.LINEAR_RAMP:
            if self.yield_terminal is None or self.dynamic_terminal is None or self.ramp_depth is None:
                raise ValueError("linear-ramp profile needs terminal values and ramp_depth")
            if not (self.yield_terminal > 0 and self.dynamic_terminal > 0 and self.ramp_depth > 0):
                raise ValueError("terminal strengths and ramp_depth must be positive")

    @classmethod
    def constant(cls, yield_strength: float, dynamic_strength: float) -> "StrengthProfile":
        return cls(yield_strength, dynamic_strength)

    @classmethod
    def linear_ramp(cls, yield_surface, dynamic_surface, yield_terminal, dynamic_terminal,
                    ramp_depth) -> "StrengthProfile":
        return cls(yield_surface, dynamic_surface, yield_terminal, dynamic_terminal, ramp_depth,
                   ProfileKind.LINEAR_RAMP)


def eval_profile(profile: StrengthProfile, depth: float) -> tuple[float, float]:
    """Return ``(sigma_Y, sigma_t)`` of the target at penetration depth ``depth``."""
    if depth < 0:
        raise ValueError(f"depth must be nonnegative, got {depth!r}")
    if profile.kind is ProfileKind.CONSTANT:
        return profile.yield_surface, profile.dynamic_surface
    s = min(depth / profile.ramp_depth, 1.0)
    sy = profile.yield_surface + s * (profile.yield_terminal - profile.yield_surface)
    st = profile.dynamic_surface + s * (profile.dynamic_terminal - profile.dynamic_surface)
    return sy, st


@dataclass(frozen=True)
class ThickFacingSpec:
    name: str
    density: float
    profile: StrengthProfile
    thickness: float = math.inf  # m; inf marks a semi-infinite target

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError("ThickFacingSpec.density must be positive")
        if not self.thickness > 0:
            raise ValueError("ThickFacingSpec.thickness must be positive or inf")

    @property
    def semi_infinite(self) -> bool:
        return math.isinf(self.thickness)


@dataclass(frozen=True)
class ThinFacingSpec:
    thickness: float  # m
    hardness: float  # Brinell number, raw table value

    def __post_init__(self):
        if not (self.thickness > 0 and self.hardness > 0):
            raise ValueError("ThinFacingSpec thickness and hardness must be positive")


@dataclass(frozen=True)
class StressStrainCurve:
    """Piecewise-linear sigma(eps) through the origin, extrapolated with the last slope.

    Compression (eps < 0) carries no stress: fabric plies buckle instead.
    """

    strains: tuple[float, ...]
    stresses: tuple[float, ...]

    def __post_init__(self):
        eps = tuple(float(e) for e in self.strains)
        sig = tuple(float(s) for s in self.stresses)
        if len(eps) != len(sig) or len(eps) < 2:
            raise ValueError("curve needs at least two matching knots")
        if eps[0] != 0.0 or sig[0] != 0.0:
            raise ValueError("curve must pass through the origin")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError("curve strains must be strictly increasing")
        if any(b < a for a, b in zip(sig, sig[1:])):
            raise ValueError("curve stresses must be nondecreasing")
        if sig[-1] <= 0:
            raise ValueError("curve must carry positive stress")
        object.__setattr__(self, "strains", eps)
        object.__setattr__(self, "stresses", sig)

    @classmethod
    def linear(cls, modulus: float, strain_end: float = 1.0) -> "StressStrainCurve":
        return cls((0.0, strain_end), (0.0, modulus * strain_end))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.stresses) / np.diff(self.strains)

    @property
    def max_slope(self) -> float:
        return float(self.slopes.max())

    def stress(self, eps):
        """Vectorized sigma(eps); scalars in, scalar out."""
        e = np.maximum(np.asarray(eps, dtype=float), 0.0)
        xs = np.asarray(self.strains)
        ys = np.asarray(self.stresses)
        out = np.interp(e, xs, ys)
        out = np.where(e > xs[-1], ys[-1] + self.slopes[-1] * (e - xs[-1]), out)
        return out if out.ndim else float(out)

    def energy(self, eps):
        """Stored energy density int_0^eps sigma de (J/m^3)."""
        e = np.maximum(np.asarray(eps, dtype=float), 0.0)
        xs = np.asarray(self.strains)
        ys = np.asarray(self.stresses)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))))
        k = np.clip(np.searchsorted(xs, e, side="right") - 1, 0, len(xs) - 2)
        s0 = ys[k]
        slope = self.slopes[k]
        de = e - xs[k]
        out = cum[k] + s0 * de + 0.5 * slope * de * de
        return out if out.ndim else float(out)

    def strain_at(self, sigma: float) -> float:
        """Smallest strain at which the curve reaches ``sigma``."""
        xs, ys = self.strains, self.stresses
        if sigma <= 0:
            return 0.0
        for (e0, s0), (e1, s1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
            if s1 >= sigma and s1 > s0:
                return e0 + (sigma - s0) * (e1 - e0) / (s1 - s0)
        slope = self.slopes[-1]
        if slope <= 0:
            return math.inf
        return xs[-1] + (sigma - ys[-1]) / slope


def curve_stress(curve: StressStrainCurve, eps: float) -> float:
    if eps < 0:
        raise ValueError("strain must be nonnegative")
    return curve.stress(eps)


@dataclass(frozen=True)
class FabricSpec:
    """Multi-ply fabric package bonded by a thin adhesive.

    ``areal_density`` is the whole package (kg/m^2); each ply carries
    ``areal_density / plies``. ``ply_density`` sets the ply thickness and
    ``adhesive_thickness`` defaults to the ply pitch.
    """

    plies: int
    areal_density: float
    curve: StressStrainCurve
    tensile_limit: float
    shear_modulus: float
    shear_limit: float
    normal_modulus: float
    normal_limit: float
    adhesive_thickness: float | None = None
    ply_density: float = 1440.0
    name: str = "fabric"

    def __post_init__(self):
        if self.plies < 0 or int(self.plies) != self.plies:
            raise ValueError("plies must be a nonnegative integer")
        if self.plies > 0 and not self.areal_density > 0:
            raise ValueError("FabricSpec.areal_density must be positive")
        if self.areal_density < 0:
            raise ValueError("FabricSpec.areal_density must be nonnegative")
        for name in ("tensile_limit", "shear_modulus", "shear_limit",
                     "normal_modulus", "normal_limit", "ply_density"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FabricSpec.{name} must be positive")
        if self.adhesive_thickness is not None and not self.adhesive_thickness > 0:
            raise ValueError("adhesive_thickness must be positive")

    @property
    def ply_areal_density(self) -> float:
        return self.areal_density / self.plies if self.plies else 0.0

    @property
    def ply_thickness(self) -> float:
        return self.ply_areal_density / self.ply_density

    @property
    def adhesive_gap(self) -> float:
        if self.adhesive_thickness is not None:
            return self.adhesive_thickness
        return self.ply_thickness

    @property
    def limit_strain(self) -> float:
        return self.curve.strain_at(self.tensile_limit)

    def with_plies(self, plies: int) -> "FabricSpec":
        """Same ply material and per-ply areal density, different ply count."""
        per_ply = self.ply_areal_density
        adhesive = self.adhesive_thickness if self.adhesive_thickness is not None else self.ply_thickness
        return replace(self, plies=plies, areal_density=per_ply * plies, adhesive_thickness=adhesive)


def kevlar29(plies: int = 40) -> FabricSpec:
    """Kevlar-29 package: 19.4 kg/m^2 at 40 plies, linear plies at 70 GPa."""
    base = FabricSpec(
        plies=40,
        areal_density=19.4,
        curve=StressStrainCurve.linear(70 * GPa, 0.05),
        tensile_limit=1.4 * GPa,
        shear_modulus=0.5 * GPa,
        shear_limit=25 * MPa,
        normal_modulus=2.0 * GPa,
        normal_limit=0.1 * GPa,
        name="kevlar29",
    )
    return base if plies == 40 else base.with_plies(plies)


# Catalog ---------------------------------------------------------------------

def _rod(name, diameter, aspect, density, sy, sp):
    r0 = diameter / 2
    length = aspect * diameter
    return ProjectileSpec(name=name, mass=density * math.pi * r0**2 * length, diameter=diameter,
                          length=length, radius=r0, density=density, yield_strength=sy,
                          dynamic_strength=sp)


def _bullet(name, mass, diameter, length, f, kd):
    r0 = diameter / 2
    density = mass / (math.pi * r0**2 * length)
    return ProjectileSpec(name=name, mass=mass, diameter=diameter, length=length, radius=r0,
                          density=density, yield_strength=770 * MPa, dynamic_strength=1100 * MPa,
                          perforation_factor=f, residual_diameter_ratio=kd)


M16_CALIBER_QUOTED = 5.62e-3
M16_CALIBER = 5.56e-3
_M16_LENGTH = 15e-3

CatalogEntry = Union[ProjectileSpec, ThickFacingSpec]

_CATALOG = {
    "p1": lambda: _rod("p1", 5.4e-3, 10.0, 7850.0, 770 * MPa, 1100 * MPa),
    "p2": lambda: _rod("p2", 6.0e-3, 10.4, 17000.0, 750 * MPa, 1550 * MPa),
    "t1": lambda: ThickFacingSpec("t1", 7850.0, StrengthProfile.constant(1000 * MPa, 5175 * MPa)),
    "t2": lambda: ThickFacingSpec("t2", 7850.0, StrengthProfile.constant(610 * MPa, 4400 * MPa)),
    "t3": lambda: ThickFacingSpec("t3", 7850.0, StrengthProfile.constant(500 * MPa, 3450 * MPa)),
    "M16": lambda: _bullet("M16", 3.6e-3, M16_CALIBER, _M16_LENGTH, 2.47e7, 1.27),
    # no length is given for this bullet; it keeps the M16's length-to-caliber ratio
    "AK47": lambda: _bullet("AK47", 9.7e-3, 7.6e-3, 7.6e-3 * _M16_LENGTH / M16_CALIBER, 2.95e7, 1.33),
    "ceramic_ref": lambda: ThickFacingSpec(
        "ceramic_ref", 3000.0, StrengthProfile.constant(500 * MPa, 1.5 * GPa), thickness=10e-3),
    "fgm_ref": lambda: ThickFacingSpec(
        "fgm_ref", 3000.0,
        StrengthProfile.linear_ramp(500 * MPa, 1.5 * GPa, 250 * MPa, 0.75 * GPa, 10e-3),
        thickness=10e-3),
}


def catalog_names() -> tuple[str, ...]:
    return tuple(_CATALOG)


def catalog_lookup(name: str) -> CatalogEntry:
    try:
        return _CATALOG[name]()
    except KeyError:
        raise UnknownMaterialError(name, _CATALOG) from None
