import math

import pytest
from hypothesis import given, strategies as st

from armorsim.errors import UnknownMaterialError
from armorsim.materials import (
    GPa,
    MPa,
    FabricSpec,
    ProjectileSpec,
    StrengthProfile,
    StressStrainCurve,
    ThickFacingSpec,
    ThinFacingSpec,
    catalog_lookup,
    catalog_names,
    curve_stress,
    eval_profile,
    kevlar29,
)


@pytest.fixture
def fgm_profile():
    return StrengthProfile.linear_ramp(500 * MPa, 1.5 * GPa, 250 * MPa, 0.75 * GPa, 10e-3)


def test_ramp_surface_value(fgm_profile):
    assert eval_profile(fgm_profile, 0.0) == (500 * MPa, 1.5 * GPa)


def test_ramp_midpoint(fgm_profile):
    sy, st_ = eval_profile(fgm_profile, 5e-3)
    assert sy == pytest.approx(375 * MPa, rel=1e-12)
    assert st_ == pytest.approx(1.125 * GPa, rel=1e-12)


def test_ramp_constant_beyond_ramp(fgm_profile):
    assert eval_profile(fgm_profile, 25e-3) == (250 * MPa, 0.75 * GPa)


def test_constant_profile_ignores_depth():
    prof = StrengthProfile.constant(1000 * MPa, 5175 * MPa)
    assert eval_profile(prof, 0.0) == eval_profile(prof, 1.0)


def test_negative_depth_rejected(fgm_profile):
    with pytest.raises(ValueError):
        eval_profile(fgm_profile, -1e-6)


@given(st.floats(0, 0.05), st.floats(0, 0.05))
def test_ramp_is_monotone_and_bounded(a, b):
    prof = StrengthProfile.linear_ramp(500 * MPa, 1.5 * GPa, 250 * MPa, 0.75 * GPa, 10e-3)
    lo, hi = sorted((a, b))
    (sy_lo, st_lo), (sy_hi, st_hi) = eval_profile(prof, lo), eval_profile(prof, hi)
    assert sy_hi <= sy_lo and st_hi <= st_lo
    assert 250 * MPa <= sy_hi <= 500 * MPa


def test_ramp_requires_terminal_values():
    with pytest.raises(ValueError):
        StrengthProfile(500 * MPa, 1.5 * GPa, kind="linear-ramp")


def test_catalog_t1():
    t1 = catalog_lookup("t1")
    assert isinstance(t1, ThickFacingSpec)
    assert t1.density == 7850
    assert eval_profile(t1.profile, 0.0) == (1000 * MPa, 5175 * MPa)
    assert t1.semi_infinite


def test_catalog_p2():
    p2 = catalog_lookup("p2")
    assert p2.density == 17000
    assert (p2.yield_strength, p2.dynamic_strength) == (750 * MPa, 1550 * MPa)


def test_catalog_m16():
    m16 = catalog_lookup("M16")
    assert m16.mass == 3.6e-3
    assert m16.length == 15e-3
    assert m16.perforation_factor == 2.47e7
    assert m16.residual_diameter_ratio == 1.27


def test_catalog_rods_match_cylinder_mass():
    for name in ("p1", "p2", "M16", "AK47"):
        assert catalog_lookup(name).check_cylinder(1e-12)


def test_p1_radius():
    assert catalog_lookup("p1").radius == pytest.approx(2.7e-3)


def test_unknown_catalog_name_lists_choices():
    with pytest.raises(UnknownMaterialError) as err:
        catalog_lookup("t9")
    assert "t1" in str(err.value)


def test_catalog_entries_are_fresh_and_equal():
    for name in catalog_names():
        assert catalog_lookup(name) == catalog_lookup(name)


def test_projectile_rejects_nonpositive():
    with pytest.raises(ValueError):
        ProjectileSpec("x", 0.0, 1e-3, 1e-2, 5e-4, 7850, 1e9, 1e9)


def test_thin_facing_rejects_zero_thickness():
    with pytest.raises(ValueError):
        ThinFacingSpec(0.0, 500)


def test_linear_curve_at_limit_strain():
    assert curve_stress(StressStrainCurve.linear(70 * GPa), 0.02) == pytest.approx(1.4 * GPa)


def test_curve_origin():
    assert curve_stress(StressStrainCurve.linear(70 * GPa), 0.0) == 0.0


def test_two_segment_curve_midpoint():
    curve = StressStrainCurve((0.0, 0.01, 0.03), (0.0, 500 * MPa, 700 * MPa))
    assert curve_stress(curve, 0.02) == pytest.approx(600 * MPa)


@pytest.mark.parametrize("strains, stresses", [
    ((0.0, 0.02, 0.01), (0.0, 1.0, 2.0)),
    ((0.0, 0.01), (0.0, -1.0)),
    ((0.01, 0.02), (0.0, 1.0)),
    ((0.0, 0.01, 0.02), (0.0, 2.0, 1.0)),
])
def test_bad_curves_rejected(strains, stresses):
    with pytest.raises(ValueError):
        StressStrainCurve(strains, stresses)


def test_curve_energy_matches_integral():
    curve = StressStrainCurve((0.0, 0.01, 0.03), (0.0, 500 * MPa, 700 * MPa))
    expected = 0.5 * 0.01 * 500 * MPa + 0.01 * 500 * MPa + 0.5 * 0.01 * 100 * MPa
    assert curve.energy(0.02) == pytest.approx(expected, rel=1e-12)


@given(st.floats(0.0, 0.2))
def test_curve_strain_at_inverts_stress(eps):
    curve = StressStrainCurve((0.0, 0.01, 0.03), (0.0, 500 * MPa, 700 * MPa))
    assert curve.strain_at(curve.stress(eps)) == pytest.approx(eps, abs=1e-12)


def test_kevlar_limit_strain():
    fab = kevlar29()
    assert fab.limit_strain == pytest.approx(0.02)
    assert fab.areal_density == 19.4


def test_with_plies_keeps_ply_properties():
    fab = kevlar29(40)
    fab30 = fab.with_plies(30)
    assert fab30.ply_areal_density == pytest.approx(fab.ply_areal_density)
    assert fab30.adhesive_gap == pytest.approx(fab.adhesive_gap)
    assert fab30.plies == 30


def test_fabric_rejects_nonpositive_limit():
    with pytest.raises(ValueError):
        FabricSpec(2, 1.0, StressStrainCurve.linear(1e9), 0.0, 1e9, 1e6, 1e9, 1e6)


def test_zero_ply_package_allowed():
    fab = kevlar29().with_plies(0)
    assert fab.plies == 0 and fab.areal_density == 0.0
    assert math.isclose(fab.ply_areal_density, 0.0)
