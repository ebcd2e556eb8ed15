import math

import pytest
from hypothesis import given, strategies as st

from armorsim import csvio, thin_facing
from armorsim.errors import InsufficientDataError
from armorsim.materials import ThinFacingSpec, catalog_lookup
from armorsim.thin_facing import ShotRecord, ballistic_limit, fit_factor, perforate_thin


@pytest.fixture
def m16():
    return catalog_lookup("M16")


def test_ballistic_limit_thin_hard_plate(m16):
    assert ballistic_limit(m16, ThinFacingSpec(0.0029, 595)) == pytest.approx(605, abs=1.5)


def test_ballistic_limit_thick_soft_plate(m16):
    assert ballistic_limit(m16, ThinFacingSpec(0.0082, 505)) == pytest.approx(937, abs=1.5)


def test_ballistic_limit_vanishes_with_thickness(m16):
    limits = [ballistic_limit(m16, ThinFacingSpec(h, 500)) for h in (1e-3, 1e-6, 1e-12)]
    assert limits[0] > limits[1] > limits[2]
    # V_bl ~ sqrt(h)
    assert limits[2] / limits[0] == pytest.approx(math.sqrt(1e-9), rel=1e-9)


def test_series_7_residual(m16):
    res = perforate_thin(m16, ThinFacingSpec(0.0029, 595), 973)
    assert res.perforated
    assert res.residual_velocity == pytest.approx(762, rel=0.01)


def test_series_4_residual_close_to_reference(m16):
    # the reference 503 m/s is not reproduced to 2%; the direct evaluation gives ~517 m/s
    res = perforate_thin(m16, ThinFacingSpec(0.0045, 700), 967)
    assert res.residual_velocity == pytest.approx(516.7, abs=0.5)


def test_exact_limit_does_not_perforate(m16):
    facing = ThinFacingSpec(0.004, 500)
    vbl = ballistic_limit(m16, facing)
    res = perforate_thin(m16, facing, vbl)
    assert not res.perforated
    assert res.residual_velocity == 0.0


def test_residual_geometry(m16):
    res = perforate_thin(m16, ThinFacingSpec(0.004, 500), 1000, mass_retention=0.8)
    assert res.residual_diameter == pytest.approx(1.27 * m16.diameter)
    assert res.residual_mass == pytest.approx(0.8 * m16.mass)


@given(st.floats(1e-4, 2e-2), st.floats(100, 900), st.floats(10, 3000))
def test_energy_identity(h, bh, v0):
    proj = catalog_lookup("M16")
    res = perforate_thin(proj, ThinFacingSpec(h, bh), v0)
    if res.perforated:
        assert res.residual_velocity**2 + res.ballistic_limit**2 == pytest.approx(v0 * v0, rel=1e-12)
    else:
        assert res.residual_velocity == 0.0 and v0 <= res.ballistic_limit


def test_mass_retention_range(m16):
    with pytest.raises(ValueError):
        perforate_thin(m16, ThinFacingSpec(0.004, 500), 900, mass_retention=2.0)


def test_shot_record_validation():
    with pytest.raises(ValueError):
        ShotRecord(0.004, 500, 900, 950)
    with pytest.raises(ValueError):
        ShotRecord(0.004, 500, -1.0)


def _synthetic(f, proj, rows):
    shots = []
    for h, bh, v0 in rows:
        vbl2 = f * bh * h * proj.diameter**2 / proj.mass
        shots.append(ShotRecord(h, bh, v0, math.sqrt(v0 * v0 - vbl2)))
    return shots


def test_fit_recovers_exact_factor(m16):
    shots = _synthetic(3.0e7, m16, [(0.003, 500, 1000), (0.005, 600, 1100)])
    fit = fit_factor(shots, m16)
    assert fit.factor == pytest.approx(3.0e7, rel=1e-6)
    assert all(r == pytest.approx(1.0, abs=1e-6) for r in fit.ratios)


def test_fit_on_bundled_data(m16):
    fit = fit_factor(thin_facing.read_shots(_shot_table_path()), m16)
    assert 2.3e7 <= fit.factor <= 2.6e7
    assert 0.90 <= min(fit.ratios) and max(fit.ratios) <= 1.10


def test_fit_ak47_order_of_magnitude():
    ak = catalog_lookup("AK47")
    shots = _synthetic(2.95e7, ak, [(0.004, 500, 800), (0.005, 450, 850), (0.003, 600, 760)])
    assert fit_factor(shots, ak).factor == pytest.approx(2.95e7, rel=1e-6)


def test_fit_needs_two_shots(m16):
    with pytest.raises(InsufficientDataError):
        fit_factor([ShotRecord(0.004, 500, 900, 300)], m16)


def test_fit_ignores_unmeasured_shots(m16):
    shots = _synthetic(3.0e7, m16, [(0.003, 500, 1000), (0.005, 600, 1100)])
    shots.append(ShotRecord(0.004, 500, 900))
    assert len(fit_factor(shots, m16).ratios) == 2


def test_shots_csv_round_trip(tmp_path):
    shots = [ShotRecord(0.0082, 505, 1012, 391), ShotRecord(0.1 + 0.2, 1 / 3, 973.25)]
    path = tmp_path / "shots.csv"
    thin_facing.write_shots(path, shots)
    assert thin_facing.read_shots(path) == shots


def test_shots_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    csvio.write_rows(path, ("h_m", "V0_mps"), [(0.004, 900)])
    with pytest.raises(ValueError, match="BH"):
        thin_facing.read_shots(path)


def _shot_table_path():
    from importlib import resources

    return resources.files("armorsim") / "data" / "m16_plate_shots.csv"
