import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import sigma as sigma_oracle
from waveguide.geometry import (
    PhysicalConstants,
    TubeGeometry,
    build_profile,
    derived_fields,
    load_profile_table,
    validate_geometry,
)


def test_constant_straight_tube():
    g = build_profile("constant", {"r0": 0.01}, 5)
    np.testing.assert_array_equal(g.R, np.full(5, 0.01))
    np.testing.assert_array_equal(g.eta, np.zeros(5))
    np.testing.assert_array_equal(g.sigma, np.ones(5))
    assert validate_geometry(g) is None


def test_constant_curved_tube():
    g = build_profile("constant", {"r0": 0.01, "kappa": 50}, 5)
    np.testing.assert_allclose(g.eta, 0.5, rtol=1e-14)
    # (1 + 0.0625)^(-1/2)
    np.testing.assert_allclose(g.sigma, 0.9701425001453319, rtol=1e-14)
    np.testing.assert_allclose(g.w_str, 0.005, rtol=1e-14)


def test_cone():
    g = build_profile("cone", {"r0": 0.01, "r1": 0.015}, 3)
    np.testing.assert_allclose(g.Rp, 0.005, rtol=1e-14)
    np.testing.assert_allclose(g.w_str, g.R * np.sqrt(0.005**2 + 1), rtol=1e-14)
    np.testing.assert_allclose(g.R, [0.01, 0.0125, 0.015], rtol=1e-14)


def test_exponential_and_bump():
    g = build_profile("exponential", {"r0": 0.01, "r1": 0.04}, 3)
    np.testing.assert_allclose(g.R, [0.01, 0.02, 0.04], rtol=1e-14)
    np.testing.assert_allclose(g.Rp, np.log(4.0) * g.R, rtol=1e-14)
    b = build_profile("bump", {"r0": 0.01, "amplitude": 0.004}, 5)
    np.testing.assert_allclose(b.R, [0.01, 0.012, 0.014, 0.012, 0.01], rtol=1e-14)


@pytest.mark.parametrize(
    "R, Rp, kappa, expected",
    [
        (0.01, 0.0, 0.0, (np.pi * 1e-4, 0.0, 1.0, 0.01)),
        (0.01, 0.0, 100.0, (np.pi * 1e-4, 1.0, 0.894427190999916, 0.0)),
        (0.02, 0.01, 0.0, (np.pi * 4e-4, 0.0, 1.0, 0.02 * np.sqrt(1.0001))),
    ],
)
def test_derived_fields_values(R, Rp, kappa, expected):
    got = derived_fields(R, Rp, kappa)
    for g, e in zip(got, expected):
        assert float(g) == pytest.approx(e, rel=1e-12, abs=1e-15)


def test_eta_at_one_fails_validation():
    g = build_profile("constant", {"r0": 0.01, "kappa": 100}, 5)
    assert "eta" in validate_geometry(g)


def test_validation_messages():
    g = build_profile("constant", {"r0": 0.01, "kappa": 150}, 5)
    assert validate_geometry(g).startswith("eta ≥ 1 at index 0")
    s = np.linspace(0, 1, 4)
    bad = TubeGeometry(s, np.array([0.01, 0.0, 0.01, 0.01]), np.zeros(4), np.zeros(4))
    assert "non-positive radius at index 1" in validate_geometry(bad)
    nonmono = TubeGeometry(np.array([0.0, 0.5, 0.4, 1.0]), np.full(4, 0.01), np.zeros(4), np.zeros(4))
    assert "non-monotone grid at index 2" in validate_geometry(nonmono)
    short = TubeGeometry(np.array([0.0, 1.0]), np.full(2, 0.01), np.zeros(2), np.zeros(2))
    assert "too few samples" in validate_geometry(short)
    nan = TubeGeometry(s, np.array([0.01, np.nan, 0.01, 0.01]), np.zeros(4), np.zeros(4))
    assert "non-finite R" in validate_geometry(nan)
    span = TubeGeometry(np.linspace(0, 2, 4), np.full(4, 0.01), np.zeros(4), np.zeros(4))
    assert "span" in validate_geometry(span)


def test_build_profile_errors():
    with pytest.raises(ValueError, match="unknown profile kind"):
        build_profile("spiral", {"r0": 0.01}, 5)
    with pytest.raises(ValueError, match="requires parameter 'r1'"):
        build_profile("cone", {"r0": 0.01}, 5)
    with pytest.raises(ValueError, match="positive"):
        build_profile("constant", {"r0": -0.01}, 5)
    with pytest.raises(ValueError, match="n_samples"):
        build_profile("constant", {"r0": 0.01}, 2)


def test_geometry_is_read_only():
    g = build_profile("constant", {"r0": 0.01}, 5)
    with pytest.raises(ValueError):
        g.R[0] = 1.0
    with pytest.raises(AttributeError):
        g.R = np.ones(5)


def test_table_profile(tmp_path):
    path = tmp_path / "tube.csv"
    path.write_text("# area profile\ns,R,kappa\n0,0.01,0\n0.5,0.02,10\n1,0.01,0\n")
    table = load_profile_table(path)
    g = build_profile("table", {"table": table}, 5)
    np.testing.assert_allclose(g.R, [0.01, 0.015, 0.02, 0.015, 0.01])
    np.testing.assert_allclose(g.kappa, [0, 5, 10, 5, 0])
    # second-order differences reproduce the slope of each linear piece in the interior
    np.testing.assert_allclose(g.Rp[1], 0.02, rtol=1e-12)
    assert validate_geometry(g) is None


def test_table_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("s,R\n0,0.01\n1,0.01\n")
    with pytest.raises(ValueError, match="kappa"):
        load_profile_table(path)


def test_table_must_cover_unit_interval():
    with pytest.raises(ValueError, match="cover"):
        build_profile("table", {"table": {"s": [0.0, 0.5], "R": [0.01, 0.01]}}, 5)


def test_table_quadratic_slope_is_exact():
    s = np.linspace(0, 1, 11)
    R = 0.01 + 0.01 * s**2
    g = build_profile("table", {"table": {"s": s, "R": R}}, 11)
    np.testing.assert_allclose(g.Rp, 0.02 * s, atol=1e-14)


def test_physical_constants_validation():
    with pytest.raises(ValueError, match="alpha"):
        PhysicalConstants(alpha=-1)
    with pytest.raises(ValueError, match="sound speed"):
        PhysicalConstants(c=0)
    with pytest.raises(ValueError, match="density"):
        PhysicalConstants(rho=-1.0)


radii = st.floats(1e-3, 0.1)
slopes = st.floats(-0.1, 0.1)


@given(R=radii, Rp=slopes, eta=st.floats(-0.99, 0.99))
def test_sigma_bounds_and_oracle(R, Rp, eta):
    A, e, sg, w = derived_fields(R, Rp, eta / R)
    assert 2 / np.sqrt(5) < sg <= 1.0
    assert sg == pytest.approx(sigma_oracle(e), rel=1e-14)
    assert A == pytest.approx(np.pi * R * R, rel=1e-14)
    assert w >= 0


@given(e1=st.floats(0, 0.99), e2=st.floats(0, 0.99))
def test_sigma_decreasing_in_eta(e1, e2):
    lo, hi = sorted([e1, e2])
    assert derived_fields(0.01, 0.0, hi / 0.01)[2] <= derived_fields(0.01, 0.0, lo / 0.01)[2]


@given(r0=radii, kappa=st.floats(0, 5), n=st.integers(3, 50))
def test_constant_profile_is_constant(r0, kappa, n):
    g = build_profile("constant", {"r0": r0, "kappa": kappa}, n)
    for field in (g.R, g.A, g.eta, g.sigma, g.w_str):
        assert np.ptp(field) <= 1e-15 * max(abs(field[0]), 1.0)
    # recomputation from the stored inputs is idempotent
    again = derived_fields(g.R, g.Rp, g.kappa)
    for a, b in zip(again, (g.A, g.eta, g.sigma, g.w_str)):
        np.testing.assert_array_equal(a, b)
