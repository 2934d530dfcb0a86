import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from oracles import midpoint_scalar
from waveguide.geometry import PhysicalConstants, build_profile
from waveguide.signals import gaussian
from waveguide.stepper import LinearSystemHandle, handle_from_node, midpoint_step, run_simulation
from waveguide.webster import assemble_webster


def scalar_handle(lam):
    one = np.ones((1, 1))
    return LinearSystemHandle(
        mass=one, dynamics=lam * one, input_matrix=np.zeros((1, 1)), output_matrix=np.zeros((1, 1)),
        feedthrough=np.zeros((1, 1)), energy_form=0.5 * one,
    )


def webster(alpha=0.0, n=80, c=1.0, rho=1.0):
    geom = build_profile("constant", {"r0": 0.05}, n + 1)
    return assemble_webster(geom, PhysicalConstants(c=c, rho=rho, alpha=alpha), n)


@given(lam=st.floats(-50, 50), dt=st.floats(1e-4, 0.02), z0=st.floats(-5, 5))
def test_scalar_midpoint_update(lam, dt, z0):
    z1 = midpoint_step(scalar_handle(lam), np.array([z0]), 0.0, 0.0, dt)
    assert z1[0] == pytest.approx(midpoint_scalar(lam, dt, z0), rel=1e-12, abs=1e-300)


def test_zero_input_zero_state_stays_zero():
    sys, _ = webster()
    res = run_simulation(sys.handle(), None, 1e-3, 0.1)
    assert not np.any(res.final_state)
    assert not np.any(res.y_endpoint) and not np.any(res.y_midpoint)


def test_conservative_run_preserves_energy_away_from_the_end():
    # data supported in the middle of the tube; in 1000 steps the wave stays clear of s = 0
    sys, _ = webster(n=200)
    s = sys.s
    bump = np.where(np.abs(s - 0.6) < 0.15, np.cos(np.pi * (s - 0.6) / 0.3) ** 4, 0.0)
    x0 = np.concatenate([bump, np.zeros_like(bump)])
    res = run_simulation(sys.handle(), None, 1e-4, 0.1, x0=x0)
    E = res.E
    assert np.max(np.abs(E - E[0])) <= 1e-10 * E[0]


def test_conservative_balance_with_outflow():
    sys, _ = webster()
    x0 = np.random.default_rng(1).standard_normal(2 * sys.n)
    res = run_simulation(sys.handle(), None, 1e-3, 1.0, x0=x0)
    L = res.ledger
    assert np.max(L.relative_residual()) <= 1e-10
    emitted = np.cumsum(L.dt * L.p_out)
    np.testing.assert_allclose(L.E_after + emitted, L.E_before[0], rtol=1e-10)


def test_lossy_run_energy_decreases_by_dissipation():
    sys, _ = webster(alpha=0.01)
    x0 = np.random.default_rng(2).standard_normal(2 * sys.n)
    res = run_simulation(sys.handle(), None, 1e-3, 0.5, x0=x0)
    L = res.ledger
    assert np.all(np.diff(res.E) < 0)
    drop = L.E_before - L.E_after
    np.testing.assert_allclose(drop, L.dt * (L.p_out + L.p_diss), rtol=1e-9, atol=1e-12 * L.E_before[0])
    assert np.all(L.diss["wall"] >= 0)


@pytest.mark.parametrize("alpha", [0.0, 0.1, 1.0])
def test_passivity_sweep_cumulative_balance(alpha):
    sys, _ = webster(alpha=alpha)
    u = gaussian(1.0, 0.2, 0.05)
    res = run_simulation(sys.handle(), u, 2e-3, 3.0)
    L = res.ledger
    injected = L.dt * L.p_in.sum()
    out_and_lost = L.dt * (L.p_out.sum() + L.p_diss.sum())
    assert injected - out_and_lost == pytest.approx(res.E[-1] - res.E[0], abs=1e-10 * injected)
    if alpha > 0:
        assert L.dt * L.p_diss.sum() > 0


def test_forward_backward_returns_initial_state():
    sys, _ = webster()
    h = sys.handle()
    x0 = np.random.default_rng(3).standard_normal(h.dim)
    x = x0.copy()
    for _ in range(300):
        x = midpoint_step(h, x, 0.0, 0.0, 1e-3)
    for _ in range(300):
        x = midpoint_step(h, x, 0.0, 0.0, -1e-3)
    assert np.linalg.norm(x - x0) <= 1e-8 * np.linalg.norm(x0)


def test_incompatible_initial_data_is_flagged():
    sys, _ = webster()
    x0 = np.zeros(2 * sys.n)
    x0[sys.n] = 1.0  # pressure at the inlet without a matching input
    res = run_simulation(sys.handle(), None, 1e-3, 0.01, x0=x0)
    # psi = 0 gives zero flux, so the implied input is (pi_0 / 2) sqrt(A0 / (rho c0))
    assert res.incompatible
    assert res.compatibility_gap == pytest.approx(0.5 * np.sqrt(np.pi * 0.05**2), rel=1e-12)
    ok = run_simulation(sys.handle(), None, 1e-3, 0.01)
    assert not ok.incompatible and ok.compatibility_gap == 0.0


def test_forcing_power_is_booked():
    sys, _ = webster()
    f = np.zeros(2 * sys.n)
    f[sys.n + 10] = 1e-3
    res = run_simulation(sys.handle(), None, 1e-3, 0.2, forcing=lambda t: f * np.sin(20 * t))
    L = res.ledger
    assert "source" in L.diss
    assert np.max(L.relative_residual()) <= 1e-10


def test_snapshots_and_observer():
    sys, _ = webster(n=20)
    u = gaussian(1.0, 0.1, 0.03)
    res = run_simulation(sys.handle(), u, 1e-2, 0.5, record_stride=10)
    assert res.snapshots.shape == (6, 40)
    np.testing.assert_allclose(res.snapshot_times, np.linspace(0, 0.5, 6))
    obs = run_simulation(sys.handle(), u, 1e-2, 0.5, record_stride=10, observer=lambda x: x[:1])
    np.testing.assert_array_equal(obs.snapshots[:, 0], res.snapshots[:, 0])


def test_csv_rows_layout():
    sys, _ = webster(n=10)
    res = run_simulation(sys.handle(), gaussian(1, 0.05, 0.02), 1e-2, 0.05)
    rows = list(res.csv_rows())
    assert len(rows) == 6 and all(len(r) == 9 for r in rows)
    assert rows[0][3] == "" and rows[1][3] != ""


def test_argument_errors():
    sys, _ = webster(n=10)
    h = sys.handle()
    with pytest.raises(ValueError, match="dt"):
        run_simulation(h, None, 0.0, 1.0)
    with pytest.raises(ValueError, match="t_final"):
        run_simulation(h, None, 0.1, -1.0)
    with pytest.raises(ValueError, match="non-zero"):
        h.factor(0.0)


def test_handle_shape_validation():
    with pytest.raises(ValueError, match="energy_form"):
        LinearSystemHandle(sp.identity(2), sp.identity(2), np.zeros((2, 1)), np.zeros((1, 2)), np.zeros((1, 1)), np.eye(3))
    with pytest.raises(ValueError, match="one-to-one"):
        LinearSystemHandle(sp.identity(2), sp.identity(2), np.zeros((2, 1)), np.zeros((2, 2)), np.zeros((1, 1)), np.eye(2))


def test_node_handle_matches_mass_form_handle():
    sys, node = webster(alpha=0.3, n=30)
    a, b = sys.handle(), handle_from_node(node, "wall")
    u = gaussian(1.0, 0.2, 0.05)
    ra = run_simulation(a, u, 1e-2, 1.0)
    rb = run_simulation(b, u, 1e-2, 1.0)
    np.testing.assert_allclose(rb.y_endpoint, ra.y_endpoint, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(rb.ledger.p_diss, ra.ledger.p_diss, rtol=1e-7, atol=1e-14)
