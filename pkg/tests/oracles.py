"""Independent reference computations used by the tests.

Nothing here imports the package; each oracle is a direct evaluation of a
closed form or a quadrature rule that is exact for the integrand at hand.
"""

from __future__ import annotations

import numpy as np
from scipy.special import jnp_zeros


def p1_unit_matrices(n_elems: int):
    """Unit-coefficient P1 stiffness and mass on [0, 1], node at s = 1 removed.

    Hand formulas: K = tridiag(-1, 2, -1)/h with K[0, 0] = 1/h and
    M = h/6 tridiag(1, 4, 1) with M[0, 0] = h/3.
    """
    h = 1.0 / n_elems
    n = n_elems
    K = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h
    K[0, 0] = 1.0 / h
    M = h / 6.0 * (np.diag(np.full(n, 4.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1))
    M[0, 0] = h / 3.0
    return K, M


def simpson_weighted_square(nodes, weight_nodal, f_nodal) -> float:
    """Integral of ``W_h * f_h^2`` for piecewise-linear ``W_h`` and ``f_h``.

    The integrand is a cubic on each element, so per-element Simpson is exact.
    """
    s = np.asarray(nodes, dtype=float)
    W = np.asarray(weight_nodal, dtype=float)
    f = np.asarray(f_nodal, dtype=float)
    h = np.diff(s)
    Wm = 0.5 * (W[:-1] + W[1:])
    fm = 0.5 * (f[:-1] + f[1:])
    vals = W[:-1] * f[:-1] ** 2 + 4 * Wm * fm**2 + W[1:] * f[1:] ** 2
    return float(np.sum(h / 6.0 * vals))


def trapezoid(values, nodes) -> float:
    v = np.asarray(values, dtype=float)
    s = np.asarray(nodes, dtype=float)
    return float(np.sum(0.5 * np.diff(s) * (v[:-1] + v[1:])))


def echo(u, c: float):
    """Reflected wave at ``s = 0`` of a unit-length tube with Dirichlet far end."""
    return lambda t: u(np.asarray(t, dtype=float) - 2.0 / c)


def midpoint_scalar(lam: float, dt: float, z0: float) -> float:
    return z0 * (1 + 0.5 * lam * dt) / (1 - 0.5 * lam * dt)


def poincare_two_elements() -> float:
    """Largest Rayleigh quotient for two elements.

    With h = 1/2: K = [[2, -2], [-2, 4]], M = [[1/6, 1/12], [1/12, 1/3]];
    det(K - lam M) = 0 reduces to 7 lam^2 - 240 lam + 576 = 0.
    """
    lam_min = (240 - np.sqrt(240**2 - 4 * 7 * 576)) / 14
    return 1.0 / lam_min


SHARP_POINCARE = 4.0 / np.pi**2


def first_radial_cutoff(c: float, R0: float) -> float:
    """Cutoff frequency (Hz) of the first higher-order mode of a circular duct (first zero of J1')."""
    return float(jnp_zeros(1, 1)[0]) * c / (2 * np.pi * R0)


def sigma(eta):
    return 1.0 / np.sqrt(1.0 + 0.25 * np.asarray(eta, dtype=float) ** 2)
