"""Generalized Webster horn model: P1 finite elements on [0, 1].

The velocity potential ``psi`` and pressure ``pi = rho psi_t`` live on the
nodes ``s_0 = 0, ..., s_{N-1}``; the Dirichlet node ``s_N = 1`` is eliminated
for both. With

    K_A = int A phi_i' phi_j'        (stiffness)
    M_w = int A / c(s)^2 phi_i phi_j (weighted mass, c(s) = c sigma(s))
    D_w = int w_str phi_i phi_j      (wall damping)

the semi-discrete system is

    psi' = pi / rho
    M_w pi' = -rho K_A psi - rho A(0) q e_0 - 2 pi alpha D_w pi

where ``q = psi'(0)`` is the boundary flux fixed by the scattering input
``-c(0) psi_s + psi_t = 2 sqrt(c(0) / (rho A(0))) u``. The stored energy is
``E = (rho psi.K_A psi + pi.M_w pi / rho) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import PhysicalConstants, TubeGeometry, validate_geometry
from .node import DiscreteNode
from .stepper import LinearSystemHandle

__all__ = [
    "State",
    "WebsterSystem",
    "assemble_webster",
    "p1_matrices",
    "poincare_ratio",
    "webster_flux",
    "webster_output",
]

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class State:
    """Nodal ``psi`` and ``pi`` without the eliminated node at ``s = 1``."""

    psi: np.ndarray
    pi: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.psi, self.pi])

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        n = x.size // 2
        return cls(x[:n].copy(), x[n:].copy())


def p1_matrices(n_elems: int, stiff_coef, mass_coef, damp_coef=None):
    """Assemble P1 matrices on a uniform grid, last node eliminated.

    Coefficients are nodal values (length ``n_elems + 1``) interpolated
    linearly inside each element; ``mass_coef`` may instead be a callable of
    the two interpolated arrays ``(t, element)`` when the integrand is a
    nonlinear function of nodal fields. Two-point Gauss quadrature per element.
    """
    h = 1.0 / n_elems
    e = np.arange(n_elems)
    phi = np.stack([1.0 - _GAUSS, _GAUSS])  # (local basis, gauss point)
    wq = 0.5 * h

    def at_gauss(nodal):
        nodal = np.asarray(nodal, dtype=float)
        return nodal[e, None] * (1.0 - _GAUSS) + nodal[e + 1, None] * _GAUSS  # (elem, gauss)

    def assemble(local):  # local: (elem, 2, 2)
        rows = np.stack([e, e, e + 1, e + 1], axis=1).ravel()
        cols = np.stack([e, e + 1, e, e + 1], axis=1).ravel()
        full = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n_elems + 1, n_elems + 1)).tocsr()
        return full[:-1, :-1].tocsr()

    def mass_like(coef_g):
        return np.einsum("eg,ag,bg->eab", coef_g * wq, phi, phi)

    a_g = at_gauss(stiff_coef)
    grad = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h**2
    K = assemble(np.sum(a_g * wq, axis=1)[:, None, None] * grad)
    m_g = mass_coef(at_gauss) if callable(mass_coef) else at_gauss(mass_coef)
    M = assemble(mass_like(m_g))
    D = assemble(mass_like(at_gauss(damp_coef))) if damp_coef is not None else None
    return K, M, D


@dataclass(frozen=True)
class WebsterSystem:
    geom: TubeGeometry
    consts: PhysicalConstants
    n_elems: int
    s: np.ndarray  # active nodes, s = 1 excluded
    K_A: sp.csr_matrix
    M_w: sp.csr_matrix
    D_w: sp.csr_matrix
    A0: float
    c0: float

    @property
    def n(self) -> int:
        return self.n_elems

    @property
    def b_in(self) -> np.ndarray:
        """Input load ``2 sqrt(rho A(0) / c(0)) e_0`` of the pressure equation."""
        b = np.zeros(self.n)
        b[0] = 2.0 * np.sqrt(self.consts.rho * self.A0 / self.c0)
        return b

    @property
    def absorb0(self) -> float:
        return self.A0 / self.c0

    @property
    def output_gain(self) -> float:
        """``sqrt(A(0) / (rho c(0)))``: ``y = u - output_gain * pi_0``."""
        return np.sqrt(self.A0 / (self.consts.rho * self.c0))

    def zero_state(self) -> State:
        return State(np.zeros(self.n), np.zeros(self.n))

    def energy(self, state: State) -> float:
        rho = self.consts.rho
        return 0.5 * (rho * state.psi @ (self.K_A @ state.psi) + state.pi @ (self.M_w @ state.pi) / rho)

    def wall_dissipation(self, state: State) -> float:
        """``(2 pi alpha / rho) pi.D_w pi``, the wall loss rate."""
        return 2 * np.pi * self.consts.alpha / self.consts.rho * float(state.pi @ (self.D_w @ state.pi))

    def trace_input(self, x) -> float:
        """Input implied by the nodal state through a second-order one-sided flux."""
        st = State.from_vector(x)
        h = 1.0 / self.n_elems
        psi = np.append(st.psi, 0.0)
        q = (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * h)
        rho = self.consts.rho
        return 0.5 * self.output_gain * (-rho * self.c0 * q + st.pi[0])

    def handle(self, alpha: float | None = None) -> LinearSystemHandle:
        """Mass-form stepping handle on ``x = (psi, pi)``."""
        alpha = self.consts.alpha if alpha is None else alpha
        rho, n = self.consts.rho, self.n
        I = sp.identity(n, format="csr")
        Z = sp.csr_matrix((n, n))
        e0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(n, n))
        damp = 2 * np.pi * alpha * self.D_w
        mass = sp.bmat([[I, None], [None, self.M_w]], format="csr")
        dyn = sp.bmat([[Z, I / rho], [-rho * self.K_A, -self.absorb0 * e0 - damp]], format="csr")
        B = sp.csr_matrix(np.concatenate([np.zeros(n), self.b_in])[:, None])
        C = sp.csr_matrix(([-self.output_gain], ([0], [n])), shape=(1, 2 * n))
        X = 0.5 * sp.bmat([[rho * self.K_A, None], [None, self.M_w / rho]], format="csr")
        forms = {}
        if alpha > 0:
            forms["wall"] = sp.bmat([[Z, None], [None, damp / rho]], format="csr")
        return LinearSystemHandle(
            mass=mass,
            dynamics=dyn,
            input_matrix=B,
            output_matrix=C,
            feedthrough=np.ones((1, 1)),
            energy_form=X,
            dissipation_forms=forms,
            channel_labels=("end0",),
            trace_input=self.trace_input,
        )


def assemble_webster(geom: TubeGeometry, consts: PhysicalConstants, n_elems: int) -> tuple[WebsterSystem, DiscreteNode]:
    """Assemble the horn model and export it as a boundary node.

    The node acts on ``z = (psi, pi, q)`` with ``q`` the flux ``psi'(0)``;
    ``L`` is the lossless interior operator and ``H`` the wall damping.
    """
    msg = validate_geometry(geom)
    if msg is not None:
        raise ValueError(f"invalid geometry: {msg}")
    if n_elems < 2:
        raise ValueError(f"n_elems must be at least 2, got {n_elems}")
    c, rho, alpha = consts.c, consts.rho, consts.alpha
    nodes = np.linspace(0.0, 1.0, n_elems + 1)
    A = geom.at("A", nodes)
    sig = geom.at("sigma", nodes)
    W = geom.at("w_str", nodes)

    def weighted(at_gauss):
        return at_gauss(A) / (c * at_gauss(sig)) ** 2

    K, M, D = p1_matrices(n_elems, A, weighted, W)
    sys = WebsterSystem(geom, consts, n_elems, nodes[:-1], K, M, D, float(A[0]), float(c * sig[0]))
    return sys, webster_node(sys)


def webster_node(sys: WebsterSystem) -> DiscreteNode:
    n, rho, A0, c0 = sys.n, sys.consts.rho, sys.A0, sys.c0
    Md = sys.M_w.toarray()
    Kd = sys.K_A.toarray()
    Minv_K = np.linalg.solve(Md, Kd)
    Minv_e0 = np.linalg.solve(Md, np.eye(n)[:, 0])
    L = np.zeros((2 * n, 2 * n + 1))
    L[:n, n : 2 * n] = np.eye(n) / rho
    L[n:, :n] = -rho * Minv_K
    L[n:, 2 * n] = -rho * A0 * Minv_e0
    X = np.zeros((2 * n, 2 * n))
    X[:n, :n] = 0.5 * rho * Kd
    X[n:, n:] = 0.5 * Md / rho
    X = 0.5 * (X + X.T)
    scale = 0.5 * np.sqrt(A0 / (rho * c0))
    G = np.zeros((1, 2 * n + 1))
    K = np.zeros((1, 2 * n + 1))
    G[0, n], G[0, 2 * n] = scale, -scale * rho * c0
    K[0, n], K[0, 2 * n] = -scale, -scale * rho * c0
    H = None
    if sys.consts.alpha > 0:
        H = np.zeros((2 * n, 2 * n))
        H[n:, n:] = -2 * np.pi * sys.consts.alpha * np.linalg.solve(Md, sys.D_w.toarray())
    return DiscreteNode(X_ip=X, L_mat=L, G_mat=G, K_mat=K, H_mat=H, channel_labels=("end0",))


def webster_flux(state: State, u: float, sys: WebsterSystem) -> float:
    """Boundary flux ``psi'(0)`` implied by the input relation."""
    rho, c0 = sys.consts.rho, sys.c0
    return (state.pi[0] / rho - 2.0 * np.sqrt(c0 / (rho * sys.A0)) * u) / c0


def webster_output(state: State, u: float, sys: WebsterSystem) -> float:
    """Scattering output ``y = u - sqrt(A(0) / (rho c(0))) pi_0``."""
    return u - sys.output_gain * state.pi[0]


def poincare_ratio(n_elems: int, tol: float = 1e-13, max_iter: int = 10_000) -> float:
    """Largest ``z.M0 z / z.K0 z`` over P1 functions with ``z(1) = 0``.

    Unit-weight mass and stiffness; computed by inverse power iteration on
    ``K0 z = lambda M0 z`` and returned as ``1 / lambda_min``.
    """
    if n_elems < 2:
        raise ValueError(f"n_elems must be at least 2, got {n_elems}")
    ones = np.ones(n_elems + 1)
    K0, M0, _ = p1_matrices(n_elems, ones, ones)
    lu = spla.splu(K0.tocsc())
    z = np.ones(n_elems)
    ratio = 0.0
    for _ in range(max_iter):
        w = lu.solve(M0 @ z)
        estimate = float(z @ (M0 @ w)) / float(z @ (M0 @ z))
        z = w / np.sqrt(w @ (M0 @ w))
        if abs(estimate - ratio) <= tol * estimate:
            return float(z @ (M0 @ z)) / float(z @ (K0 @ z))
        ratio = estimate
    raise RuntimeError(f"inverse power iteration did not converge in {max_iter} iterations")
