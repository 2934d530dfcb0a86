"""Finite-dimensional boundary nodes and their energy checks.

A :class:`DiscreteNode` is a triple ``(G, L, K)`` acting on a *solution
space* vector ``z = (x, q)``. The leading ``n_state`` entries ``x`` are the
energy state (weighted by the Gram matrix ``X_ip``); the trailing entries
``q`` are boundary trace variables (normal fluxes) that a PDE solution
carries but the energy state does not. With this split

* ``L`` maps ``z`` to the time derivative of ``x``,
* ``G z`` is the input and ``K z`` the output (channel norms folded in),
* ``u = G z`` is a genuine boundary condition that fixes ``q`` given ``x``.

The central quantity is the Green-Lagrange defect

    d(z) = |G z|^2 - |K z|^2 - 2 <x, (L + H) z>_X,

which is non-negative for a passive node and vanishes identically for an
energy-preserving one. Trace coordinate ``k`` is assumed to belong to input
row ``k``, so the input block ``G[:, n_state:]`` is square and invertible.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "DefectReport",
    "DiscreteNode",
    "KernelReport",
    "SingularSystemError",
    "StateSpace",
    "add_dissipation",
    "dissipativity_on_kernel",
    "gl_defect",
    "gl_defects",
    "ground_channels",
    "passivity_check",
    "solve_stationary",
    "state_space",
    "timeflow_inverse",
]


class SingularSystemError(RuntimeError):
    """The constrained stationary problem has no unique solution."""


def _dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)


def _shape_ok(a, shape, name):
    if a.shape != shape:
        raise ValueError(f"{name} has shape {a.shape}, expected {shape}")


@dataclass(frozen=True)
class DiscreteNode:
    """Discrete boundary node ``(G, L + H, K)`` with energy Gram matrix ``X_ip``.

    Matrices may be dense arrays or scipy sparse matrices. ``channel_labels``
    holds one label per input row; rows sharing a label form a channel group.
    """

    X_ip: np.ndarray
    L_mat: np.ndarray
    G_mat: np.ndarray
    K_mat: np.ndarray
    H_mat: np.ndarray | None = None
    channel_labels: tuple[str, ...] = ()

    def __post_init__(self):
        n_x = self.X_ip.shape[0]
        _shape_ok(self.X_ip, (n_x, n_x), "X_ip")
        if self.L_mat.shape[0] != n_x or self.L_mat.shape[1] < n_x:
            raise ValueError(f"L_mat has shape {self.L_mat.shape}, expected ({n_x}, >= {n_x})")
        n_z = self.L_mat.shape[1]
        if self.G_mat.ndim != 2 or self.G_mat.shape[1] != n_z:
            raise ValueError(f"G_mat has shape {self.G_mat.shape}, expected (m, {n_z})")
        if self.K_mat.ndim != 2 or self.K_mat.shape[1] != n_z:
            raise ValueError(f"K_mat has shape {self.K_mat.shape}, expected (m, {n_z})")
        if self.H_mat is not None:
            _shape_ok(self.H_mat, (n_x, n_x), "H_mat")
        labels = tuple(self.channel_labels) or ("u",) * self.G_mat.shape[0]
        if len(labels) != self.G_mat.shape[0]:
            raise ValueError("channel_labels must have one entry per input row")
        object.__setattr__(self, "channel_labels", labels)

        asym = self.X_ip - self.X_ip.T
        asym = abs(asym).max() if sp.issparse(asym) else np.abs(asym).max(initial=0.0)
        big = abs(self.X_ip).max() if sp.issparse(self.X_ip) else np.abs(self.X_ip).max()
        if asym > 1e-12 * big:
            raise ValueError("X_ip is not symmetric")
        if not sp.issparse(self.X_ip):
            try:
                np.linalg.cholesky(self.X_ip)
            except np.linalg.LinAlgError:
                raise ValueError("X_ip is not positive definite") from None

    @property
    def n_state(self) -> int:
        return self.X_ip.shape[0]

    @property
    def dim(self) -> int:
        """Dimension of the solution space (state plus trace coordinates)."""
        return self.L_mat.shape[1]

    @property
    def n_trace(self) -> int:
        return self.dim - self.n_state

    @property
    def n_inputs(self) -> int:
        return self.G_mat.shape[0]

    def rows(self, label: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.channel_labels) == label)

    def energy(self, z) -> np.ndarray:
        """Stored energy ``<x, x>_X`` of one sample or of each column of ``z``."""
        x = np.asarray(z)[: self.n_state]
        return np.einsum("i...,i...->...", x, self.X_ip @ x)

    def interior(self, z) -> np.ndarray:
        """``(L + H) z``, the state derivative."""
        z = np.asarray(z)
        out = self.L_mat @ z
        if self.H_mat is not None:
            out = out + self.H_mat @ z[: self.n_state]
        return out

    def is_positive_definite(self) -> bool:
        if not sp.issparse(self.X_ip):
            return True  # checked on construction
        lam = spla.eigsh(self.X_ip.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)
        return bool(lam[0] > 0)

    def replace(self, **changes) -> "DiscreteNode":
        return dataclasses.replace(self, **changes)


def _defect_terms(node: DiscreteNode, Z):
    Z = np.asarray(Z, dtype=float)
    X = Z[: node.n_state]
    Gz = node.G_mat @ Z
    Kz = node.K_mat @ Z
    power = 2.0 * np.einsum("i...,i...->...", X, node.X_ip @ node.interior(Z))
    gg = np.einsum("i...,i...->...", Gz, Gz)
    kk = np.einsum("i...,i...->...", Kz, Kz)
    return gg, kk, power


def gl_defect(node: DiscreteNode, z) -> float:
    """Green-Lagrange defect ``|Gz|^2 - |Kz|^2 - 2<x, (L+H)z>_X`` of one vector."""
    z = np.asarray(z, dtype=float)
    if z.shape != (node.dim,):
        raise ValueError(f"state has shape {z.shape}, expected ({node.dim},)")
    gg, kk, power = _defect_terms(node, z)
    return float(gg - kk - power)


def gl_defects(node: DiscreteNode, Z) -> tuple[np.ndarray, np.ndarray]:
    """Defects and scales ``|z|_X^2 + |Gz|^2`` for every column of ``Z``."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != node.dim:
        raise ValueError(f"samples have shape {Z.shape}, expected ({node.dim}, k)")
    gg, kk, power = _defect_terms(node, Z)
    return gg - kk - power, node.energy(Z) + gg


@dataclass(frozen=True)
class DefectReport:
    """Sampled Green-Lagrange defects.

    ``min_defect`` and ``max_abs_identity_residual`` are relative to the
    per-sample scale ``|z|_X^2 + |Gz|^2``; the raw arrays are kept for export.
    """

    samples: int
    min_defect: float
    max_abs_identity_residual: float
    verdict: Literal["conservative", "passive", "not-passive"]
    defects: np.ndarray
    scales: np.ndarray

    def rows(self):
        """CSV rows ``sample, defect, scale``."""
        for i, (d, s) in enumerate(zip(self.defects, self.scales)):
            yield i, float(d), float(s)

    def summary(self) -> dict:
        return {
            "samples": self.samples,
            "min_defect": self.min_defect,
            "max_abs_identity_residual": self.max_abs_identity_residual,
            "verdict": self.verdict,
        }


def sample_states(n: int, n_samples: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, n_samples))


def passivity_check(node: DiscreteNode, n_samples: int = 100, seed: int = 42, tol: float = 1e-10) -> DefectReport:
    """Classify ``node`` from defects of seeded standard-normal samples."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    d, scale = gl_defects(node, sample_states(node.dim, n_samples, seed))
    rel = d / scale
    max_abs = float(np.max(np.abs(rel)))
    min_rel = float(np.min(rel))
    if max_abs <= tol:
        verdict = "conservative"
    elif min_rel >= -tol:
        verdict = "passive"
    else:
        verdict = "not-passive"
    return DefectReport(n_samples, min_rel, max_abs, verdict, d, scale)


def _pad_state(node: DiscreteNode, H):
    """Embed an ``n_state x n_state`` block as an ``n_state x dim`` matrix."""
    if node.n_trace == 0:
        return H
    if sp.issparse(H) or sp.issparse(node.L_mat):
        return sp.hstack([sp.csr_matrix(H), sp.csr_matrix((node.n_state, node.n_trace))]).tocsr()
    return np.hstack([H, np.zeros((node.n_state, node.n_trace))])


def timeflow_inverse(node: DiscreteNode, convention: Literal["reverse", "adjoint"] = "reverse") -> DiscreteNode:
    """Swap input and output and reverse the interior dynamics.

    ``reverse`` negates the whole interior operator ``L + H`` (pure time
    reversal, the defect changes sign). ``adjoint`` negates ``L`` only and
    keeps the dissipative ``H``, giving the passive node ``(K, -L + H, G)``
    that generates the adjoint semigroup.
    """
    if convention == "adjoint" or node.H_mat is None:
        L_new = -node.L_mat
        H_new = node.H_mat
    elif convention == "reverse":
        L_new = -(node.L_mat + _pad_state(node, node.H_mat))
        H_new = None
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return node.replace(L_mat=L_new, H_mat=H_new, G_mat=node.K_mat, K_mat=node.G_mat)


def add_dissipation(node: DiscreteNode, H, n_samples: int = 20, seed: int = 0, tol: float = 1e-12) -> DiscreteNode:
    """Return ``(G, L + H_old + H, K)`` after a sampled dissipativity check on ``H``."""
    X = sample_states(node.n_state, n_samples, seed)
    form = np.einsum("ij,ij->j", X, node.X_ip @ (H @ X))
    if np.any(form > tol * node.energy(X)):
        raise ValueError("H is not dissipative in the energy inner product")
    H_new = H if node.H_mat is None else node.H_mat + H
    return node.replace(H_mat=H_new)


@dataclass(frozen=True)
class KernelReport:
    kernel_of: str
    samples: int
    max_residual: float
    passed: bool


def _row_space_projector(C):
    CCt = _dense(C @ C.T)
    lam = np.linalg.eigvalsh(CCt)
    if lam[0] <= 1e-12 * lam[-1]:
        raise ValueError("channel matrix is rank deficient")
    factor = sla.cho_factor(CCt)

    def project(Z):
        return Z - C.T @ sla.cho_solve(factor, C @ Z)

    return project


def dissipativity_on_kernel(
    node: DiscreteNode,
    kernel_of: Literal["G", "K"] = "G",
    n_samples: int = 100,
    seed: int = 42,
    tol: float = 1e-10,
) -> KernelReport:
    """Check dissipativity of the generator on ``ker G`` (or its adjoint on ``ker K``).

    On ``ker G`` the quantity ``2<x, (L+H)z>_X + |Kz|^2`` must be ``<= 0``; on
    ``ker K`` the same holds for ``2<x, (-L+H)z>_X + |Gz|^2``. Residuals are
    relative to ``|z|_X^2`` plus the surviving channel power.
    """
    if kernel_of == "G":
        C, other, sign = node.G_mat, node.K_mat, 1.0
    elif kernel_of == "K":
        C, other, sign = node.K_mat, node.G_mat, -1.0
    else:
        raise ValueError(f"kernel_of must be 'G' or 'K', got {kernel_of!r}")
    Z = _row_space_projector(C)(sample_states(node.dim, n_samples, seed))
    X = Z[: node.n_state]
    Lz = sign * (node.L_mat @ Z)
    if node.H_mat is not None:
        Lz = Lz + node.H_mat @ X
    Oz = other @ Z
    oo = np.einsum("ij,ij->j", Oz, Oz)
    res = 2.0 * np.einsum("ij,ij->j", X, node.X_ip @ Lz) + oo
    rel = res / (node.energy(Z) + oo)
    worst = float(np.max(rel))
    return KernelReport(kernel_of, n_samples, worst, worst <= tol)


@dataclass(frozen=True)
class StateSpace:
    """Node reduced to ``x' = F x + B u``, ``y = C x + D u``.

    ``Tx`` and ``Tu`` rebuild the trace coordinates: ``q = Tx x + Tu u``.
    """

    F: object
    B: object
    C: object
    D: object
    Tx: object
    Tu: object

    def solution_vector(self, x, u):
        x = np.asarray(x, dtype=float)
        q = self.Tx @ x + self.Tu @ np.atleast_1d(u)
        return np.concatenate([x, np.asarray(q).ravel()])


def _inverse_square(Gq):
    if sp.issparse(Gq):
        Gq = Gq.tocsr()
        d = Gq.diagonal()
        if Gq.count_nonzero() == np.count_nonzero(d) and np.all(d != 0):
            return sp.diags(1.0 / d).tocsr()
        return sp.csr_matrix(np.linalg.inv(Gq.toarray()))
    return np.linalg.inv(Gq)


def state_space(node: DiscreteNode) -> StateSpace:
    """Eliminate the trace coordinates through the input relation ``u = G z``."""
    n_x = node.n_state
    if node.n_trace != node.n_inputs:
        raise ValueError(
            f"input relation cannot fix the trace: {node.n_inputs} inputs for {node.n_trace} trace coordinates"
        )
    G, L, K = node.G_mat, node.L_mat, node.K_mat
    if sp.issparse(G):
        G, L, K = G.tocsc(), sp.csc_matrix(L), sp.csc_matrix(K)
    try:
        Gq_inv = _inverse_square(G[:, n_x:])
    except np.linalg.LinAlgError:
        raise SingularSystemError("input block of G is singular") from None
    Tx = -(Gq_inv @ G[:, :n_x])
    Tu = Gq_inv
    Lx, Lq = L[:, :n_x], L[:, n_x:]
    F = Lx + Lq @ Tx
    if node.H_mat is not None:
        F = F + node.H_mat
    B = Lq @ Tu
    C = K[:, :n_x] + K[:, n_x:] @ Tx
    D = K[:, n_x:] @ Tu
    if sp.issparse(F):
        F, B, C, D = (sp.csr_matrix(a) for a in (F, B, C, D))
    return StateSpace(F, B, C, D, Tx, Tu)


def _matvec_ext(A, x) -> np.ndarray:
    """``A @ x`` accumulated in extended precision."""
    x = np.asarray(x, dtype=np.longdouble)
    if sp.issparse(A):
        A = A.tocsr()
        prod = A.data.astype(np.longdouble) * x[A.indices]
        out = np.zeros(A.shape[0], dtype=np.longdouble)
        nz = np.diff(A.indptr) > 0
        out[nz] = np.add.reduceat(prod, A.indptr[:-1][nz])
        return out
    return np.asarray(A, dtype=np.longdouble) @ x


def _energy_norm(node: DiscreteNode, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ (node.X_ip @ v), 0.0)))


def solve_stationary(node: DiscreteNode, w, rtol: float = 1e-10, refine: int = 2) -> np.ndarray:
    """Solve ``(L + H) z = w`` subject to ``G z = 0``.

    The input rows are eliminated first (``q = Tx x``), leaving a square
    system for the state, which is solved by LU with ``refine`` steps of
    iterative refinement on extended-precision residuals. Raises
    :class:`SingularSystemError` when the system is singular or the
    residuals exceed ``rtol``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (node.n_state,):
        raise ValueError(f"right-hand side has shape {w.shape}, expected ({node.n_state},)")
    ss = state_space(node)
    try:
        with np.errstate(all="raise"):
            if sp.issparse(ss.F):
                solve = spla.splu(ss.F.tocsc()).solve
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    lu = sla.lu_factor(ss.F, check_finite=True)
                if np.any(np.diag(lu[0]) == 0):
                    raise np.linalg.LinAlgError("exactly zero pivot")
                solve = lambda b: sla.lu_solve(lu, b)  # noqa: E731
            x = solve(w)
            for _ in range(refine):
                r = _matvec_ext(ss.F, x) - w.astype(np.longdouble)
                x = x - solve(r.astype(float))
    except (RuntimeError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise SingularSystemError(f"stationary problem is singular: {exc}") from None
    z = ss.solution_vector(x, np.zeros(node.n_inputs))
    res, gres = stationary_residuals(node, z, w)
    if not (np.isfinite(res) and res <= rtol and gres <= rtol):
        raise SingularSystemError(f"stationary residuals too large: interior {res:.3g}, boundary {gres:.3g}")
    return z


def stationary_residuals(node: DiscreteNode, z, w) -> tuple[float, float]:
    """Relative residuals of ``(L+H) z = w`` and ``G z = 0``.

    The interior residual is measured in the energy norm of the state space,
    ``|(L+H) z - w|_X / |w|_X``, with the product accumulated in extended
    precision; the boundary residual is ``|Gz|`` relative to the sizes of its
    state and trace parts.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    Lz = _matvec_ext(node.L_mat, z)
    if node.H_mat is not None:
        Lz = Lz + _matvec_ext(node.H_mat, z[: node.n_state])
    diff = (Lz - w.astype(np.longdouble)).astype(float)
    r = _energy_norm(node, diff) / max(_energy_norm(node, w), np.finfo(float).tiny)
    n_x = node.n_state
    Gx = node.G_mat[:, :n_x] @ z[:n_x]
    Gq = node.G_mat[:, n_x:] @ z[n_x:]
    g = np.linalg.norm(Gx + Gq) / max(np.linalg.norm(Gx) + np.linalg.norm(Gq), np.finfo(float).tiny)
    return float(r), float(g)


def ground_channels(node: DiscreteNode, label: str) -> DiscreteNode:
    """Restrict ``node`` to the kernel of the input rows labelled ``label``.

    The grounded rows' own trace coordinates are eliminated, the rows are
    removed from ``G`` and ``K``; their output power becomes part of the
    defect of the returned node.
    """
    n_x = node.n_state
    rows = node.rows(label)
    if rows.size == 0:
        raise ValueError(f"node has no channel labelled {label!r}")
    keep = np.setdiff1d(np.arange(node.n_inputs), rows)
    tr_drop = n_x + rows
    tr_keep = n_x + keep
    cols_keep = np.concatenate([np.arange(n_x), tr_keep])
    G = node.G_mat.tocsc() if sp.issparse(node.G_mat) else node.G_mat
    Gg = G[rows]
    Gg_own = Gg[:, tr_drop]
    Gg_rest = Gg[:, cols_keep]
    inv = _inverse_square(Gg_own)
    # z = E z', with z' = (x, q_keep) and q_drop = -inv Gg_rest z'
    n_new = cols_keep.size
    if sp.issparse(G):
        select = sp.csr_matrix((np.ones(n_new), (cols_keep, np.arange(n_new))), shape=(node.dim, n_new))
        scatter = sp.csr_matrix((np.ones(rows.size), (tr_drop, np.arange(rows.size))), shape=(node.dim, rows.size))
        E = (select - scatter @ sp.csr_matrix(inv @ Gg_rest)).tocsr()
    else:
        E = np.zeros((node.dim, n_new))
        E[cols_keep, np.arange(n_new)] = 1.0
        E[tr_drop] = -(inv @ Gg_rest)
    labels = tuple(node.channel_labels[i] for i in keep)
    K = node.K_mat.tocsr() if sp.issparse(node.K_mat) else node.K_mat
    return node.replace(L_mat=node.L_mat @ E, G_mat=G[keep] @ E, K_mat=K[keep] @ E, channel_labels=labels)
