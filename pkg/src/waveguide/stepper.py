"""Implicit-midpoint time stepping with an exact per-step energy ledger.

Systems are given in mass form

    M x' = A x + B u,        y = C x + D u,

together with the stored-energy Gram matrix ``X`` (``E = x^T X x``) and a set
of positive semidefinite dissipation forms. The midpoint rule

    (M - dt/2 A) x1 = (M + dt/2 A) x0 + dt B (u0 + u1)/2

satisfies ``E1 - E0 = 2 dt x_mid^T X M^{-1}(A x_mid + B u_mid)`` exactly for
quadratic ``E``. When the assembly obeys its Green-Lagrange identity the right
side splits into ``dt (|u_mid|^2 - |y_mid|^2 - sum of dissipations)``, so the
ledger residual is pure round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .node import DiscreteNode, state_space
from .signals import input_signals  # noqa: F401  (re-exported)

__all__ = [
    "EnergyLedger",
    "LinearSystemHandle",
    "MidpointStepper",
    "SimulationResult",
    "handle_from_node",
    "input_signals",
    "midpoint_step",
    "run_simulation",
]


def _csr(a):
    return sp.csr_matrix(a) if not sp.issparse(a) else a.tocsr()


@dataclass
class LinearSystemHandle:
    """Linear system with inputs, outputs, energy and dissipation forms.

    ``channel_labels`` names each input (and matching output) row so the
    ledger can report powers per channel group. ``trace_input`` maps a state
    to the input value its boundary traces imply, used to flag incompatible
    initial data.
    """

    mass: sp.spmatrix
    dynamics: sp.spmatrix
    input_matrix: sp.spmatrix
    output_matrix: sp.spmatrix
    feedthrough: np.ndarray
    energy_form: sp.spmatrix
    dissipation_forms: Mapping[str, sp.spmatrix] = field(default_factory=dict)
    channel_labels: tuple[str, ...] = ()
    trace_input: Callable[[np.ndarray], np.ndarray] | None = None
    _factors: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.mass = _csr(self.mass)
        self.dynamics = _csr(self.dynamics)
        self.input_matrix = _csr(self.input_matrix)
        self.output_matrix = _csr(self.output_matrix)
        D = self.feedthrough.toarray() if sp.issparse(self.feedthrough) else self.feedthrough
        self.feedthrough = np.atleast_2d(np.asarray(D, dtype=float))
        self.energy_form = _csr(self.energy_form)
        self.dissipation_forms = {k: _csr(v) for k, v in self.dissipation_forms.items()}
        n = self.dim
        for name in ("mass", "dynamics", "energy_form"):
            if getattr(self, name).shape != (n, n):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected ({n}, {n})")
        m = self.input_matrix.shape[1]
        if not self.channel_labels:
            self.channel_labels = ("u",) * m
        if len(self.channel_labels) != m:
            raise ValueError("channel_labels must name every input")
        if self.output_matrix.shape != (m, n) or self.feedthrough.shape != (m, m):
            raise ValueError("outputs must pair one-to-one with inputs")

    @property
    def dim(self) -> int:
        return self.mass.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_matrix.shape[1]

    def energy(self, x) -> float:
        return float(x @ (self.energy_form @ x))

    def output(self, x, u) -> np.ndarray:
        return self.output_matrix @ x + self.feedthrough @ u

    def factor(self, dt: float) -> "MidpointStepper":
        if dt not in self._factors:
            self._factors[dt] = MidpointStepper(self, dt)
        return self._factors[dt]


class MidpointStepper:
    """Cached factorization of ``M - dt/2 A`` for one ``dt`` (negative allowed)."""

    def __init__(self, handle: LinearSystemHandle, dt: float):
        if dt == 0:
            raise ValueError("dt must be non-zero")
        self.dt = dt
        half = 0.5 * dt * handle.dynamics
        self._rhs = (handle.mass + half).tocsr()
        try:
            self._lu = spla.splu((handle.mass - half).tocsc())
        except RuntimeError as exc:
            raise RuntimeError(f"implicit midpoint matrix is singular (assembly bug?): {exc}") from None
        self._B = handle.input_matrix * dt

    def step(self, x, u_mid) -> np.ndarray:
        return self._lu.solve(self._rhs @ x + self._B @ u_mid)


def midpoint_step(handle: LinearSystemHandle, state, u_n, u_np1, dt: float) -> np.ndarray:
    """Advance ``state`` by one implicit-midpoint step."""
    u_mid = 0.5 * (np.atleast_1d(np.asarray(u_n, dtype=float)) + np.atleast_1d(np.asarray(u_np1, dtype=float)))
    return handle.factor(dt).step(np.asarray(state, dtype=float), u_mid)


@dataclass(frozen=True)
class EnergyLedger:
    """Per-step balance, one entry per step in each array.

    ``residual = (E_after - E_before) - dt (p_in - p_out - p_diss)`` with all
    powers evaluated at the midpoint state. ``group_in``/``group_out`` split
    the channel powers by label, ``diss`` splits ``p_diss`` by form name.
    """

    dt: float
    E_before: np.ndarray
    E_after: np.ndarray
    p_in: np.ndarray
    p_out: np.ndarray
    p_diss: np.ndarray
    residual: np.ndarray
    group_in: Mapping[str, np.ndarray]
    group_out: Mapping[str, np.ndarray]
    diss: Mapping[str, np.ndarray]

    @property
    def n_steps(self) -> int:
        return self.E_before.size

    def relative_residual(self) -> np.ndarray:
        scale = np.maximum(np.maximum(self.E_before, self.E_after), self.dt * self.p_in)
        scale = np.where(scale > 0, scale, 1.0)
        return np.abs(self.residual) / scale

    def cumulative_balance(self) -> float:
        """``E(T) - E(0) - sum dt (p_in - p_out - p_diss)``."""
        flux = self.dt * np.sum(self.p_in - self.p_out - self.p_diss)
        return float(self.E_after[-1] - self.E_before[0] - flux)


@dataclass
class SimulationResult:
    t: np.ndarray
    u: np.ndarray
    y_endpoint: np.ndarray
    y_midpoint: np.ndarray
    ledger: EnergyLedger
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    final_state: np.ndarray
    compatibility_gap: float | None = None
    incompatible: bool = False

    @property
    def E(self) -> np.ndarray:
        return np.concatenate([self.ledger.E_before[:1], self.ledger.E_after])

    def csv_rows(self):
        """Rows of ``t,u,y_endpoint,y_midpoint,E,p_in,p_out,p_diss,residual``.

        Step ``n`` reports the endpoint values at ``t_n`` and the ledger of the
        step ending at ``t_n`` (empty at ``n = 0``).
        """
        L = self.ledger
        first = lambda a: float(a[0]) if np.ndim(a) else float(a)  # noqa: E731
        for n, t in enumerate(self.t):
            row = [float(t), first(self.u[n]), first(self.y_endpoint[n])]
            if n == 0:
                row += ["", self.E[0], "", "", "", ""]
            else:
                k = n - 1
                row += [first(self.y_midpoint[k]), L.E_after[k], L.p_in[k], L.p_out[k], L.p_diss[k], L.residual[k]]
            yield row


def _sample_inputs(signal, t, m):
    if signal is None:
        return np.zeros((t.size, m))
    try:
        U = np.asarray(signal(t), dtype=float)
    except (TypeError, ValueError):
        U = None
    if U is not None and U.shape == (t.size,) and m == 1:
        return U[:, None]
    if U is not None and U.shape == (t.size, m):
        return U
    U = np.array([np.broadcast_to(np.asarray(signal(ti), dtype=float), (m,)) for ti in t])
    return U


def run_simulation(
    handle: LinearSystemHandle,
    signal: Callable | None,
    dt: float,
    t_final: float,
    record_stride: int = 0,
    x0=None,
    forcing: Callable[[float], np.ndarray] | None = None,
    compat_tol: float = 1e-8,
    observer: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SimulationResult:
    """Integrate from ``x0`` (default zero) to ``t_final`` with a fixed step.

    ``signal(t)`` returns the input vector (a scalar for one channel). The
    optional ``forcing(t)`` adds an interior source ``M x' = ... + f(t)``;
    its power is booked under the dissipation name ``"source"`` with a
    negative sign. ``record_stride > 0`` keeps every that-many-th state, or
    ``observer(state)`` of it when an observer is given.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_final > 0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    n_steps = int(round(t_final / dt))
    if n_steps < 1:
        raise ValueError("t_final shorter than one step")
    t = dt * np.arange(n_steps + 1)
    m = handle.n_inputs
    U = _sample_inputs(signal, t, m)

    x = np.zeros(handle.dim) if x0 is None else np.array(x0, dtype=float)
    stepper = handle.factor(dt)
    X = handle.energy_form
    C, D = handle.output_matrix, handle.feedthrough
    forms = handle.dissipation_forms
    labels = np.asarray(handle.channel_labels)
    groups = {g: np.flatnonzero(labels == g) for g in dict.fromkeys(handle.channel_labels)}
    if forcing is not None:
        # power of a source s: 2 x^T X M^{-1} s
        Mlu = spla.splu(handle.mass.tocsc())

    E_before = np.empty(n_steps)
    E_after = np.empty(n_steps)
    p_in = np.empty(n_steps)
    p_out = np.empty(n_steps)
    p_diss = np.zeros(n_steps)
    diss = {k: np.empty(n_steps) for k in forms}
    if forcing is not None:
        diss["source"] = np.empty(n_steps)
    g_in = {g: np.empty(n_steps) for g in groups}
    g_out = {g: np.empty(n_steps) for g in groups}
    Y_end = np.empty((n_steps + 1, m))
    Y_mid = np.empty((n_steps, m))
    snaps_t, snaps = [], []
    observe = observer if observer is not None else (lambda v: v.copy())

    gap = None
    incompatible = False
    if handle.trace_input is not None:
        gap = float(np.linalg.norm(np.atleast_1d(handle.trace_input(x)) - U[0]))
        incompatible = gap > compat_tol * max(1.0, float(np.linalg.norm(U[0])))

    E0 = float(x @ (X @ x))
    Y_end[0] = C @ x + D @ U[0]
    if record_stride > 0:
        snaps_t.append(t[0])
        snaps.append(observe(x))
    for n in range(n_steps):
        u_mid = 0.5 * (U[n] + U[n + 1])
        if forcing is None:
            x1 = stepper.step(x, u_mid)
        else:
            f_mid = 0.5 * (np.asarray(forcing(t[n])) + np.asarray(forcing(t[n + 1])))
            x1 = stepper.step(x, u_mid) + stepper._lu.solve(dt * f_mid)
        xm = 0.5 * (x + x1)
        E1 = float(x1 @ (X @ x1))
        ym = C @ xm + D @ u_mid
        for g, idx in groups.items():
            g_in[g][n] = u_mid[idx] @ u_mid[idx]
            g_out[g][n] = ym[idx] @ ym[idx]
        total = 0.0
        for k, Q in forms.items():
            v = float(xm @ (Q @ xm))
            diss[k][n] = v
            total += v
        if forcing is not None:
            v = -2.0 * float(xm @ (X @ Mlu.solve(f_mid)))
            diss["source"][n] = v
            total += v
        p_diss[n] = total
        p_in[n] = u_mid @ u_mid
        p_out[n] = ym @ ym
        E_before[n] = E0
        E_after[n] = E1
        Y_mid[n] = ym
        Y_end[n + 1] = C @ x1 + D @ U[n + 1]
        x, E0 = x1, E1
        if record_stride > 0 and (n + 1) % record_stride == 0:
            snaps_t.append(t[n + 1])
            snaps.append(observe(x))

    residual = (E_after - E_before) - dt * (p_in - p_out - p_diss)
    ledger = EnergyLedger(dt, E_before, E_after, p_in, p_out, p_diss, residual, g_in, g_out, diss)
    squeeze = (lambda a: a[:, 0]) if m == 1 else (lambda a: a)
    return SimulationResult(
        t=t,
        u=squeeze(U),
        y_endpoint=squeeze(Y_end),
        y_midpoint=squeeze(Y_mid),
        ledger=ledger,
        snapshot_times=np.asarray(snaps_t),
        snapshots=np.asarray(snaps),
        final_state=x,
        compatibility_gap=gap,
        incompatible=incompatible,
    )


def handle_from_node(node: DiscreteNode, dissipation_name: str = "H") -> LinearSystemHandle:
    """Reduce a node to a stepping handle (identity mass).

    All channels become inputs; grounding a channel means feeding it zero.
    ``H`` contributes the dissipation form ``-(X H + H^T X)``.
    """
    ss = state_space(node)
    n = node.n_state
    X = _csr(node.X_ip)
    forms = {}
    if node.H_mat is not None:
        XH = X @ _csr(node.H_mat)
        forms[dissipation_name] = -(XH + XH.T)
    return LinearSystemHandle(
        mass=sp.identity(n, format="csr"),
        dynamics=_csr(ss.F),
        input_matrix=_csr(ss.B),
        output_matrix=_csr(ss.C),
        feedthrough=ss.D,
        energy_form=X,
        dissipation_forms=forms,
        channel_labels=node.channel_labels,
    )
