"""Axisymmetric reference solver for the wave equation in a straight cylinder.

Velocity potential ``phi`` and pressure ``p = rho phi_t`` live on the grid
``s_i = i ds`` (``i = 0..ns-1``, the Dirichlet plane ``s = 1`` eliminated)
times the staggered radii ``r_j = (j + 1/2) dr``. The scheme is a
finite-volume / summation-by-parts discretization:

* cell areas ``a_j = 2 pi r_j dr`` (they sum to ``pi R0^2``) and axial
  trapezoid weights ``h_i`` (``ds/2`` at ``s = 0``) give the diagonal mass
  ``m_ij = h_i a_j``;
* the stiffness ``K`` sums squared differences over axial edges (weight
  ``a_j / ds``, including the edge into the Dirichlet plane) and radial faces
  (weight ``h_i 2 pi r_{j+1/2} / dr``);
* the boundary closure enters through the outward normal fluxes ``q0``
  (``-phi_s`` at ``s = 0``) and ``qw`` (``phi_r`` at the wall), loaded with
  the face measures ``a_j`` and ``2 pi R0 h_i``.

Then ``<v, -K phi + B0 q0 + Bw qw>`` is a discrete Green identity for every
grid function ``v`` and the midpoint ledger telescopes to round-off.

Semi-discrete system::

    phi' = p / rho
    m p' = rho c^2 (-K phi + B0 q0 + Bw qw) + m g p
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import PhysicalConstants
from .node import DiscreteNode
from .stepper import LinearSystemHandle, SimulationResult, handle_from_node, run_simulation

__all__ = [
    "CylinderLedger",
    "CylinderRun",
    "CylinderSystem",
    "boundary_pairing",
    "build_cylinder",
    "cross_section_average",
    "cylinder_energy",
    "discrete_green_terms",
    "end_channel_power",
    "end_flux",
    "interior_power",
    "run_cylinder",
    "wall_power",
]


@dataclass
class CylinderSystem:
    """Grid, operators and the current fields ``phi``, ``p`` (both ``ns x nr``)."""

    R0: float
    consts: PhysicalConstants
    ns: int
    nr: int
    wall_alpha: float
    g_damp: np.ndarray | None
    phi: np.ndarray
    p: np.ndarray
    stiffness: sp.csr_matrix
    mass: np.ndarray  # diagonal, flattened ns*nr
    h: np.ndarray  # axial weights
    area: np.ndarray  # radial cell areas a_j
    node: DiscreteNode
    _handle: LinearSystemHandle | None = field(default=None, init=False, repr=False)

    @property
    def ds(self) -> float:
        return 1.0 / self.ns

    @property
    def dr(self) -> float:
        return self.R0 / self.nr

    @property
    def s(self) -> np.ndarray:
        return self.ds * np.arange(self.ns)

    @property
    def r(self) -> np.ndarray:
        return self.dr * (np.arange(self.nr) + 0.5)

    @property
    def A0(self) -> float:
        return np.pi * self.R0**2

    @property
    def weights(self) -> np.ndarray:
        """Normalized cross-section weights ``a_j / (pi R0^2)``."""
        return self.area / self.A0

    @property
    def wall_measure(self) -> np.ndarray:
        return 2 * np.pi * self.R0 * self.h

    @property
    def output_gain(self) -> float:
        return np.sqrt(self.A0 / (self.consts.rho * self.consts.c))

    @property
    def has_wall_channel(self) -> bool:
        return self.wall_alpha > 0

    def state(self) -> np.ndarray:
        return np.concatenate([self.phi.ravel(), self.p.ravel()])

    def set_state(self, x) -> None:
        x = np.asarray(x, dtype=float)
        n = self.ns * self.nr
        if x.shape != (2 * n,):
            raise ValueError(f"state has shape {x.shape}, expected ({2 * n},)")
        self.phi = x[:n].reshape(self.ns, self.nr).copy()
        self.p = x[n:].reshape(self.ns, self.nr).copy()

    def handle(self) -> LinearSystemHandle:
        if self._handle is None:
            self._handle = handle_from_node(self.node, dissipation_name="interior")
        return self._handle


def _axial_stiffness(ns: int) -> sp.csr_matrix:
    # edges (i, i+1) for i < ns-1 plus the edge into the eliminated node ns
    main = np.full(ns, 2.0)
    main[0] = 1.0
    off = -np.ones(ns - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _radial_stiffness(face: np.ndarray) -> sp.csr_matrix:
    nr = face.size + 1
    main = np.zeros(nr)
    main[:-1] += face
    main[1:] += face
    return sp.diags([-face, main, -face], [-1, 0, 1], format="csr")


def build_cylinder(
    R0: float,
    consts: PhysicalConstants,
    ns: int,
    nr: int,
    wall_alpha: float | None = None,
    g_damp=None,
) -> CylinderSystem:
    """Assemble the cylinder model with zero initial fields.

    ``wall_alpha`` defaults to ``consts.alpha``. ``g_damp`` is a scalar or an
    ``ns x nr`` field of non-positive interior damping coefficients.
    """
    if ns < 4:
        raise ValueError(f"ns must be at least 4, got {ns}")
    if nr < 2:
        raise ValueError(f"nr must be at least 2, got {nr}")
    if not R0 > 0:
        raise ValueError(f"R0 must be positive, got {R0}")
    alpha = consts.alpha if wall_alpha is None else float(wall_alpha)
    if not alpha >= 0:
        raise ValueError(f"wall_alpha must be non-negative, got {alpha}")
    g = None
    if g_damp is not None:
        g = np.broadcast_to(np.asarray(g_damp, dtype=float), (ns, nr)).copy()
        if not np.all(np.isfinite(g)):
            raise ValueError("g_damp must be finite")
        bad = np.argwhere(g > 0)
        if bad.size:
            raise ValueError(f"g_damp must be <= 0, positive entry at {tuple(bad[0])}")

    ds, dr = 1.0 / ns, R0 / nr
    r = dr * (np.arange(nr) + 0.5)
    area = 2 * np.pi * r * dr
    h = np.full(ns, ds)
    h[0] = 0.5 * ds
    face = 2 * np.pi * dr * np.arange(1, nr) / dr  # 2 pi r_{j+1/2} / dr
    K = (sp.kron(_axial_stiffness(ns), sp.diags(area / ds)) + sp.kron(sp.diags(h), _radial_stiffness(face))).tocsr()
    mass = np.outer(h, area).ravel()
    node = _cylinder_node(consts, ns, nr, alpha, g, K, mass, h, area, R0)
    zero = np.zeros((ns, nr))
    return CylinderSystem(R0, consts, ns, nr, alpha, g, zero, zero.copy(), K, mass, h, area, node)


def _cylinder_node(consts, ns, nr, alpha, g, K, mass, h, area, R0) -> DiscreteNode:
    """Node on ``z = (phi, p, q0, qw)``; ``qw`` exists only when ``alpha > 0``."""
    c, rho = consts.c, consts.rho
    n = ns * nr
    nw = ns if alpha > 0 else 0
    n_z = 2 * n + nr + nw
    rc2 = rho * c * c
    inv_m = sp.diags(rc2 / mass)
    end_cells = np.arange(nr)  # i = 0
    wall_cells = np.arange(ns) * nr + (nr - 1)
    B0 = sp.csr_matrix((area, (end_cells, np.arange(nr))), shape=(n, nr))
    blocks_q = [B0]
    if nw:
        Bw = sp.csr_matrix((2 * np.pi * R0 * h, (wall_cells, np.arange(ns))), shape=(n, ns))
        blocks_q.append(Bw)
    Bq = sp.hstack(blocks_q)
    top = sp.hstack([sp.csr_matrix((n, n)), sp.identity(n) / rho, sp.csr_matrix((n, nr + nw))])
    bottom = sp.hstack([-(inv_m @ K), sp.csr_matrix((n, n)), inv_m @ Bq])
    L = sp.vstack([top, bottom]).tocsr()
    X = 0.5 * sp.block_diag([rho * K, sp.diags(mass / rc2)]).tocsr()

    # end channel: G = k (rho c q0 + p), K = k (rho c q0 - p), k = sqrt(a/(rho c))/2
    k_end = 0.5 * np.sqrt(area / (rho * c))
    rows = np.arange(nr)
    G_rows = [
        sp.csr_matrix(
            (np.concatenate([k_end * rho * c, k_end]), (np.concatenate([rows, rows]), np.concatenate([2 * n + rows, n + end_cells]))),
            shape=(nr, n_z),
        )
    ]
    K_rows = [
        sp.csr_matrix(
            (np.concatenate([k_end * rho * c, -k_end]), (np.concatenate([rows, rows]), np.concatenate([2 * n + rows, n + end_cells]))),
            shape=(nr, n_z),
        )
    ]
    labels = ("end",) * nr
    if nw:
        # wall channel: G = k (sqrt(rho/alpha) qw + sqrt(alpha/rho) p), K with the minus sign
        k_w = 0.5 * np.sqrt(2 * np.pi * R0 * h)
        wr = np.arange(ns)
        qcols = 2 * n + nr + wr
        pcols = n + wall_cells
        a1, a2 = k_w * np.sqrt(rho / alpha), k_w * np.sqrt(alpha / rho)
        idx = (np.concatenate([wr, wr]), np.concatenate([qcols, pcols]))
        G_rows.append(sp.csr_matrix((np.concatenate([a1, a2]), idx), shape=(ns, n_z)))
        K_rows.append(sp.csr_matrix((np.concatenate([a1, -a2]), idx), shape=(ns, n_z)))
        labels += ("wall",) * ns
    H = None
    if g is not None:
        H = sp.block_diag([sp.csr_matrix((n, n)), sp.diags(g.ravel())]).tocsr()
    return DiscreteNode(
        X_ip=X,
        L_mat=L,
        G_mat=sp.vstack(G_rows).tocsr(),
        K_mat=sp.vstack(K_rows).tocsr(),
        H_mat=H,
        channel_labels=labels,
    )


def cross_section_average(sys: CylinderSystem, field_: np.ndarray | None = None) -> np.ndarray:
    """Area-weighted mean over each cross-section, ``sum_j f[i, j] w_j``."""
    f = sys.phi if field_ is None else np.asarray(field_, dtype=float)
    return f @ sys.weights


def cylinder_energy(sys: CylinderSystem) -> float:
    """``(rho phi.K phi + sum m p^2 / (rho c^2)) / 2``."""
    rho, c = sys.consts.rho, sys.consts.c
    phi = sys.phi.ravel()
    p = sys.p.ravel()
    return 0.5 * (rho * float(phi @ (sys.stiffness @ phi)) + float(sys.mass @ (p * p)) / (rho * c * c))


def wall_power(sys: CylinderSystem) -> float:
    """Grounded wall loss ``(alpha / rho) sum_i p[i, -1]^2 2 pi R0 h_i``."""
    if sys.wall_alpha == 0:
        return 0.0
    pw = sys.p[:, -1]
    return sys.wall_alpha / sys.consts.rho * float(sys.wall_measure @ (pw * pw))


def interior_power(sys: CylinderSystem) -> float:
    """Interior damping loss ``-(1/(rho c^2)) sum m g p^2``."""
    if sys.g_damp is None:
        return 0.0
    p = sys.p.ravel()
    rho, c = sys.consts.rho, sys.consts.c
    return -float(sys.mass @ (sys.g_damp.ravel() * p * p)) / (rho * c * c)


def end_channel_power(sys: CylinderSystem, u_field) -> tuple[float, float, np.ndarray]:
    """Scattering end powers ``(P_in, P_out, y)`` for the input ``u_field`` over ``s = 0``."""
    u = np.asarray(u_field, dtype=float)
    if u.shape != (sys.nr,):
        raise ValueError(f"u_field has shape {u.shape}, expected ({sys.nr},)")
    y = u - sys.output_gain * sys.p[0]
    w = sys.weights
    return float(w @ (u * u)), float(w @ (y * y)), y


def end_flux(sys: CylinderSystem, u_field) -> np.ndarray:
    """Outward normal derivative ``-phi_s`` at ``s = 0`` fixed by the input relation."""
    rho, c = sys.consts.rho, sys.consts.c
    u = np.asarray(u_field, dtype=float)
    return (2.0 * np.sqrt(c / (rho * sys.A0)) * u - sys.p[0] / rho) / c


def boundary_pairing(sys: CylinderSystem, u_field) -> float:
    """``sum_j a_j p[0, j] q0_j``: the end-face power the interior receives."""
    return float(sys.area @ (sys.p[0] * end_flux(sys, u_field)))


def discrete_green_terms(sys: CylinderSystem, phi, v, q0, qw=None) -> tuple[float, float, float]:
    """Return ``(<Lap phi, v>_m, <grad phi, grad v>, boundary pairing)``.

    ``Lap phi = m^{-1}(-K phi + B0 q0 + Bw qw)`` with prescribed normal fluxes;
    the first plus the second equals the third for any ``v``.
    """
    phi = np.asarray(phi, dtype=float).ravel()
    v = np.asarray(v, dtype=float).reshape(sys.ns, sys.nr)
    q0 = np.asarray(q0, dtype=float)
    qw = np.zeros(sys.ns) if qw is None else np.asarray(qw, dtype=float)
    load = np.zeros((sys.ns, sys.nr))
    load[0] += sys.area * q0
    load[:, -1] += sys.wall_measure * qw
    lap = (-(sys.stiffness @ phi) + load.ravel()) / sys.mass
    vf = v.ravel()
    lap_pair = float(vf @ (sys.mass * lap))
    grad_pair = float(vf @ (sys.stiffness @ phi))
    bnd = float(v[0] @ (sys.area * q0) + v[:, -1] @ (sys.wall_measure * qw))
    return lap_pair, grad_pair, bnd


@dataclass(frozen=True)
class CylinderLedger:
    """Per-step balance ``E_after - E_before = dt (P_in - P_out - P_wall - P_interior) + residual``.

    ``P_wall`` is the net wall loss ``P_wall_out - P_wall_in``; with the wall
    grounded ``P_wall_in = 0`` and ``P_wall = |y_wall|^2``.
    """

    dt: float
    E_before: np.ndarray
    E: np.ndarray
    P_in: np.ndarray
    P_out: np.ndarray
    P_wall: np.ndarray
    P_wall_in: np.ndarray
    P_wall_out: np.ndarray
    P_interior: np.ndarray
    residual: np.ndarray

    def relative_residual(self) -> np.ndarray:
        scale = np.maximum.reduce([self.E_before, self.E, self.dt * self.P_in, self.dt * self.P_wall_in])
        return np.abs(self.residual) / np.where(scale > 0, scale, 1.0)

    def cumulative_balance(self) -> float:
        flux = self.dt * np.sum(self.P_in - self.P_out - self.P_wall - self.P_interior)
        return float(self.E[-1] - self.E_before[0] - flux)

    def csv_rows(self, t):
        """Rows ``t,E,P_in,P_out,P_wall,P_interior,residual`` (``t`` at step ends)."""
        for k in range(self.E.size):
            yield [float(t[k + 1]), self.E[k], self.P_in[k], self.P_out[k], self.P_wall[k], self.P_interior[k], self.residual[k]]


@dataclass
class CylinderRun:
    t: np.ndarray
    y_end: np.ndarray  # (steps + 1, nr) endpoint outputs
    ledger: CylinderLedger
    snapshot_times: np.ndarray
    averages: np.ndarray  # (snapshots, ns) cross-section averages of phi
    raw: SimulationResult


def _sample(signal, t, width):
    if signal is None:
        return np.zeros((t.size, width))
    U = np.asarray(signal(t), dtype=float)
    if U.shape == (t.size,):
        return np.repeat(U[:, None], width, axis=1)
    if U.shape == (t.size, width):
        return U
    raise ValueError(f"signal returned shape {U.shape}, expected ({t.size},) or ({t.size}, {width})")


def run_cylinder(
    sys: CylinderSystem,
    signal: Callable | None,
    dt: float,
    t_final: float,
    radial_profile=None,
    wall_signal: Callable | None = None,
    record_stride: int = 0,
) -> CylinderRun:
    """Integrate from the current fields; the final fields are written back.

    ``signal(t)`` gives the end input, radially uniform if scalar-valued
    (optionally shaped by ``radial_profile``), or one value per ring. The
    wall channel is grounded unless ``wall_signal`` feeds it (one value per
    axial node, in units whose squared norm is the wall power).
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if wall_signal is not None and not sys.has_wall_channel:
        raise ValueError("wall input needs wall_alpha > 0")
    nr, ns = sys.nr, sys.ns
    n_steps = int(round(t_final / dt))
    t = dt * np.arange(n_steps + 1)
    U = _sample(signal, t, nr)
    if radial_profile is not None:
        prof = np.asarray(radial_profile, dtype=float)
        if prof.shape != (nr,):
            raise ValueError(f"radial_profile has shape {prof.shape}, expected ({nr},)")
        U = U * prof
    end_scale = np.sqrt(sys.weights)
    parts = [U * end_scale]
    if sys.has_wall_channel:
        parts.append(_sample(wall_signal, t, ns) * np.sqrt(sys.wall_measure))
    U_node = np.hstack(parts)
    table = dict(zip(t.tolist(), U_node))

    def node_signal(tt):
        tt = np.asarray(tt, dtype=float)
        if tt.ndim == 0:
            return table[float(tt)]
        return np.array([table[float(v)] for v in tt])

    n = ns * nr

    def observe(x):
        return (x[:n].reshape(ns, nr)) @ sys.weights

    res = run_simulation(
        sys.handle(), node_signal, dt, n_steps * dt, record_stride=record_stride, x0=sys.state(), observer=observe
    )
    sys.set_state(res.final_state)
    L = res.ledger
    wall_in = L.group_in.get("wall", np.zeros(n_steps))
    wall_out = L.group_out.get("wall", np.zeros(n_steps))
    interior = L.diss.get("interior", np.zeros(n_steps))
    P_wall = wall_out - wall_in
    ledger = CylinderLedger(
        dt=dt,
        E_before=L.E_before,
        E=L.E_after,
        P_in=L.group_in["end"],
        P_out=L.group_out["end"],
        P_wall=P_wall,
        P_wall_in=wall_in,
        P_wall_out=wall_out,
        P_interior=interior,
        residual=L.residual,
    )
    y_end = np.atleast_2d(res.y_endpoint)[:, :nr] / end_scale
    return CylinderRun(t, y_end, ledger, res.snapshot_times, np.asarray(res.snapshots), res)
