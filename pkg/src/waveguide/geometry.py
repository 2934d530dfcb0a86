"""Tube geometry: centreline samples and the derived fields both models use.

A tube is described on normalized arc length ``s in [0, 1]`` by its radius
``R(s)``, the radius derivative ``R'(s)`` and the planar centreline curvature
``kappa(s)``. From these we derive

* area            ``A = pi R^2``
* curvature ratio ``eta = R kappa``           (must stay below 1)
* speed factor    ``sigma = (1 + eta^2/4)^(-1/2)``
* stretching      ``w_str = R sqrt(R'^2 + (eta - 1)^2)``
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = [
    "PhysicalConstants",
    "TubeGeometry",
    "build_profile",
    "derived_fields",
    "load_profile_table",
    "validate_geometry",
    "PROFILE_KINDS",
]

PROFILE_KINDS = ("constant", "cone", "exponential", "bump", "table")


@dataclass(frozen=True)
class PhysicalConstants:
    """Base sound speed ``c`` (m/s), density ``rho`` (kg/m^3), dissipation ``alpha``."""

    c: float = 343.0
    rho: float = 1.2
    alpha: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"sound speed must be positive, got c={self.c}")
        if not self.rho > 0:
            raise ValueError(f"density must be positive, got rho={self.rho}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got alpha={self.alpha}")


def derived_fields(R, Rp, kappa):
    """Return ``(A, eta, sigma, w_str)`` evaluated elementwise."""
    R = np.asarray(R, dtype=float)
    Rp = np.asarray(Rp, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    A = np.pi * R**2
    eta = R * kappa
    sigma = 1.0 / np.sqrt(1.0 + 0.25 * eta**2)
    w_str = R * np.sqrt(Rp**2 + (eta - 1.0) ** 2)
    return A, eta, sigma, w_str


@dataclass(frozen=True)
class TubeGeometry:
    """Sampled tube profile on a grid of ``s`` over [0, 1].

    Only ``s``, ``R``, ``Rp`` and ``kappa`` are stored by the caller; the
    remaining fields are recomputed from them on construction.
    """

    s: np.ndarray
    R: np.ndarray
    Rp: np.ndarray
    kappa: np.ndarray
    A: np.ndarray = field(init=False, repr=False)
    eta: np.ndarray = field(init=False, repr=False)
    sigma: np.ndarray = field(init=False, repr=False)
    w_str: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        arrays = {}
        for name in ("s", "R", "Rp", "kappa"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            arrays[name] = a
        n = arrays["s"].shape
        for name, a in arrays.items():
            if a.ndim != 1 or a.shape != n:
                raise ValueError(f"geometry field {name!r} has shape {a.shape}, expected {n}")
            object.__setattr__(self, name, a)
        for name, a in zip(("A", "eta", "sigma", "w_str"), derived_fields(self.R, self.Rp, self.kappa)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_samples(self) -> int:
        return self.s.size

    def sound_speed(self, c: float) -> np.ndarray:
        """Curvature-corrected sound speed ``c(s) = c * sigma(s)``."""
        return c * self.sigma

    def at(self, name: str, s) -> np.ndarray:
        """Linearly interpolate the named field to the points ``s``."""
        return np.interp(s, self.s, getattr(self, name))

    def is_constant_radius(self, rtol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.R - self.R[0]) <= rtol * self.R[0]) and np.all(self.Rp == 0.0))

    def is_straight(self) -> bool:
        return bool(np.all(self.kappa == 0.0))


def validate_geometry(geom: TubeGeometry) -> str | None:
    """Return ``None`` for a valid geometry, else a message naming the first violation."""
    s = geom.s
    if s.size < 3:
        return f"too few samples: {s.size} < 3"
    for name in ("s", "R", "Rp", "kappa"):
        bad = np.flatnonzero(~np.isfinite(getattr(geom, name)))
        if bad.size:
            return f"non-finite {name} at index {bad[0]}"
    if s[0] != 0.0 or s[-1] != 1.0:
        return f"grid must span [0, 1], got [{s[0]}, {s[-1]}]"
    bad = np.flatnonzero(np.diff(s) <= 0)
    if bad.size:
        return f"non-monotone grid at index {bad[0] + 1}"
    bad = np.flatnonzero(geom.R <= 0)
    if bad.size:
        return f"non-positive radius at index {bad[0]}"
    bad = np.flatnonzero(geom.eta >= 1)
    if bad.size:
        return f"eta ≥ 1 at index {bad[0]} (eta={geom.eta[bad[0]]:.6g})"
    return None


def _require(params: Mapping[str, float], key: str, kind: str) -> float:
    try:
        return float(params[key])
    except KeyError:
        raise ValueError(f"profile {kind!r} requires parameter {key!r}") from None


def build_profile(kind: str, params: Mapping[str, float], n_samples: int) -> TubeGeometry:
    """Build a tube on a uniform grid from one of the analytic presets.

    Presets (all accept a constant curvature ``kappa``, default 0):

    ``constant``     R = r0
    ``cone``         R = r0 + (r1 - r0) s
    ``exponential``  R = r0 (r1/r0)^s
    ``bump``         R = r0 + amplitude (1 - cos 2 pi s)/2
    ``table``        ``params["table"]`` is a mapping with arrays ``s``, ``R``,
                     ``kappa`` and optionally ``Rp``, linearly interpolated
    """
    if n_samples < 3:
        raise ValueError(f"n_samples must be at least 3, got {n_samples}")
    s = np.linspace(0.0, 1.0, n_samples)
    kappa = np.full(n_samples, float(params.get("kappa", 0.0)))

    if kind == "constant":
        r0 = _require(params, "r0", kind)
        R = np.full(n_samples, r0)
        Rp = np.zeros(n_samples)
    elif kind == "cone":
        r0, r1 = _require(params, "r0", kind), _require(params, "r1", kind)
        R = r0 + (r1 - r0) * s
        Rp = np.full(n_samples, r1 - r0)
    elif kind == "exponential":
        r0, r1 = _require(params, "r0", kind), _require(params, "r1", kind)
        if r1 <= 0:
            raise ValueError(f"radius parameter r1 must be positive, got {r1}")
        flare = np.log(r1 / r0) if r0 > 0 else 0.0
        R = r0 * np.exp(flare * s)
        Rp = flare * R
    elif kind == "bump":
        r0 = _require(params, "r0", kind)
        amp = float(params.get("amplitude", 0.0))
        R = r0 + 0.5 * amp * (1.0 - np.cos(2 * np.pi * s))
        Rp = np.pi * amp * np.sin(2 * np.pi * s)
    elif kind == "table":
        table = params.get("table")
        if table is None:
            raise ValueError("profile 'table' requires parameter 'table'")
        return _from_table(table, s)
    else:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")

    if r0 <= 0:
        raise ValueError(f"radius parameter r0 must be positive, got {r0}")
    return TubeGeometry(s=s, R=R, Rp=Rp, kappa=kappa)


def _from_table(table: Mapping[str, np.ndarray], s: np.ndarray) -> TubeGeometry:
    ts = np.asarray(table["s"], dtype=float)
    tR = np.asarray(table["R"], dtype=float)
    tk = np.asarray(table.get("kappa", np.zeros_like(ts)), dtype=float)
    lengths = {len(ts), len(tR), len(tk)}
    if "Rp" in table and table["Rp"] is not None:
        lengths.add(len(table["Rp"]))
    if len(lengths) != 1:
        raise ValueError(f"profile table columns have mismatched lengths {sorted(lengths)}")
    if len(ts) < 2:
        raise ValueError("profile table needs at least two rows")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("profile table s column must be strictly increasing")
    if ts[0] > 0.0 or ts[-1] < 1.0:
        raise ValueError("profile table must cover s in [0, 1]")
    if np.any(tR <= 0):
        raise ValueError("profile table contains a non-positive radius")
    R = np.interp(s, ts, tR)
    kappa = np.interp(s, ts, tk)
    if "Rp" in table and table["Rp"] is not None:
        Rp = np.interp(s, ts, np.asarray(table["Rp"], dtype=float))
    else:
        # second order: central inside, one-sided at the ends
        Rp = np.gradient(R, s, edge_order=2)
    return TubeGeometry(s=s, R=R, Rp=Rp, kappa=kappa)


def load_profile_table(path: str | Path) -> dict[str, np.ndarray]:
    """Read a CSV with header ``s,R,kappa`` and optional ``Rp`` column."""
    with open(path, newline="") as fh:
        rows = [r for r in fh if r.strip() and not r.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    missing = {"s", "R", "kappa"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: profile table is missing column(s) {sorted(missing)}")
    cols: dict[str, list[float]] = {k: [] for k in reader.fieldnames}
    for row in reader:
        for k in cols:
            cols[k].append(float(row[k]))
    out = {k: np.asarray(cols[k]) for k in ("s", "R", "kappa")}
    if "Rp" in cols:
        out["Rp"] = np.asarray(cols["Rp"])
    return out
