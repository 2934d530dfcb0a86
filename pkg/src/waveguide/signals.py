"""Input signal presets. All presets are vectorized over ``t``."""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Mapping

import numpy as np

__all__ = ["input_signals", "gaussian", "sine_burst", "tabulated", "SIGNAL_KINDS"]

SIGNAL_KINDS = ("gaussian", "sine_burst", "table", "zero")

Signal = Callable[[np.ndarray], np.ndarray]


def gaussian(amplitude: float = 1.0, center: float = 0.0, width: float = 1.0) -> Signal:
    """``amplitude * exp(-((t - center)/width)^2 / 2)``; ``width`` is the standard deviation."""
    if not width > 0:
        raise ValueError(f"gaussian width must be positive, got {width}")

    def u(t):
        tau = (np.asarray(t, dtype=float) - center) / width
        return amplitude * np.exp(-0.5 * tau * tau)

    return u


def sine_burst(
    amplitude: float = 1.0, frequency: float = 1.0, start: float = 0.0, duration: float = 1.0, ramp: float | None = None
) -> Signal:
    """Sine of ``frequency`` on ``[start, start + duration]`` under raised-cosine ramps.

    The window and its derivative vanish at both ends; ``ramp`` defaults to a
    quarter of the duration.
    """
    if not duration > 0:
        raise ValueError(f"burst duration must be positive, got {duration}")
    ramp = 0.25 * duration if ramp is None else float(ramp)
    if not 0 < ramp <= 0.5 * duration:
        raise ValueError("ramp must lie in (0, duration/2]")

    def u(t):
        tau = np.asarray(t, dtype=float) - start
        rise = np.clip(tau / ramp, 0.0, 1.0)
        fall = np.clip((duration - tau) / ramp, 0.0, 1.0)
        window = 0.25 * (1.0 - np.cos(np.pi * rise)) * (1.0 - np.cos(np.pi * fall))
        return amplitude * window * np.sin(2 * np.pi * frequency * tau)

    return u


def tabulated(t_table, u_table) -> Signal:
    """Piecewise-linear interpolation of samples; constant beyond the ends.

    Only continuous, so it does not meet the smoothness the solution theory
    asks of inputs; fine for forcing a discrete run.
    """
    tt = np.asarray(t_table, dtype=float)
    uu = np.asarray(u_table, dtype=float)
    if tt.shape != uu.shape or tt.ndim != 1 or tt.size < 2:
        raise ValueError("input table needs matching 1-D columns with at least two rows")
    if np.any(np.diff(tt) <= 0):
        raise ValueError("input table times must be strictly increasing")

    def u(t):
        return np.interp(np.asarray(t, dtype=float), tt, uu)

    return u


def _read_table(path: str | Path):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: input table needs columns t,u")
    return data[:, 0], data[:, 1]


def input_signals(kind: str, params: Mapping[str, object] | None = None) -> Signal:
    """Build a signal from a preset name and keyword parameters."""
    params = dict(params or {})
    if kind == "gaussian":
        keys = ("amplitude", "center", "width")
        return gaussian(**{k: float(params[k]) for k in keys if k in params})
    if kind == "sine_burst":
        keys = ("amplitude", "frequency", "start", "duration", "ramp")
        return sine_burst(**{k: float(params[k]) for k in keys if params.get(k) is not None})
    if kind == "table":
        if "file" in params and params["file"]:
            t, u = _read_table(params["file"])
        else:
            t, u = params["t"], params["u"]
        amp = float(params.get("amplitude", 1.0))
        return tabulated(t, amp * np.asarray(u, dtype=float))
    if kind == "zero":
        return lambda t: np.zeros_like(np.asarray(t, dtype=float))
    raise ValueError(f"unknown input kind {kind!r}; expected one of {SIGNAL_KINDS}")
