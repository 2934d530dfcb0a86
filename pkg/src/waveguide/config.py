"""Sectioned ``key = value`` run configuration.

Sections and keys (defaults in brackets)::

    [geometry]        kind (required), r0, r1, kappa [0], amplitude [0],
                      table, n_samples [n_elems + 1]
    [physics]         c [343], rho [1.2], alpha [0], g_damp [0]
    [discretization]  n_elems [200], ns [300], nr [24], dt [1e-4],
                      t_final [0.02], record_stride [0]
    [input]           kind [gaussian], amplitude [1], center [0.0016],
                      width [0.0004], frequency [1000], duration [0.005],
                      file, initial [zero]
    [output]          directory [.], prefix [run]
    [verify]          n_defect_samples [100], seed [42], rtol [1e-10],
                      compare_tol [0.02], fault_scale [1], compare_model [cylinder]

Relative paths are resolved against the config file's directory. Every error
message names the offending key as ``section.key``.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .geometry import PROFILE_KINDS
from .signals import SIGNAL_KINDS

__all__ = ["ConfigError", "SimulationConfig", "parse_config", "config_to_text", "write_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the key path."""


REQUIRED = object()


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _nonpos(x):
    return x <= 0


# key -> (type, default, check, description of the check)
SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "kind": (str, REQUIRED, lambda v: v in PROFILE_KINDS, f"one of {PROFILE_KINDS}"),
        "r0": (float, None, _positive, "> 0"),
        "r1": (float, None, _positive, "> 0"),
        "kappa": (float, 0.0, lambda v: True, ""),
        "amplitude": (float, 0.0, lambda v: True, ""),
        "table": (Path, None, lambda v: v.is_file(), "an existing file"),
        "n_samples": (int, None, lambda v: v >= 3, ">= 3"),
    },
    "physics": {
        "c": (float, 343.0, _positive, "> 0"),
        "rho": (float, 1.2, _positive, "> 0"),
        "alpha": (float, 0.0, _nonneg, ">= 0"),
        "g_damp": (float, 0.0, _nonpos, "<= 0"),
    },
    "discretization": {
        "n_elems": (int, 200, lambda v: v >= 2, ">= 2"),
        "ns": (int, 300, lambda v: v >= 4, ">= 4"),
        "nr": (int, 24, lambda v: v >= 2, ">= 2"),
        "dt": (float, 1e-4, _positive, "> 0"),
        "t_final": (float, 0.02, _positive, "> 0"),
        "record_stride": (int, 0, _nonneg, ">= 0"),
    },
    "input": {
        "kind": (str, "gaussian", lambda v: v in SIGNAL_KINDS, f"one of {SIGNAL_KINDS}"),
        "amplitude": (float, 1.0, lambda v: True, ""),
        "center": (float, 0.0016, lambda v: True, ""),
        "width": (float, 0.0004, _positive, "> 0"),
        "frequency": (float, 1000.0, _positive, "> 0"),
        "duration": (float, 0.005, _positive, "> 0"),
        "file": (Path, None, lambda v: v.is_file(), "an existing file"),
        "initial": (str, "zero", lambda v: v in ("zero", "random"), "'zero' or 'random'"),
    },
    "output": {
        "directory": (Path, Path("."), lambda v: True, ""),
        "prefix": (str, "run", lambda v: bool(v) and "/" not in v, "a non-empty file name prefix"),
    },
    "verify": {
        "n_defect_samples": (int, 100, lambda v: v >= 1, ">= 1"),
        "seed": (int, 42, _nonneg, ">= 0"),
        "rtol": (float, 1e-10, _positive, "> 0"),
        "compare_tol": (float, 0.02, _positive, "> 0"),
        "fault_scale": (float, 1.0, _positive, "> 0"),
        "compare_model": (str, "cylinder", lambda v: v in ("cylinder", "webster"), "'cylinder' or 'webster'"),
    },
}


@dataclass(frozen=True)
class SimulationConfig:
    """Resolved configuration: one dict of typed values per section."""

    geometry: dict[str, Any]
    physics: dict[str, Any]
    discretization: dict[str, Any]
    input: dict[str, Any]
    output: dict[str, Any]
    verify: dict[str, Any]
    source: Path | None = None

    def section(self, name: str) -> dict[str, Any]:
        return getattr(self, name)

    def with_overrides(self, **sections) -> "SimulationConfig":
        """Return a copy with ``section={key: value}`` updates applied."""
        new = {}
        for name, updates in sections.items():
            merged = dict(self.section(name))
            merged.update(updates)
            new[name] = merged
        return dataclasses.replace(self, **new)


def _convert(raw: str, typ, path: str, base: Path):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is Path:
            p = Path(raw).expanduser()
            return p if p.is_absolute() else base / p
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{path}: expected {typ.__name__}, got {raw!r}") from None


def parse_config(path: str | Path) -> SimulationConfig:
    """Read, type-check and validate a config file; fill defaults."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from None
    return _resolve(parser, path.parent.resolve(), path)


def _resolve(parser: configparser.ConfigParser, base: Path, source: Path | None) -> SimulationConfig:
    unknown = [s for s in parser.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section (expected {', '.join(SCHEMA)})")
    values: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        given = parser[section] if parser.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{section}.{key}: unknown key")
        out = {}
        for key, (typ, default, check, desc) in keys.items():
            kp = f"{section}.{key}"
            if key in given and given[key].strip() != "":
                v = _convert(given[key], typ, kp, base)
                if not check(v):
                    raise ConfigError(f"{kp}: value {given[key]!r} out of range, must be {desc}")
            elif default is REQUIRED:
                raise ConfigError(f"{kp}: missing required key")
            else:
                v = base / default if isinstance(default, Path) else default
            out[key] = v
        values[section] = out

    geo = values["geometry"]
    kind = geo["kind"]
    if kind == "table":
        if geo["table"] is None:
            raise ConfigError("geometry.table: missing required key for kind 'table'")
    else:
        if geo["r0"] is None:
            raise ConfigError(f"geometry.r0: missing required key for kind {kind!r}")
        if kind in ("cone", "exponential") and geo["r1"] is None:
            raise ConfigError(f"geometry.r1: missing required key for kind {kind!r}")
    if geo["n_samples"] is None:
        geo["n_samples"] = values["discretization"]["n_elems"] + 1
    if values["input"]["kind"] == "table" and values["input"]["file"] is None:
        raise ConfigError("input.file: missing required key for kind 'table'")
    return SimulationConfig(**values, source=source)


def config_to_text(cfg: SimulationConfig) -> str:
    """Serialize every resolved key; floats use ``repr`` so parsing is bit-exact."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            v = cfg.section(section)[key]
            if v is None:
                continue
            lines.append(f"{key} = {repr(v) if isinstance(v, float) else v}")
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: SimulationConfig, path: str | Path) -> None:
    Path(path).write_text(config_to_text(cfg))
