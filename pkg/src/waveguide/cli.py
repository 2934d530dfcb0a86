"""Command-line front end.

Commands: ``simulate-webster``, ``simulate-cylinder``, ``compare-averages``,
``verify-node``, ``geometry-report``. Exit codes: 0 pass, 1 check failure,
2 usage or configuration error. All CSV outputs start with ``#schema=1`` and
every run writes ``run.meta`` (the resolved config) to its output directory.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .config import ConfigError, SimulationConfig, config_to_text, parse_config
from .cylinder import build_cylinder, cross_section_average, run_cylinder
from .geometry import PhysicalConstants, TubeGeometry, build_profile, load_profile_table, validate_geometry
from .node import (
    SingularSystemError,
    dissipativity_on_kernel,
    gl_defects,
    passivity_check,
    sample_states,
    solve_stationary,
    stationary_residuals,
    timeflow_inverse,
)
from .signals import input_signals
from .stepper import run_simulation
from .webster import State, assemble_webster, poincare_ratio

__all__ = ["main", "COMMANDS"]


SCHEMA_LINE = "#schema=1"
RADIAL_CUTOFF_ROOT = 1.8412  # first zero of J1'


class CheckFailure(RuntimeError):
    pass


def _write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _outdir(cfg: SimulationConfig) -> Path:
    d = Path(cfg.output["directory"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_meta(cfg: SimulationConfig, command: str) -> None:
    text = f"# command: {command}\n" + config_to_text(cfg)
    (_outdir(cfg) / "run.meta").write_text(text)


def _out(cfg: SimulationConfig, name: str) -> Path:
    return _outdir(cfg) / f"{cfg.output['prefix']}_{name}"


def _geometry(cfg: SimulationConfig) -> TubeGeometry:
    g = dict(cfg.geometry)
    if g["kind"] == "table":
        g["table"] = load_profile_table(g["table"])
    params = {k: v for k, v in g.items() if v is not None and k not in ("kind", "n_samples")}
    return build_profile(g["kind"], params, g["n_samples"])


def _consts(cfg: SimulationConfig) -> PhysicalConstants:
    p = cfg.physics
    return PhysicalConstants(c=p["c"], rho=p["rho"], alpha=p["alpha"])


def _signal(cfg: SimulationConfig) -> Callable:
    return input_signals(cfg.input["kind"], cfg.input)


def _valid_geometry(cfg: SimulationConfig) -> TubeGeometry:
    geom = _geometry(cfg)
    msg = validate_geometry(geom)
    if msg is not None:
        raise CheckFailure(f"invalid geometry: {msg}")
    return geom


def _cylinder_radius(cfg: SimulationConfig, geom: TubeGeometry) -> float:
    if not (geom.is_constant_radius() and geom.is_straight()):
        raise ConfigError(
            "geometry: the cylinder reference solver handles straight constant-radius tubes only "
            f"(got kind={cfg.geometry['kind']!r}, kappa={cfg.geometry['kappa']})"
        )
    return float(geom.R[0])


def _initial(cfg: SimulationConfig, dim: int, scale: float) -> np.ndarray | None:
    if cfg.input["initial"] == "zero":
        return None
    return scale * np.random.default_rng(cfg.verify["seed"]).standard_normal(dim)


def cmd_simulate_webster(cfg: SimulationConfig) -> int:
    """Run the horn model and write its time series and energy ledger."""
    _write_meta(cfg, "simulate-webster")
    d = cfg.discretization
    geom = _valid_geometry(cfg)
    consts = _consts(cfg)
    system, _ = assemble_webster(geom, consts, d["n_elems"])
    handle = system.handle()
    u = _signal(cfg)
    x0 = _initial(cfg, handle.dim, 1e-3)
    res = run_simulation(handle, u, d["dt"], d["t_final"], record_stride=d["record_stride"], x0=x0)
    L = res.ledger
    header = ["t", "u", "y_endpoint", "y_midpoint", "E", "p_in", "p_out", "p_diss", "residual"]
    _write_csv(_out(cfg, "timeseries.csv"), header, res.csv_rows())
    _write_csv(
        _out(cfg, "ledger.csv"),
        ["step", "E_before", "E_after", "p_in", "p_out", "p_diss", "residual"],
        ((k, L.E_before[k], L.E_after[k], L.p_in[k], L.p_out[k], L.p_diss[k], L.residual[k]) for k in range(L.n_steps)),
    )
    if d["record_stride"] > 0:
        n = system.n
        _write_csv(
            _out(cfg, "snapshots.csv"),
            ["t", "s", "psi", "pi"],
            ((t, s, x[i], x[n + i]) for t, x in zip(res.snapshot_times, res.snapshots) for i, s in enumerate(system.s)),
        )

    rel = float(L.relative_residual().max())
    scale = max(float(res.E.max()), L.dt * float(L.p_in.sum()), np.finfo(float).tiny)
    cumulative = abs(L.cumulative_balance()) / scale
    print(f"final energy        {res.E[-1]:.6e}")
    print(f"injected energy     {L.dt * L.p_in.sum():.6e}")
    print(f"emitted energy      {L.dt * L.p_out.sum():.6e}")
    print(f"dissipated energy   {L.dt * L.p_diss.sum():.6e}")
    print(f"max step residual   {rel:.3e} (relative)")
    print(f"cumulative balance  {cumulative:.3e} (relative)")
    if res.incompatible:
        print(f"warning: initial data incompatible with u(0), gap {res.compatibility_gap:.3e}")
    if cfg.input["kind"] == "gaussian" and consts.alpha == 0 and geom.is_constant_radius() and geom.is_straight():
        delay = 2.0 / system.c0
        window = res.t >= delay + 2 * cfg.input["width"]
        if window.any():
            err = np.abs(res.y_endpoint - u(res.t - delay))[window].max()
            print(f"echo error          {err:.3e} (max |y(t) - u(t - 2/c)|, t >= 2/c + 2w)")
    if rel > cfg.verify["rtol"]:
        raise CheckFailure(f"ledger residual {rel:.3e} exceeds rtol {cfg.verify['rtol']:.1e}")
    return 0


def cmd_simulate_cylinder(cfg: SimulationConfig) -> int:
    """Run the cylinder reference solver and write its ledger and averages."""
    _write_meta(cfg, "simulate-cylinder")
    d = cfg.discretization
    geom = _valid_geometry(cfg)
    R0 = _cylinder_radius(cfg, geom)
    g = cfg.physics["g_damp"]
    cyl = build_cylinder(R0, _consts(cfg), d["ns"], d["nr"], g_damp=g if g != 0 else None)
    x0 = _initial(cfg, 2 * d["ns"] * d["nr"], 1.0)
    if x0 is not None:
        cyl.set_state(x0)
    run = run_cylinder(cyl, _signal(cfg), d["dt"], d["t_final"], record_stride=d["record_stride"])
    L = run.ledger
    _write_csv(
        _out(cfg, "ledger.csv"), ["t", "E", "P_in", "P_out", "P_wall", "P_interior", "residual"], L.csv_rows(run.t)
    )
    if run.averages.size:
        times, avgs = run.snapshot_times, run.averages
    else:
        times, avgs = run.t[-1:], cross_section_average(cyl)[None, :]
    s = cyl.s
    _write_csv(_out(cfg, "averages.csv"), ["t", "s", "phibar"], ((t, s[i], a[i]) for t, a in zip(times, avgs) for i in range(s.size)))
    rel = float(L.relative_residual().max())
    print(f"final energy        {L.E[-1]:.6e}")
    print(f"wall loss           {L.dt * L.P_wall.sum():.6e}")
    print(f"interior loss       {L.dt * L.P_interior.sum():.6e}")
    print(f"max step residual   {rel:.3e} (relative)")
    if rel > cfg.verify["rtol"]:
        raise CheckFailure(f"ledger residual {rel:.3e} exceeds rtol {cfg.verify['rtol']:.1e}")
    if np.any(L.P_wall < -cfg.verify["rtol"] * np.maximum(L.E, np.finfo(float).tiny) / L.dt):
        raise CheckFailure("negative wall power")
    return 0


def _band_fraction(u: np.ndarray, dt: float, f_limit: float) -> float:
    """Fraction of the sampled input's spectral energy above ``f_limit``."""
    spec = np.abs(np.fft.rfft(u)) ** 2
    f = np.fft.rfftfreq(u.size, dt)
    total = spec.sum()
    return float(spec[f > f_limit].sum() / total) if total > 0 else 0.0


def relative_l2_errors(ref: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Relative L2-in-time discrepancy per column (``0`` where both vanish)."""
    diff = np.sqrt(((other - ref) ** 2).sum(axis=0))
    norm = np.sqrt((ref**2).sum(axis=0))
    out = np.where(diff == 0, 0.0, np.inf)
    np.divide(diff, norm, out=out, where=norm > 0)
    return out


def cmd_compare_averages(cfg: SimulationConfig) -> int:
    """Compare cylinder cross-section averages with the horn model."""
    _write_meta(cfg, "compare-averages")
    d = cfg.discretization
    geom = _valid_geometry(cfg)
    R0 = _cylinder_radius(cfg, geom)
    consts = _consts(cfg)
    ns, dt, t_final = d["ns"], d["dt"], d["t_final"]
    u = _signal(cfg)
    # Webster on the cylinder's axial grid so samples coincide
    web, _ = assemble_webster(build_profile("constant", {"r0": R0}, ns + 1), consts, ns)
    res = run_simulation(web.handle(), u, dt, t_final, record_stride=1, observer=lambda x: x[:ns].copy())
    psi = np.asarray(res.snapshots)
    if cfg.verify["compare_model"] == "webster":
        again = run_simulation(web.handle(), u, dt, t_final, record_stride=1, observer=lambda x: x[:ns].copy())
        phibar = np.asarray(again.snapshots)
        s = web.s
    else:
        cyl = build_cylinder(R0, consts, ns, d["nr"])
        run = run_cylinder(cyl, u, dt, t_final, record_stride=1)
        phibar = run.averages
        s = cyl.s
    t = res.t
    err = relative_l2_errors(psi, phibar)
    stride = max(d["record_stride"], 1)
    _write_csv(
        _out(cfg, "compare.csv"),
        ["s", "t", "phibar_wave", "psi_webster", "abs_err"],
        ((s[i], t[k], phibar[k, i], psi[k, i], abs(phibar[k, i] - psi[k, i])) for i in range(s.size) for k in range(0, t.size, stride)),
    )
    _write_csv(_out(cfg, "errors.csv"), ["s", "rel_l2_err"], zip(s, err))
    worst = float(err.max())
    for si, e in zip(s, err):
        print(f"s={si:.6f} rel_l2_err={e:.3e}")
    print(f"max relative L2 error {worst:.3e}")
    f_limit = 0.2 * RADIAL_CUTOFF_ROOT * consts.c / (2 * np.pi * R0)
    leak = _band_fraction(u(t), dt, f_limit)
    if leak > 1e-6:
        print(
            f"warning: {leak:.2e} of the input energy lies above {f_limit:.0f} Hz "
            "(0.2x the first radial cutoff); the averaged model is not expected to match"
        )
        return 0
    if worst > cfg.verify["compare_tol"]:
        raise CheckFailure(f"averaging discrepancy {worst:.3e} exceeds compare_tol {cfg.verify['compare_tol']}")
    return 0


def _verify_checks(cfg: SimulationConfig):
    """Run the Webster node checks.

    Returns ``(checks, defects, scales)`` with ``checks`` a list of
    ``(name, value, threshold, passed)`` in execution order.
    """
    v = cfg.verify
    geom = _valid_geometry(cfg)
    consts = _consts(cfg)
    system, node = assemble_webster(geom, consts, cfg.discretization["n_elems"])
    if v["fault_scale"] != 1.0:
        node = node.replace(L_mat=node.L_mat * v["fault_scale"])
    n_s, seed, tol = v["n_defect_samples"], v["seed"], v["rtol"]
    lossless = consts.alpha == 0
    checks = []

    # identity: defect minus the wall form vanishes
    Z = sample_states(node.dim, n_s, seed)
    defects, scales = gl_defects(node, Z)
    n = system.n
    wall = np.array([system.wall_dissipation(State(Z[:n, k], Z[n : 2 * n, k])) for k in range(n_s)])
    identity = float(np.max(np.abs(defects - wall) / scales))
    checks.append(("gl_identity", identity, tol, identity <= tol))

    rep = passivity_check(node, n_s, seed, tol)
    want = "conservative" if lossless else "passive"
    checks.append((f"verdict_{want}", rep.min_defect, -tol, rep.verdict == want))

    inv = passivity_check(timeflow_inverse(node), n_s, seed, tol)
    if lossless:
        checks.append(("inverse_conservative", inv.max_abs_identity_residual, tol, inv.verdict == "conservative"))
    else:
        checks.append(("inverse_not_passive", inv.min_defect, -tol, inv.verdict == "not-passive"))
        adj = passivity_check(timeflow_inverse(node, "adjoint"), n_s, seed, tol)
        checks.append(("adjoint_passive", adj.min_defect, -tol, adj.verdict in ("passive", "conservative")))

    for which in ("G", "K"):
        k = dissipativity_on_kernel(node, which, n_s, seed, tol)
        checks.append((f"kernel_{which}_dissipative", k.max_residual, tol, k.passed))

    w = np.random.default_rng(seed).standard_normal(node.n_state)
    try:
        z = solve_stationary(node, w, rtol=tol)
        res = max(stationary_residuals(node, z, w))
    except SingularSystemError:
        res = np.inf
    checks.append(("stationary_solve", res, tol, res <= tol))

    ratio = poincare_ratio(cfg.discretization["n_elems"])
    checks.append(("poincare_ratio", ratio, 0.5, ratio <= 0.5))

    if node.H_mat is None:
        checks.append(("h_monotone", 0.0, tol, True))
    else:
        X = sample_states(node.n_state, n_s, seed)
        form = np.einsum("ij,ij->j", X, node.X_ip @ (node.H_mat @ X)) / node.energy(X)
        worst = float(form.max())
        checks.append(("h_monotone", worst, tol, worst <= tol))
    return checks, defects, scales


def cmd_verify_node(cfg: SimulationConfig) -> int:
    """Sample the Webster node's energy identities and solvability checks."""
    _write_meta(cfg, "verify-node")
    checks, defects, scales = _verify_checks(cfg)
    rows, first_fail = [], None
    for name, value, threshold, passed in checks:
        rows.append((name, float(value), float(threshold), "pass" if passed else "fail"))
        print(f"{'PASS' if passed else 'FAIL'}  {name:<24s} value={value:.3e} threshold={threshold:.1e}")
        if not passed and first_fail is None:
            first_fail = name
    _write_csv(_out(cfg, "checks.csv"), ["check", "value", "threshold", "result"], rows)
    _write_csv(
        _out(cfg, "defects.csv"),
        ["sample", "defect", "scale"],
        ((i, float(a), float(b)) for i, (a, b) in enumerate(zip(defects, scales))),
    )
    if first_fail is not None:
        raise CheckFailure(f"check failed: {first_fail}")
    print("all checks passed")
    return 0


def cmd_geometry_report(cfg: SimulationConfig) -> int:
    """Tabulate the derived geometry fields and validate them."""
    _write_meta(cfg, "geometry-report")
    geom = _geometry(cfg)
    _write_csv(
        _out(cfg, "geometry.csv"),
        ["s", "R", "Rp", "kappa", "A", "eta", "sigma", "w_str"],
        zip(*(getattr(geom, k).tolist() for k in ("s", "R", "Rp", "kappa", "A", "eta", "sigma", "w_str"))),
    )
    print(f"samples   {geom.n_samples}")
    print(f"R range   [{geom.R.min():.6g}, {geom.R.max():.6g}]")
    print(f"max eta   {geom.eta.max():.6g}")
    print(f"min sigma {geom.sigma.min():.6g}")
    msg = validate_geometry(geom)
    if msg is not None:
        raise CheckFailure(f"invalid geometry: {msg}")
    print("geometry valid")
    return 0


COMMANDS = {
    "simulate-webster": cmd_simulate_webster,
    "simulate-cylinder": cmd_simulate_cylinder,
    "compare-averages": cmd_compare_averages,
    "verify-node": cmd_verify_node,
    "geometry-report": cmd_geometry_report,
}


def _run_one(command: str, config_path: str, out: str | None, seed: int | None, subdir: bool) -> int:
    try:
        cfg = parse_config(config_path)
        if out is not None:
            base = Path(out)
            cfg = cfg.with_overrides(output={"directory": base / Path(config_path).stem if subdir else base})
        if seed is not None:
            cfg = cfg.with_overrides(verify={"seed": seed})
        return COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"FAIL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="waveguide", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.strip().splitlines()[0])
        p.add_argument("--config", action="append", required=True, metavar="PATH", help="config file (repeat for a sweep)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, metavar="N", help="override verify.seed")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="run a sweep's configs N at a time")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    configs = args.config
    subdir = len(configs) > 1
    jobs = [(args.command, c, args.out, args.seed, subdir) for c in configs]
    if args.jobs == 1 or len(jobs) == 1:
        codes = [_run_one(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, *zip(*jobs)))
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
