"""Command-line front end: reproducible experiments with JSON reports.

Subcommands: popp | solve | sweep | coords | qcdiag | capacity | report.
Configuration comes from a TOML file plus flags; every report embeds the
resolved configuration and a format-version string, and identical configs
with identical seeds produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .coords import build_harmonic_coords, build_qharmonic_coords, fit_decay
from .energy import OperatorParams
from .errors import QLabError
from .grid import Grid, gauge_ball_mask
from .heis import SubRiemannianMetric, koranyi_gauge, popp_step2
from .io import write_field
from .maps import MapSpec
from .qcdiag import condition_battery, modulus_ring
from .solver import continuation_sweep, solve_plaplacian

FORMAT_VERSION = "qlab-report v1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc


class ConfigError(Exception):
    pass


def _build_grid(cfg: dict) -> Grid:
    g = cfg.get("grid", {})
    n = g.get("n", 32)
    if isinstance(n, int):
        n = [n, n, n]
    box = g.get("box")
    if box is None:
        half = float(g.get("half_width", 1.0))
        box = [[-half, -half, -half], [half, half, half]]
    try:
        return Grid(tuple(box[0]), tuple(box[1]), tuple(n))
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"bad [grid] section: {exc}") from exc


def _build_metric(cfg: dict) -> SubRiemannianMetric:
    m = cfg.get("metric", {})
    kind = m.get("kind", "standard")
    if kind == "standard":
        return SubRiemannianMetric.standard()
    if kind in ("diagonal-polynomial", "diagonal_poly"):
        return SubRiemannianMetric.diagonal_poly(
            m.get("g11", [1.0]), m.get("g22", [1.0]), volume=m.get("volume", "popp")
        )
    raise ConfigError(f"unknown metric kind {kind!r}")


def _build_params(cfg: dict) -> OperatorParams:
    p = cfg.get("params", {})
    try:
        return OperatorParams(
            p_exp=float(p.get("p", 4.0)),
            delta=float(p.get("delta", 0.0)),
            eps=float(p.get("eps", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad [params] section: {exc}") from exc


_BOUNDARY_FIELDS = {
    "x": lambda pts: pts[..., 0],
    "y": lambda pts: pts[..., 1],
    "z": lambda pts: pts[..., 2],
    "xy": lambda pts: pts[..., 0] * pts[..., 1],
    "x+y": lambda pts: pts[..., 0] + pts[..., 1],
    "generic": lambda pts: pts[..., 0] + 0.4 * pts[..., 1] - 0.3 * pts[..., 0] * pts[..., 1],
    "log_gauge": lambda pts: np.log(np.maximum(koranyi_gauge(pts), 1e-12)),
}


def _boundary_field(name: str, grid: Grid) -> np.ndarray:
    if name not in _BOUNDARY_FIELDS:
        raise ConfigError(
            f"unknown boundary field {name!r}; choose from {sorted(_BOUNDARY_FIELDS)}"
        )
    return np.asarray(_BOUNDARY_FIELDS[name](grid.points()), dtype=float)


def _emit(report: dict, out: str | None) -> None:
    payload = json.dumps(report, sort_keys=True, indent=2)
    if out:
        Path(out).write_text(payload + "\n")
    else:
        sys.stdout.write(payload + "\n")


def _report_skeleton(cfg: dict, task: str, seed: int) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "qlab_version": __version__,
        "task": task,
        "seed": seed,
        "config": cfg,
    }


def _cmd_popp(args) -> int:
    vals = [float(v) for v in args.g1.split(",")]
    if len(vals) != 4:
        raise ConfigError("--g1 expects four comma-separated entries a,b,c,d")
    g1 = np.array(vals).reshape(2, 2)
    data = popp_step2(g1)
    report = _report_skeleton({"g1": vals}, "popp", seed=0)
    report.update({"m": data.m, "g2": data.g2, "density": data.density_value})
    _emit(report, args.out)
    return EXIT_OK


def _solve_setup(cfg: dict):
    grid = _build_grid(cfg)
    metric = _build_metric(cfg)
    params = _build_params(cfg)
    task = cfg.get("task", {})
    center = task.get("center", [0.0, 0.0, 0.0])
    radius = float(task.get("radius", 0.55))
    mask = gauge_ball_mask(center, radius, grid)
    boundary = _boundary_field(task.get("boundary", "x"), grid)
    return grid, metric, params, mask, boundary, task


def _cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    grid, metric, params, mask, boundary, task = _solve_setup(cfg)
    tol = float(task.get("tol", 1e-9))
    sol, rep = solve_plaplacian(mask, boundary, params, metric, tol=tol)
    report = _report_skeleton(cfg, "solve", seed=int(cfg.get("seed", 0)))
    report["solve"] = rep.to_dict()
    if args.out:
        field_path = str(Path(args.out).with_suffix("")) + "_solution.field"
        write_field(sol, field_path)
        report["solution_file"] = field_path
    _emit(report, args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    grid, metric, params, mask, boundary, task = _solve_setup(cfg)
    schedule = cfg.get("params", {}).get(
        "schedule", [[1.0, 1.0], [0.5, 0.5], [0.25, 0.25], [0.125, 0.125], [0.0625, 0.0625]]
    )
    tol = float(task.get("tol", 1e-9))
    reports = continuation_sweep(mask, boundary, schedule, params, metric, tol=tol)
    report = _report_skeleton(cfg, "sweep", seed=int(cfg.get("seed", 0)))
    report["stages"] = [r.to_dict() for r in reports]
    first = reports[0]
    report["uniformity"] = {
        name: max(getattr(r, name) for r in reports) / max(getattr(first, name), 1e-300)
        for name in ("lip_ratio", "caccioppoli_ratio", "holder_seminorm")
    }
    _emit(report, args.out)
    return EXIT_OK


def _cmd_coords(args) -> int:
    cfg = _load_config(args.config)
    metric = _build_metric(cfg)
    params = _build_params(cfg)
    task = cfg.get("task", {})
    center = task.get("center", [0.4, 0.0, 0.0])
    radii = task.get("radii")
    if radii is None:
        r0 = float(task.get("r0", 0.3))
        ratio = float(task.get("ratio", 0.75))
        count = int(task.get("count", 4))
        radii = [r0 * ratio**k for k in range(count)]
    n = int(task.get("n", 40))
    mode = task.get("mode", "harmonic")
    if mode == "harmonic":
        chart = build_harmonic_coords(center, radii, metric, n=n)
    elif mode == "qharmonic":
        chart = build_qharmonic_coords(center, radii, params, metric, n=n)
    else:
        raise ConfigError("task.mode must be 'harmonic' or 'qharmonic'")
    slope, resid = fit_decay(chart.decay)
    report = _report_skeleton(cfg, "coords", seed=int(cfg.get("seed", 0)))
    report["chart"] = chart.to_dict()
    report["decay_fit"] = {"slope": slope, "residual": resid}
    if args.out:
        stem = str(Path(args.out).with_suffix(""))
        write_field(chart.u1, stem + "_u1.field")
        write_field(chart.u2, stem + "_u2.field")
        report["field_files"] = [stem + "_u1.field", stem + "_u2.field"]
        csv_path = stem + "_decay.csv"
        with open(csv_path, "w") as fh:
            fh.write("r,norm,fit_slope,fit_residual\n")
            for r, m in chart.decay:
                fh.write(f"{r:.17g},{m:.17g},{slope:.17g},{resid:.17g}\n")
        report["decay_csv"] = csv_path
    _emit(report, args.out)
    return EXIT_OK


def _cmd_qcdiag(args) -> int:
    cfg = _load_config(args.config)
    metric = _build_metric(cfg)
    params = _build_params(cfg)
    task = cfg.get("task", {})
    map_spec = MapSpec.parse(args.map or task.get("map", "identity"))
    tol = float(args.tol if args.tol is not None else task.get("tol", 0.05))
    seed = int(cfg.get("seed", 0))
    grid = _build_grid(cfg)
    radius = float(task.get("region_radius", 0.7))
    region = gauge_ball_mask(task.get("region_center", [0.0, 0.0, 0.0]), radius, grid)
    battery = condition_battery(map_spec, region, params, metric, tol=tol, seed=seed)
    report = _report_skeleton(cfg, "qcdiag", seed=seed)
    report["map"] = battery.map_kind
    report["conditions"] = battery.to_list()
    report["all_pass"] = battery.all_pass
    _emit(report, args.out)
    return EXIT_OK


def _cmd_capacity(args) -> int:
    cfg = _load_config(args.config)
    metric = _build_metric(cfg)
    params = _build_params(cfg)
    task = cfg.get("task", {})
    r = float(args.r if args.r is not None else task.get("r", 0.5))
    big_r = float(args.R if args.R is not None else task.get("R", 1.0))
    n = int(task.get("n", 44))
    res = modulus_ring(r, big_r, params, metric, n=n, full_output=True)
    report = _report_skeleton(cfg, "capacity", seed=int(cfg.get("seed", 0)))
    report["ring"] = {"r": r, "R": big_r, "n": n}
    report["capacity"] = res["modulus"]
    report["modulus"] = res["modulus"]
    report["admissibility_min"] = res["admissibility_min"]
    report["range_ok"] = res["range_ok"]
    _emit(report, args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    path = Path(args.file)
    if not path.exists():
        raise ConfigError(f"report file not found: {args.file}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not a JSON report: {exc}") from exc
    if data.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"unsupported format version {data.get('format_version')!r}; expected {FORMAT_VERSION!r}"
        )
    lines = [f"task: {data.get('task')}  (qlab {data.get('qlab_version')})"]
    for key in ("m", "g2", "density", "capacity", "admissibility_min", "all_pass"):
        if key in data:
            lines.append(f"  {key} = {data[key]}")
    if "solve" in data:
        for k, v in sorted(data["solve"].items()):
            lines.append(f"  solve.{k} = {v}")
    if "conditions" in data:
        for rec in data["conditions"]:
            status = "pass" if rec["pass"] else "FAIL"
            lines.append(
                f"  ({rec['name']}) value={rec['value']:.6g} vs {rec['reference']:g} tol={rec['tol']:g}: {status}"
            )
    if "stages" in data:
        for i, st in enumerate(data["stages"]):
            lines.append(
                f"  stage {i}: eps={st['eps']:g} delta={st['delta']:g} iters={st['iterations']}"
                f" residual={st['final_residual']:.3g} lip={st['lip_ratio']:.4g}"
            )
    if "decay_fit" in data:
        lines.append(
            f"  decay slope = {data['decay_fit']['slope']:.4f}"
            f" (lsq residual {data['decay_fit']['residual']:.4f})"
        )
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qlab",
        description="Sub-Riemannian workbench: Popp measures, p-Laplacian solves, "
        "harmonic coordinates and quasiconformality diagnostics on the Heisenberg model.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("popp", help="step-2 Popp data for a 2x2 metric matrix")
    p.add_argument("--g1", required=True, help="matrix entries a,b,c,d (row major)")
    p.add_argument("--out", help="write the JSON report to this path")
    p.set_defaults(fn=_cmd_popp)

    p = sub.add_parser("solve", help="Dirichlet solve of the regularized p-Laplacian")
    p.add_argument("--config", help="TOML configuration")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("sweep", help="(eps, delta) continuation sweep with monitors")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("coords", help="horizontal (Q-)harmonic coordinates and decay fit")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_coords)

    p = sub.add_parser("qcdiag", help="quasiconformality condition battery for a map")
    p.add_argument("--map", help="e.g. dilation:2, shear:2,1, rotation:0.7, left:0.1,0.2,0")
    p.add_argument("--tol", type=float, help="pass tolerance for each condition (default 0.05)")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_qcdiag)

    p = sub.add_parser("capacity", help="Koranyi ring capacity / modulus with certificate")
    p.add_argument("--r", type=float, help="inner gauge radius (default 0.5)")
    p.add_argument("--R", type=float, help="outer gauge radius (default 1.0)")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_capacity)

    p = sub.add_parser("report", help="summarize a JSON report file")
    p.add_argument("file")
    p.set_defaults(fn=_cmd_report)
    return ap


def run(argv) -> int:
    """Entry point returning an exit code (0 ok, 2 config error, 3 numerical)."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        _emit({"format_version": FORMAT_VERSION, "error": str(exc), "kind": "config"}, None)
        return EXIT_CONFIG
    except QLabError as exc:
        _emit(
            {
                "format_version": FORMAT_VERSION,
                "error": str(exc),
                "kind": type(exc).__name__,
            },
            None,
        )
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
