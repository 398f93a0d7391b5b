"""Command-line front end.

Every subcommand reads one JSON config (see ``configs/fig1c.json``) and
writes a JSON report or CSV raster to ``--out`` (stdout when omitted).

Exit codes: 0 success, 1 compare bound violated, 2 config error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import mean_level_density, mode_table
from .classifier import finite_metric, point_metric, strip_map
from .config import SCHEMA_VERSION, ConfigError, RunConfig, load_config
from .finite_impurity import RectImpurity, truncated_secular_solve
from .oracle import EigenSolverError, wavefunction_grid, window_eigenpairs
from .pointscatterer import PointSpectrum, solve_point_spectrum

EXIT_OK, EXIT_BOUND, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _clean(value):
    """JSON-safe copy; non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def dumps_report(report: dict) -> str:
    doc = {"schema": SCHEMA_VERSION}
    doc.update(report)
    # repr of a float is the shortest string that re-parses to the same double
    return json.dumps(_clean(doc), indent=2, allow_nan=False) + "\n"


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _csv_number(x: float) -> str:
    return format(float(x), ".17g")


def _summary(x: float) -> str:
    return format(float(x), ".3g")


def _describe(cfg: RunConfig) -> dict:
    b = cfg.billiard
    doc = {"billiard": {"lx": b.lx, "ly": b.ly, "mass": b.mass}, "kind": cfg.kind,
           "window": list(cfg.window)}
    imp = cfg.impurity
    if isinstance(imp, RectImpurity):
        doc["impurity"] = {"x": imp.center[0], "y": imp.center[1], "dlx": imp.dlx, "dly": imp.dly,
                           "u1": imp.u1, "v1": imp.v1, "area": imp.area, "cutoff": cfg.cutoff}
    else:
        doc["impurity"] = {"x": imp.x1[0], "y": imp.x1[1], "lambda": imp.lam,
                           "vbar_inv": imp.vbar_inv(b, cfg.series)}
    return doc


def _solve(cfg: RunConfig, threads: int) -> PointSpectrum:
    if isinstance(cfg.impurity, RectImpurity):
        if cfg.impurity.u1 == 0:
            energy = mode_table(cfg.billiard, cfg.window[1]).energy
            inside = [float(e) for e in energy if cfg.window[0] <= e <= cfg.window[1]]
            return PointSpectrum([], inside, [], math.inf)
        return truncated_secular_solve(cfg.billiard, cfg.impurity, cfg.window, cutoff=cfg.cutoff,
                                       tol=cfg.series.tol, threads=threads)
    return solve_point_spectrum(cfg.billiard, cfg.impurity, cfg.window, cfg.series, threads=threads)


def _line_dict(line) -> dict:
    return {
        "omega": line.omega,
        "bracket": list(line.bracket),
        "residual": line.residual,
        "top_coefficients": [{"m": m, "n": n, "c": c} for m, n, c in line.top_components(5)],
    }


def _table_csv(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_number(v) if isinstance(v, float) else str(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _wants_csv(cfg: RunConfig) -> bool:
    return cfg.output.get("format", "json") == "csv"


def cmd_spectrum(cfg: RunConfig, args) -> int:
    spectrum = _solve(cfg, args.threads)
    if _wants_csv(cfg):
        rows = [(l.omega, float(l.bracket[0]), float(l.bracket[1]), l.residual) for l in spectrum.lines]
        _emit(_table_csv(("omega", "bracket_lo", "bracket_hi", "residual"), rows), args.out)
        return EXIT_OK
    report = {
        "command": "spectrum",
        "config": _describe(cfg),
        "lines": [_line_dict(line) for line in spectrum.lines],
        "persistent": spectrum.persistent,
        "unresolved": [list(r) for r in spectrum.unresolved],
    }
    _emit(dumps_report(report), args.out)
    return EXIT_OK


def _classify_one(cfg: RunConfig, omega: float):
    b, imp = cfg.billiard, cfg.impurity
    if isinstance(imp, RectImpurity):
        return finite_metric(imp.u1, b.mass, imp.area, omega)
    inv = imp.vbar_inv(b, cfg.series)
    vbar = math.inf if inv == 0 else 1.0 / inv
    return point_metric(vbar, omega, b.mass, imp.lam)


def cmd_classify(cfg: RunConfig, args) -> int:
    imp = cfg.impurity
    if isinstance(imp, RectImpurity) and imp.u1 == 0:
        raise ConfigError("'impurity.u1' is 0: there is no impurity to classify")
    if not isinstance(imp, RectImpurity) and imp.vbar == 0 and imp.theta is None:
        raise ConfigError("'impurity.vbar' is 0: the scatterer is decoupled")
    if "omega" in cfg.classify:
        omegas = [float(cfg.classify["omega"])]
    else:
        omegas = [line.omega for line in _solve(cfg, args.threads).lines if line.omega > 0]
    reports = []
    for omega in omegas:
        rep = _classify_one(cfg, omega).to_dict()
        rep["omega"] = omega
        rep["summary"] = f"omega={_summary(omega)} metric={_summary(rep['metric'])} {rep['label']}"
        reports.append(rep)
    _emit(dumps_report({"command": "classify", "config": _describe(cfg), "reports": reports}), args.out)
    return EXIT_OK


def _oracle(cfg: RunConfig, margin: float = 0.0):
    """Oracle eigenpairs in the config window widened by ``margin`` on both sides."""
    if not isinstance(cfg.impurity, RectImpurity):
        raise ConfigError("'impurity.kind' must be 'rect' for the diagonalization oracle")
    window = (cfg.window[0] - margin, cfg.window[1] + margin)
    return window_eigenpairs(cfg.billiard, cfg.impurity, window, basis_factor=cfg.oracle_basis_factor)


def _top_overlaps(result, k, count=5):
    weights = result.eigenvectors[:, k] ** 2
    order = np.argsort(-weights, kind="stable")[:count]
    return [{"m": int(result.basis.m[i]), "n": int(result.basis.n[i]), "weight": float(weights[i])}
            for i in order]


def cmd_oracle(cfg: RunConfig, args) -> int:
    result = _oracle(cfg)
    rows = [{"index": k, "omega": float(w), "overlaps": _top_overlaps(result, k)}
            for k, w in enumerate(result.eigenvalues)]
    if _wants_csv(cfg):
        table = [(r["index"], r["omega"], r["overlaps"][0]["m"], r["overlaps"][0]["n"], r["overlaps"][0]["weight"])
                 for r in rows]
        _emit(_table_csv(("index", "omega", "top_m", "top_n", "top_weight"), table), args.out)
        return EXIT_OK
    report = {"command": "oracle", "config": _describe(cfg), "basis_size": result.basis_size,
              "basis_factor": cfg.oracle_basis_factor, "states": rows}
    _emit(dumps_report(report), args.out)
    return EXIT_OK


def compare_rows(cfg: RunConfig, threads: int = 1) -> list[dict]:
    """Pair each delta-model root in the window with the nearest oracle eigenvalue."""
    if not isinstance(cfg.impurity, RectImpurity):
        raise ConfigError("'impurity.kind' must be 'rect' for compare")
    spectrum = _solve(cfg, threads)
    delta = [line.omega for line in spectrum.lines] + list(spectrum.persistent)
    delta.sort()
    if cfg.impurity.u1 == 0:
        return [{"delta_omega": w, "oracle_omega": w, "difference": 0.0, "overlaps": []} for w in delta]
    # a root near the window edge may pair with a state just outside it
    result = _oracle(cfg, margin=1.0 / mean_level_density(cfg.billiard))
    rows = []
    for w in delta:
        k = int(np.argmin(np.abs(result.eigenvalues - w)))
        rows.append({"delta_omega": w, "oracle_omega": float(result.eigenvalues[k]),
                     "difference": abs(float(result.eigenvalues[k]) - w),
                     "overlaps": _top_overlaps(result, k, 2)})
    return rows


def cmd_compare(cfg: RunConfig, args) -> int:
    rows = compare_rows(cfg, args.threads)
    violations = [i for i, r in enumerate(rows) if r["difference"] > cfg.compare_bound]
    for r in rows:
        r["summary"] = (f"delta={_summary(r['delta_omega'])} oracle={_summary(r['oracle_omega'])} "
                        f"diff={_summary(r['difference'])}")
    if _wants_csv(cfg):
        table = [(r["delta_omega"], r["oracle_omega"], r["difference"],
                  " ".join(f"({o['m']},{o['n']}):{o['weight']:.3f}" for o in r["overlaps"])) for r in rows]
        _emit(_table_csv(("delta_omega", "oracle_omega", "difference", "overlaps"), table), args.out)
    else:
        report = {"command": "compare", "config": _describe(cfg), "bound": cfg.compare_bound,
                  "rows": rows, "violations": violations}
        _emit(dumps_report(report), args.out)
    if violations:
        print(f"compare: {len(violations)} difference(s) exceed {cfg.compare_bound}", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def raster_csv(values: np.ndarray, lx: float, ly: float, sampling="cell_centers") -> str:
    ny, nx = values.shape
    lines = [f"nx={nx},ny={ny},lx={_csv_number(lx)},ly={_csv_number(ly)},sampling={sampling}"]
    lines.extend(",".join(_csv_number(v) for v in row) for row in values)
    return "\n".join(lines) + "\n"


def pgm_bytes(density: np.ndarray) -> bytes:
    """Binary 8-bit PGM of ``density`` scaled min-max; row 0 is the top (largest y)."""
    lo, hi = float(density.min()), float(density.max())
    span = hi - lo
    scaled = np.zeros_like(density) if span == 0 else (density - lo) / span
    pixels = np.rint(scaled[::-1] * 255).astype(np.uint8)
    ny, nx = pixels.shape
    return f"P5\n{nx} {ny}\n255\n".encode("ascii") + pixels.tobytes()


def cmd_wavefunction(cfg: RunConfig, args) -> int:
    nx, ny = cfg.grid
    b = cfg.billiard
    if args.source == "oracle":
        result = _oracle(cfg)
        if not 0 <= args.state < len(result.eigenvalues):
            raise ConfigError(f"--state {args.state} out of range: "
                              f"{len(result.eigenvalues)} oracle states in window")
        amplitude, density = wavefunction_grid(b, result, nx, ny, state_index=args.state)
    else:
        lines = _solve(cfg, args.threads).lines
        if not 0 <= args.state < len(lines):
            raise ConfigError(f"--state {args.state} out of range: {len(lines)} solved lines in window")
        amplitude, density = wavefunction_grid(b, lines[args.state], nx, ny)
    quantity = cfg.output.get("quantity", "density")
    if quantity not in ("density", "amplitude"):
        raise ConfigError(f"'output.quantity' must be 'density' or 'amplitude', got {quantity!r}")
    _emit(raster_csv(density if quantity == "density" else amplitude, b.lx, b.ly), args.out)
    if args.pgm:
        Path(args.pgm).write_bytes(pgm_bytes(density))
    return EXIT_OK


def _strip_axes(cfg: RunConfig):
    s = cfg.strip
    try:
        om = (float(s["omega_min"]), float(s["omega_max"]), int(s.get("omega_count", 50)))
        uu = (float(s["u1_inv_min"]), float(s["u1_inv_max"]), int(s.get("u1_inv_count", 50)))
    except KeyError as exc:
        raise ConfigError(f"missing key 'strip_map.{exc.args[0]}'") from exc
    return om, uu


def cmd_strip_map(cfg: RunConfig, args) -> int:
    if not isinstance(cfg.impurity, RectImpurity):
        raise ConfigError("'impurity.kind' must be 'rect' for strip-map")
    om, uu = _strip_axes(cfg)
    try:
        smap = strip_map(cfg.billiard.mass, cfg.impurity.area, om, uu)
    except ValueError as exc:
        raise ConfigError(f"strip_map: {exc}") from exc
    grid = ["omega,u1_inv,metric,label"]
    grid.extend(f"{_csv_number(w)},{_csv_number(u)},{_csv_number(m)},{lab}" for w, u, m, lab in smap.rows())
    center = ["omega,center_u1,lower,upper,half_width"]
    for i, w in enumerate(smap.omegas):
        center.append(",".join(_csv_number(v) for v in
                               (w, smap.center_u1[i], smap.lower[i], smap.upper[i], smap.half_width)))
    _emit("\n".join(grid) + "\n", args.out)
    center_path = args.center_out
    if center_path is None and args.out is not None:
        out = Path(args.out)
        center_path = out.with_name(out.stem + "_center" + (out.suffix or ".csv"))
    if center_path is not None:
        Path(center_path).write_text("\n".join(center) + "\n", encoding="utf-8", newline="\n")
    return EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "classify": cmd_classify,
    "wavefunction": cmd_wavefunction,
    "strip-map": cmd_strip_map,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
}


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads for root finding")
    common.add_argument("--seedless", action="store_true",
                        help="reserved; nothing here is random, the flag takes no value")

    parser = argparse.ArgumentParser(prog="impurity-billiard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "classify", "oracle", "compare"):
        sub.add_parser(name, parents=[common])
    wf = sub.add_parser("wavefunction", parents=[common])
    wf.add_argument("--state", type=int, default=0, help="0-based index among states in the window")
    wf.add_argument("--source", choices=("spectrum", "oracle"), default="spectrum")
    wf.add_argument("--pgm", default=None, help="also write |psi|^2 as an 8-bit PGM")
    sm = sub.add_parser("strip-map", parents=[common])
    sm.add_argument("--center-out", default=None, help="centre-curve CSV (default: <out>_center.csv)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.out is None:
            args.out = cfg.output.get("path")
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EigenSolverError, MemoryError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
