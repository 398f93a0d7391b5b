"""JSON run configuration for the command-line tool."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .basis import RectangleBilliard
from .finite_impurity import RectImpurity
from .pointscatterer import PointScatterer, SeriesConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _section(doc, key, required=True):
    value = doc.get(key)
    if value is None:
        if required:
            raise ConfigError(f"missing section '{key}'")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be an object")
    return value


def _number(section, path, key, *, required=True, default=None, positive=False, integer=False):
    if key not in section or section[key] is None:
        if required:
            raise ConfigError(f"missing key '{path}.{key}'")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}.{key}' must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"'{path}.{key}' must be an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"'{path}.{key}' must be finite")
    if positive and not value > 0:
        raise ConfigError(f"'{path}.{key}' must be positive, got {value!r}")
    return int(value) if integer else float(value)


@dataclass
class RunConfig:
    billiard: RectangleBilliard
    kind: str
    impurity: RectImpurity | PointScatterer
    series: SeriesConfig
    window: tuple[float, float]
    oracle_basis_factor: float = 10.0
    cutoff: str | float = "matched"
    output: dict = field(default_factory=dict)
    classify: dict = field(default_factory=dict)
    strip: dict = field(default_factory=dict)
    compare_bound: float = 0.1
    source: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> tuple[int, int]:
        return int(self.output.get("grid_nx", 64)), int(self.output.get("grid_ny", 64))


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"'schema' must be {SCHEMA_VERSION}, got {schema!r}")

    b = _section(doc, "billiard")
    try:
        billiard = RectangleBilliard(_number(b, "billiard", "lx", positive=True),
                                     _number(b, "billiard", "ly", positive=True),
                                     _number(b, "billiard", "mass", positive=True))
    except ValueError as exc:
        raise ConfigError(f"billiard: {exc}") from exc

    s = _section(doc, "solver", required=False)
    tail = s.get("tail_correction", True)
    if not isinstance(tail, bool):
        raise ConfigError("'solver.tail_correction' must be true or false")
    try:
        series = SeriesConfig(
            n_max=_number(s, "solver", "n_max", required=False, default=100_000, integer=True),
            tail_correction=tail,
            tol=_number(s, "solver", "tol", required=False, default=1e-12, positive=True),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    basis_factor = _number(s, "solver", "oracle_basis_factor", required=False, default=10.0, positive=True)
    cutoff = s.get("cutoff", "matched")
    if not (cutoff in ("matched", "simple") or (isinstance(cutoff, (int, float)) and not isinstance(cutoff, bool)
                                               and cutoff > 0)):
        raise ConfigError(f"'solver.cutoff' must be 'matched', 'simple' or a positive number, got {cutoff!r}")

    imp = _section(doc, "impurity")
    kind = imp.get("kind")
    x = _number(imp, "impurity", "x")
    y = _number(imp, "impurity", "y")
    if kind == "rect":
        try:
            impurity = RectImpurity((x, y), _number(imp, "impurity", "dlx", positive=True),
                                    _number(imp, "impurity", "dly", positive=True),
                                    _number(imp, "impurity", "u1"))
            impurity.validate(billiard)
        except ValueError as exc:
            raise ConfigError(f"impurity: {exc}") from exc
    elif kind == "point":
        lam = _number(imp, "impurity", "lambda", required=False, default=1.0, positive=True)
        given = [k for k in ("theta", "vbar", "vbar_inv") if imp.get(k) is not None]
        if len(given) != 1:
            raise ConfigError("'impurity' of kind point needs exactly one of theta, vbar, vbar_inv")
        key = given[0]
        value = _number(imp, "impurity", key)
        try:
            if key == "theta":
                impurity = PointScatterer((x, y), theta=value, lam=lam)
            elif key == "vbar":
                impurity = PointScatterer((x, y), vbar=value, lam=lam)
            else:
                impurity = PointScatterer.from_vbar_inv((x, y), value, lam)
            impurity.validate(billiard)
        except ValueError as exc:
            raise ConfigError(f"impurity.{key}: {exc}") from exc
    else:
        raise ConfigError(f"'impurity.kind' must be 'point' or 'rect', got {kind!r}")

    w = _section(doc, "window")
    window = (_number(w, "window", "e_min"), _number(w, "window", "e_max"))
    if not window[0] < window[1]:
        raise ConfigError("'window.e_min' must be below 'window.e_max'")

    out = _section(doc, "output", required=False)
    for key in ("grid_nx", "grid_ny"):
        if key in out:
            n = _number(out, "output", key, integer=True)
            if n < 2:
                raise ConfigError(f"'output.{key}' must be at least 2")
    if "path" in out and not isinstance(out["path"], str):
        raise ConfigError("'output.path' must be a string")
    fmt = out.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError(f"'output.format' must be 'json' or 'csv', got {fmt!r}")

    classify = _section(doc, "classify", required=False)
    if "omega" in classify:
        _number(classify, "classify", "omega", positive=True)

    strip = _section(doc, "strip_map", required=False)
    for key in ("omega_min", "omega_max", "u1_inv_min", "u1_inv_max"):
        if key in strip:
            _number(strip, "strip_map", key)
    for key in ("omega_count", "u1_inv_count"):
        if key in strip:
            if _number(strip, "strip_map", key, integer=True) < 1:
                raise ConfigError(f"'strip_map.{key}' must be at least 1")

    cmp_section = _section(doc, "compare", required=False)
    bound = _number(cmp_section, "compare", "bound", required=False, default=0.1, positive=True)

    return RunConfig(billiard, kind, impurity, series, window, basis_factor, cutoff,
                     dict(out), dict(classify), dict(strip), bound, doc)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
