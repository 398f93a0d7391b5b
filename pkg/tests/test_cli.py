import copy
import json
import math
from importlib import resources

import numpy as np
import pytest

from impurity_billiard import RectangleBilliard, RectImpurity, eigenfunction_value, lowest_modes
from impurity_billiard.cli import main, pgm_bytes
from impurity_billiard.config import ConfigError, parse_config


@pytest.fixture(scope="module")
def fig1c():
    text = resources.files("impurity_billiard").joinpath("configs/fig1c.json").read_text()
    return json.loads(text)


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def with_v1(doc, v1):
    doc = copy.deepcopy(doc)
    imp = doc["impurity"]
    doc["impurity"]["u1"] = v1 / (imp["dlx"] * imp["dly"])
    return doc


def run(tmp_path, doc, *args, out="out.json"):
    cfg = write(tmp_path, doc)
    target = tmp_path / out
    code = main([args[0], "--config", cfg, "--out", str(target), *args[1:]])
    return code, target


def test_shipped_config_is_the_reference_setup(fig1c):
    cfg = parse_config(fig1c)
    assert cfg.billiard == RectangleBilliard.reference()
    assert cfg.impurity.v1 == pytest.approx(-0.25, rel=1e-5)
    assert cfg.impurity.center == (0.622482, 0.275835)


def test_spectrum_fig1c(tmp_path, fig1c):
    code, out = run(tmp_path, fig1c, "spectrum")
    assert code == 0
    report = json.loads(out.read_text())
    assert report["schema"] == 1
    omegas = [line["omega"] for line in report["lines"]]
    assert omegas == sorted(omegas)
    assert any(abs(w - 5.63) <= 0.2 for w in omegas)
    assert all(len(line["top_coefficients"]) == 5 for line in report["lines"])


def test_spectrum_deterministic_across_runs_and_threads(tmp_path, fig1c):
    _, a = run(tmp_path, fig1c, "spectrum", out="a.json")
    _, b = run(tmp_path, fig1c, "spectrum", out="b.json")
    _, c = run(tmp_path, fig1c, "spectrum", "--threads", "3", out="c.json")
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_json_round_trip(tmp_path, fig1c):
    _, out = run(tmp_path, fig1c, "spectrum")
    text = out.read_text()
    report = json.loads(text)
    for line in report["lines"]:
        assert float(repr(line["omega"])) == line["omega"]
        assert repr(line["omega"]) in text


def test_point_spectrum_huge_inverse_strength(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["impurity"] = {"kind": "point", "x": 0.622482, "y": 0.275835, "vbar_inv": 1e9}
    doc["solver"]["n_max"] = 10000
    code, out = run(tmp_path, doc, "spectrum")
    assert code == 0
    report = json.loads(out.read_text())
    levels = lowest_modes(RectangleBilliard.reference(), 10).energy
    levels = levels[levels < 8.0]
    assert len(report["lines"]) == len(levels) == 5
    for line, level in zip(report["lines"], levels):
        assert abs(line["omega"] - level) < 1e-6
        assert line["residual"] < 1e-9


def test_classify_cases(tmp_path, fig1c):
    code, out = run(tmp_path, fig1c, "classify")
    assert code == 0
    rep = json.loads(out.read_text())["reports"][0]
    assert rep["label"] == "strong"
    assert rep["metric"] == pytest.approx(0.12, abs=0.01)
    doc = with_v1(fig1c, 10.0)
    doc["classify"]["omega"] = 4.93
    code, out = run(tmp_path, doc, "classify")
    rep = json.loads(out.read_text())["reports"][0]
    assert rep["label"] == "borderline"
    assert rep["metric"] == pytest.approx(0.55, abs=0.01)


def test_classify_zero_potential_fails(tmp_path, fig1c, capsys):
    doc = copy.deepcopy(fig1c)
    doc["impurity"]["u1"] = 0.0
    code, _ = run(tmp_path, doc, "classify")
    assert code != 0
    assert "u1" in capsys.readouterr().err


@pytest.mark.parametrize("path,value,key", [
    (("billiard", "lx"), None, "billiard.lx"),
    (("billiard", "mass"), -1.0, "billiard.mass"),
    (("impurity", "dly"), "wide", "impurity.dly"),
    (("window", "e_max"), None, "window.e_max"),
    (("solver", "n_max"), 12.5, "solver.n_max"),
    (("output", "grid_nx"), 1, "output.grid_nx"),
    (("impurity", "kind"), "disc", "impurity.kind"),
    (("solver", "cutoff"), "huge", "solver.cutoff"),
])
def test_config_errors_name_the_key(fig1c, path, value, key):
    doc = copy.deepcopy(fig1c)
    if value is None:
        del doc[path[0]][path[1]]
    else:
        doc[path[0]][path[1]] = value
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(doc)


def test_config_error_exit_code(tmp_path, fig1c, capsys):
    doc = copy.deepcopy(fig1c)
    doc["impurity"]["x"] = 5.0
    code, _ = run(tmp_path, doc, "spectrum")
    assert code == 2
    assert "impurity" in capsys.readouterr().err
    assert main(["spectrum", "--config", str(tmp_path / "missing.json")]) == 2


def test_seedless_flag(tmp_path, fig1c, capsys):
    cfg = write(tmp_path, fig1c)
    assert main(["classify", "--config", cfg, "--seedless"]) == 0
    assert main(["classify", "--config", cfg, "--seedless=1"]) == 2


def test_solver_failure_exit_code(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["window"]["e_max"] = 400.0
    code, _ = run(tmp_path, doc, "spectrum")
    assert code == 3


def test_wavefunction_csv_and_pgm(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["output"]["grid_nx"], doc["output"]["grid_ny"] = 24, 18
    pgm = tmp_path / "psi.pgm"
    code, out = run(tmp_path, doc, "wavefunction", "--state", "2", "--pgm", str(pgm), out="psi.csv")
    assert code == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    rows = raw.decode().splitlines()
    assert len(rows) == 18 + 1
    assert rows[0].startswith("nx=24,ny=18,") and rows[0].endswith("sampling=cell_centers")
    assert all(len(r.split(",")) == 24 for r in rows[1:])
    head = pgm.read_bytes()
    assert head.startswith(b"P5\n24 18\n255\n")
    assert len(head) == len(b"P5\n24 18\n255\n") + 24 * 18


def test_wavefunction_pure_mode_matches_analytic(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["impurity"]["u1"] = 0.0
    doc["output"].update(grid_nx=16, grid_ny=12, quantity="amplitude")
    code, out = run(tmp_path, doc, "wavefunction", "--source", "oracle", "--state", "3", out="m.csv")
    assert code == 0
    values = np.loadtxt(out, delimiter=",", skiprows=1)
    b = RectangleBilliard.reference()
    xs = (np.arange(16) + 0.5) * b.lx / 16
    ys = (np.arange(12) + 0.5) * b.ly / 12
    ref = np.array([[eigenfunction_value(b, (2, 2), x, y) for x in xs] for y in ys])
    # the sign of an eigenvector is arbitrary
    assert min(np.max(np.abs(values - ref)), np.max(np.abs(values + ref))) < 1e-10


def test_wavefunction_bad_selector(tmp_path, fig1c):
    code, _ = run(tmp_path, fig1c, "wavefunction", "--state", "99", out="x.csv")
    assert code == 2


def test_mixing_from_oracle(tmp_path, fig1c):
    code, out = run(tmp_path, fig1c, "oracle")
    assert code == 0
    states = json.loads(out.read_text())["states"]
    state = min(states, key=lambda s: abs(s["omega"] - 5.63))
    weights = {(o["m"], o["n"]): o["weight"] for o in state["overlaps"]}
    assert weights[(1, 2)] >= 0.15 and weights[(2, 2)] >= 0.15


def test_strip_map_outputs(tmp_path, fig1c):
    code, out = run(tmp_path, fig1c, "strip-map", out="strip.csv")
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "omega,u1_inv,metric,label"
    s = fig1c["strip_map"]
    assert len(rows) - 1 == s["omega_count"] * s["u1_inv_count"]
    for row in rows[1:]:
        _, _, metric, label = row.split(",")
        if label == "strong":
            assert float(metric) <= math.pi / 8
    centre = (tmp_path / "strip_center.csv").read_text().splitlines()
    assert len(centre) - 1 == s["omega_count"]
    assert all(float(r.split(",")[1]) < 0 for r in centre[1:])


def test_strip_map_range_error(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["strip_map"]["omega_max"] = 1000.0
    code, _ = run(tmp_path, doc, "strip-map", out="s.csv")
    assert code == 2


def test_compare_fig1c(tmp_path, fig1c):
    code, out = run(tmp_path, fig1c, "compare")
    assert code == 0
    rows = json.loads(out.read_text())["rows"]
    assert rows and all(r["difference"] <= 0.1 for r in rows)


def test_compare_zero_potential(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["impurity"]["u1"] = 0.0
    code, out = run(tmp_path, doc, "compare")
    assert code == 0
    assert all(r["difference"] == 0.0 for r in json.loads(out.read_text())["rows"])


def test_compare_bound_violation(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    doc["compare"]["bound"] = 1e-6
    code, _ = run(tmp_path, doc, "compare")
    assert code == 1


def test_compare_shrinking_patch(tmp_path, fig1c):
    diffs = []
    for factor in (1.0, 0.25):
        doc = copy.deepcopy(fig1c)
        imp = RectImpurity.reference(-0.25).scaled(factor)
        doc["impurity"].update(dlx=imp.dlx, dly=imp.dly, u1=imp.u1)
        doc["window"] = {"e_min": 1.6, "e_max": 6.0}
        code, out = run(tmp_path, doc, "compare", out=f"c{factor}.json")
        assert code == 0
        diffs.append([r["difference"] for r in json.loads(out.read_text())["rows"]])
    assert len(diffs[0]) == len(diffs[1]) == 3
    assert all(b < a for a, b in zip(*diffs))


def test_pgm_constant_image():
    data = pgm_bytes(np.ones((2, 3)))
    assert data.endswith(bytes(6))


def test_csv_format_and_config_path(tmp_path, fig1c):
    doc = copy.deepcopy(fig1c)
    target = tmp_path / "lines.csv"
    doc["output"].update(format="csv", path=str(target))
    cfg = write(tmp_path, doc)
    assert main(["spectrum", "--config", cfg]) == 0
    rows = target.read_text().splitlines()
    assert rows[0] == "omega,bracket_lo,bracket_hi,residual"
    assert any(abs(float(r.split(",")[0]) - 5.63) < 0.2 for r in rows[1:])
    doc["output"]["path"] = 7
    with pytest.raises(ConfigError, match=r"output\.path"):
        parse_config(doc)
