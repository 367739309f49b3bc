import json

import numpy as np
import pytest

from anosovlab.cli import dumps, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_ball_counts(capsys):
    code, out, _ = run(["ball", "cyclic-hyperbolic", "--radius", "3"], capsys)
    assert code == 0 and len(out.splitlines()) == 7
    code, out, _ = run(["ball", "schottky-3", "--radius", "3"], capsys)
    recs = [json.loads(line) for line in out.splitlines()]
    assert len(recs) == 53
    assert recs[0]["word"] == "" and recs[0]["length"] == 0
    assert recs[1]["alpha"]["1"] == pytest.approx(2 * np.log(3))


def test_invalid_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["ball", str(bad)], capsys)[0] == 2
    # a generator with determinant 1.01
    doc = {"version": 1, "field": "R", "dim": 2,
           "generators": [{"name": "a", "entries": [[1.01, 0.0], [0.0, 1.0]]}]}
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text(json.dumps(doc))
    code, _, err = run(["ball", str(corrupt)], capsys)
    assert code == 2 and "invalid input" in err
    assert run(["verify", "sym3-schottky-3", "--suite", "sym"], capsys)[0] == 2
    assert run(["pipeline", "schottky-3", "--experiments", "magic"], capsys)[0] == 2


def test_verify(capsys):
    code, out, _ = run(["verify", "sym4-schottky-3", "--suite", "wedge"], capsys)
    assert code == 0 and all(line.startswith("PASS") for line in out.splitlines())
    # an impossible tolerance fails with exit 1 and names the worst residual
    code, _, err = run(["verify", "schottky-3", "--suite", "roots", "--tol", "0"], capsys)
    assert code == 1 and "worst residual" in err


def test_pipeline_exponent_and_boxdim(tmp_path, capsys):
    out = tmp_path / "rep.json"
    code, _, _ = run(["pipeline", "schottky-10", "--experiments", "exponent,boxdim",
                      "--radius", "8", "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["schema"] == 1 and rep["command"] == "pipeline"
    res = rep["results"]
    assert abs(res["exponent"]["delta"] - res["boxdim"]["dimension"]) < 0.15


def test_shadow_needs_kleinian(tmp_path, capsys):
    out = tmp_path / "rep.json"
    code, _, _ = run(["pipeline", "sym3-schottky-3", "--experiments", "exponent,shadow",
                      "--radius", "5", "--out", str(out)], capsys)
    rep = json.loads(out.read_text())
    assert code == 0 and rep["results"]["shadow"] is None
    assert any("Kleinian" in w for w in rep["warnings"])
    assert run(["shadow", "sym3-schottky-3", "--radius", "4"], capsys)[0] == 2


def test_reports_are_reproducible(tmp_path, capsys):
    paths = []
    for i, threads in enumerate((1, 1, 3)):
        p = tmp_path / f"r{i}.json"
        assert run(["pipeline", "schottky-3", "--experiments", "limit-set,exponent,hyperconvex",
                    "--radius", "6", "--triples", "50", "--threads", str(threads),
                    "--out", str(p)], capsys)[0] == 0
        paths.append(p.read_bytes())
    assert paths[0] == paths[1] == paths[2]


def test_emit_points(tmp_path, capsys):
    csv = tmp_path / "pts.csv"
    code, _, _ = run(["limit-set", "schottky-3", "--radius", "5", "--out", str(tmp_path / "r.json"),
                      "--emit-points", str(csv)], capsys)
    assert code == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "re,im" and len(lines) > 10
    z = np.array([[float(t) for t in line.split(",")] for line in lines[1:]])
    # the attracting point of A = diag(1/3, 3) is the chart's point at infinity
    assert not np.any(np.isnan(z))
    assert np.sum(np.isinf(z[:, 0])) >= 1


def test_dumps_format():
    assert dumps({"x": -0.0, "y": float("nan"), "z": np.float64(0.1)}, indent=None) == \
        '{"x": 0, "y": null, "z": 0.10000000000000001}'


def test_dumps_round_trips_doubles():
    x = np.random.default_rng(3).standard_normal(200) * 10.0 ** np.arange(-100, 100)
    back = json.loads(dumps(list(x), indent=None))
    assert np.array_equal(np.array(back), x)
