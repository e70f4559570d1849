import io
import json
from pathlib import Path

import numpy as np
import pytest

from csa2sls.cli import _num, main, parse_args, render_report, run_estimate
from csa2sls.estimators import EstimationResult

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"
TOY_ARGS = ["estimate", "--data", str(DATA / "toy.csv"), "--dep", "dc", "--endo", "rrf", "--iv", "z1-z4"]
JSON_KEYS = ["N", "K", "rmse", "estimator", "cmd", "depvar", "cmdline", "k_opt", "b", "V"]


def test_parse_defaults():
    spec = parse_args(["estimate", "--data", "USAQ.csv", "--dep", "dc", "--endo", "rrf", "--iv", "z1-z4"])
    assert (spec.r, spec.seed, spec.noconstant, spec.onestep, spec.large) == (100, 2022, False, False, False)
    assert spec.iv == "z1-z4" and spec.dep == "dc"


def test_parse_flags():
    spec = parse_args(["estimate", "--data", "f.csv", "--dep", "y", "--endo", "x", "--iv", "z1",
                       "--noconstant", "--onestep", "--r", "50"])
    assert spec.noconstant and spec.onestep and spec.r == 50


@pytest.mark.parametrize("argv", [
    ["estimate", "--data", "f.csv", "--dep", "y", "--endo", "x"],
    ["estimate", "--data", "f.csv", "--dep", "y", "--endo", "x", "--iv", "z", "--bogus"],
    ["estimate", "--data", "f.csv", "--dep", "y", "--endo", "x", "--iv", "z", "--r", "0"],
    ["montecarlo", "--reps", "0"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        parse_args(argv)
    assert info.value.code == 2


def test_golden_report(capsys):
    assert main(TOY_ARGS) == 0
    out = capsys.readouterr().out
    assert out == (GOLDEN / "toy_report.txt").read_text()
    for field in ("Number of obs", "Number of IVs", "Root MSE", "optimal k"):
        assert field in out


def test_json_schema_and_roundtrip(tmp_path, capsys):
    path = tmp_path / "out.json"
    argv = TOY_ARGS + ["--json", str(path), "--quiet"]
    assert main(argv) == 0
    assert capsys.readouterr().out == ""
    stored = json.loads(path.read_text())
    assert list(stored) == JSON_KEYS
    assert stored["cmd"] == "csa2sls" and stored["estimator"] == "mallows"
    assert stored["cmdline"] == " ".join(argv)
    assert stored["depvar"] == "dc" and stored["N"] == 118 and stored["K"] == 4
    assert list(stored["b"]) == ["rrf", "_cons"]
    assert list(stored["V"]) == ["rrf", "_cons"] and all(list(r) == ["rrf", "_cons"] for r in stored["V"].values())
    golden = json.loads((GOLDEN / "toy_stored.json").read_text())
    assert list(golden) == JSON_KEYS
    assert stored["k_opt"] == golden["k_opt"]
    for name in golden["b"]:
        assert stored["b"][name] == pytest.approx(golden["b"][name], rel=1e-9)


def test_onestep_tag(tmp_path):
    path = tmp_path / "o.json"
    assert main(TOY_ARGS + ["--onestep", "--quiet", "--json", str(path)]) == 0
    assert json.loads(path.read_text())["estimator"] == "onestep"


def test_byte_identical_runs(tmp_path, capsys):
    outs = []
    path = tmp_path / "r.json"
    for _ in range(2):
        main(TOY_ARGS + ["--json", str(path)])
        outs.append((capsys.readouterr().out, path.read_bytes()))
    assert outs[0] == outs[1]


def test_printed_matches_json(tmp_path):
    spec = parse_args(TOY_ARGS)
    buf = io.StringIO()
    result, stored = run_estimate(spec, stdout=buf)
    assert [stored.b[n] for n in result.names] == result.b.tolist()
    line = next(l for l in buf.getvalue().splitlines() if l.strip().startswith("rrf |"))
    assert float(line.split("|")[1].split()[0]) == pytest.approx(result.b[0], rel=1e-6)


def test_single_instrument_file(capsys):
    argv = ["estimate", "--data", str(DATA / "single_iv.csv"), "--dep", "y", "--endo", "x", "--iv", "z1"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "optimal k    : 1" in out
    rows = [l.split("|")[0].strip() for l in out.splitlines() if "|" in l and "Coef." not in l]
    assert rows == ["x", "_cons"]


def test_blp_shaped_header(capsys):
    argv = ["estimate", "--data", str(DATA / "blp_like.csv"), "--dep", "y",
            "--exog", "hpwt", "air", "mpd", "space", "--endo", "price",
            "--iv", "sumother1-sumother5", "sumrival1-sumrival5", "--large"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "Number of IVs = 10" in out
    assert "Number of obs = 150" in out


def test_noconstant(capsys):
    assert main(TOY_ARGS + ["--noconstant"]) == 0
    assert "_cons" not in capsys.readouterr().out


def test_error_exit_status(tmp_path, capsys):
    assert main(["estimate", "--data", str(tmp_path / "missing.csv"), "--dep", "y",
                 "--endo", "x", "--iv", "z"]) == 1
    assert main(TOY_ARGS[:-1] + ["q1-q4", "--quiet"]) == 1
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "error" in captured.err


def test_render_zero_coefficient():
    one = np.array([0.0])
    res = EstimationResult(b=one, V=np.eye(1), se=np.ones(1), z=np.zeros(1), p=np.ones(1),
                           ci_low=-1.959964 * np.ones(1), ci_high=1.959964 * np.ones(1),
                           rmse=1.0, N=10, K=1, estimator="csa2sls", names=["x"], k_opt=1)
    text = render_report(res, "y", ["x"], ["z1"])
    row = next(l for l in text.splitlines() if l.strip().startswith("x |"))
    cells = row.split("|")[1].split()
    assert cells[2] == "0.00" and cells[3] == "1.000"
    assert float(cells[4]) == pytest.approx(-1.959964) and float(cells[5]) == pytest.approx(1.959964)


def test_num_format():
    assert _num(-0.0247716) == "-.0247716"
    assert _num(1.1244518) == "1.124452"
    assert _num(-0.007798131) == "-.00779813"


def test_montecarlo_command(tmp_path, capsys):
    out = tmp_path / "mc.tsv"
    assert main(["montecarlo", "--K", "5", "--rho", "0", "--reps", "10", "--seed", "1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len([l for l in lines[2:] if l]) == 3
    assert "K=5" in capsys.readouterr().out


def test_montecarlo_default_grid():
    from csa2sls.montecarlo import McConfig

    spec = parse_args(["montecarlo"])
    assert spec.K_grid is None and spec.rho_grid is None
    cfg = McConfig()
    assert len(cfg.K_grid) * len(cfg.rho_grid) == 12
