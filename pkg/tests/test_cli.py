import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from _util import TOY_INDEX, toy_data
from bavamio.cli import run
from bavamio.simulation import irr_stat


def write_table(path, header, cols):
    rows = np.column_stack(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[repr(float(v)) for v in r] for r in rows])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def small_linear(tmp_path, n=40, p=6, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    y = 3 * x[:, 0] - 2 * x[:, 2] + 0.5 * rng.standard_normal(n)
    return write_table(tmp_path / "lin.csv", ["y"] + [f"x{j + 1}" for j in range(p)],
                       [y] + [x[:, j] for j in range(p)])


def tree(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*"))


def test_missing_data_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        run(["fit", "--response", "y", "--out", "x"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bavamio.cli", "fit", "--response", "y"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2 and "--data" in proc.stderr


def test_bad_covariance_exits_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        run(["simulate", "--study", "one", "--n", "10", "--p", "5", "--cov", "banded:3",
             "--out", str(tmp_path / "o")])
    assert info.value.code == 2
    assert not (tmp_path / "o").exists()


def test_non_binary_response_exits_3(tmp_path, capsys):
    f = write_table(tmp_path / "g.csv", ["y", "a"], [np.array([0, 1, 2, 1.0]), np.arange(4.0)])
    assert run(["fit-glm", "--data", str(f), "--response", "y", "--out", str(tmp_path / "o")]) == 3
    assert "row 3" in capsys.readouterr().err


def test_missing_file_exits_3(tmp_path):
    assert run(["fit", "--data", str(tmp_path / "none.csv"), "--response", "y",
                "--out", str(tmp_path / "o")]) == 3


def test_fit_outputs_and_defaults(tmp_path):
    f = small_linear(tmp_path)
    out = tmp_path / "fit"
    assert run(["fit", "--data", str(f), "--response", "y", "--grid", "30", "--out", str(out)]) == 0
    assert tree(out) == ["coefficients.csv", "manifest.json", "path.csv", "summary.json"]
    path = read_csv(out / "path.csv")
    assert len(path) == 30
    assert list(path[0]) == ["psi", "kappa_star", "log_bf", "cv_mean", "cv_se", "n_selected", "sigma2"]
    assert path[0]["n_selected"] == "0" and path[0]["cv_mean"] == ""
    coef = read_csv(out / "coefficients.csv")
    assert [c["name"] for c in coef] == [f"x{j}" for j in range(1, 7)]
    nz = [int(c["index"]) for c in coef if float(c["beta"]) != 0]
    assert nz == [1, 3]
    summary = json.loads((out / "summary.json").read_text())
    h = summary["hyperparameters"]
    t = 6 * math.log(6) / math.sqrt(40)
    assert h["lambda"] == pytest.approx(1 / math.sqrt(40))
    assert h["tau2"] == pytest.approx(t) and h["tau1"] == pytest.approx(t + 1)
    assert h["tau3"] == 1e-6
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "fit" and len(m["inputs"]["data"]) == 64


def test_fit_cv_standardized(tmp_path):
    f = small_linear(tmp_path, seed=3)
    out = tmp_path / "cv"
    assert run(["fit", "--data", str(f), "--response", "y", "--select", "cv", "--cv-folds", "4",
                "--standardize", "--grid", "20", "--out", str(out)]) == 0
    coef = read_csv(out / "coefficients.csv")
    assert coef[0]["index"] == "0" and coef[0]["name"] == "(intercept)"
    beta = {int(c["index"]): float(c["beta"]) for c in coef}
    assert beta[1] == pytest.approx(3, abs=0.3) and beta[3] == pytest.approx(-2, abs=0.3)
    path = read_csv(out / "path.csv")
    assert all(r["cv_mean"] != "" for r in path)


def test_irrstat_fixtures(tmp_path, capsys):
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((20, 4)))
    f = write_table(tmp_path / "orth.csv", ["a", "b", "c", "d"], [q[:, j] for j in range(4)])
    assert run(["irrstat", "--data", str(f), "--support", "1,2", "--signs", "1,-1"]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.split()[0] == "irr_stat" and float(first.split()[1]) == pytest.approx(1.0, abs=1e-12)
    dup = write_table(tmp_path / "dup.csv", ["a", "b", "c"],
                      [q[:, 0], q[:, 1], 0.5 * (q[:, 0] - q[:, 1])])
    assert run(["irrstat", "--data", str(dup), "--support", "1,2", "--signs", "1,-1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert float(lines[0].split()[1]) == pytest.approx(0.0, abs=1e-12)
    assert lines[1].split()[1:3] == ["3", "c"]


def test_irrstat_matches_module_and_singular(tmp_path, capsys):
    x = np.random.default_rng(4).standard_normal((30, 6))
    f = write_table(tmp_path / "r.csv", [f"c{j}" for j in range(6)], [x[:, j] for j in range(6)])
    out = tmp_path / "irr"
    assert run(["irrstat", "--data", str(f), "--support", "2,5", "--signs", "-1,1",
                "--out", str(out)]) == 0
    val = float(capsys.readouterr().out.split()[1])
    assert val == irr_stat(x, [1, 4], [-1, 1])
    assert tree(out) == ["irrstat.csv", "manifest.json", "summary.json"]
    x[:, 3] = x[:, 1]
    g = write_table(tmp_path / "s.csv", [f"c{j}" for j in range(6)], [x[:, j] for j in range(6)])
    assert run(["irrstat", "--data", str(g), "--support", "2,4", "--signs", "1,1"]) == 4
    assert run(["irrstat", "--data", str(g), "--support", "2,9", "--signs", "1,1"]) == 2


def test_simulate_study_one_deterministic(tmp_path):
    args = ["simulate", "--study", "one", "--n", "30", "--p", "40", "--snr", "3", "--replicates",
            "1", "--grid", "15", "--cv-folds", "3", "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert tree(a) == ["aggregate.csv", "manifest.json", "replicates.csv", "summary.json"]
    rows = read_csv(a / "replicates.csv")
    assert [r["estimator"] for r in rows] == ["bmio-bf", "bmio-cv", "lasso-cv"]
    for name in ("replicates.csv", "aggregate.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_simulate_study_two_irrstat(tmp_path):
    out = tmp_path / "two"
    assert run(["simulate", "--study", "two", "--n", "100", "--p", "30", "--n-active", "5",
                "--cov", "wishart", "--snr", "10", "--pairs", "8", "--replicates", "2",
                "--grid", "30", "--out", str(out)]) == 0
    stats = [float(r["irr_stat"]) for r in read_csv(out / "irrstat.csv")]
    assert len(stats) == 8 and max(stats) <= 1
    assert min(stats) < 0


def test_rerun_reproduces_bytes(tmp_path):
    f = small_linear(tmp_path, seed=5)
    first = tmp_path / "first"
    assert run(["fit", "--data", str(f), "--response", "y", "--select", "cv", "--cv-folds", "3",
                "--grid", "15", "--out", str(first)]) == 0
    again = tmp_path / "again"
    assert run(["rerun", str(first / "manifest.json"), "--out", str(again)]) == 0
    for name in ("coefficients.csv", "path.csv", "summary.json"):
        assert (first / name).read_bytes() == (again / name).read_bytes()
    # the input is checked against its recorded digest
    f.write_text(f.read_text() + "1,1,1,1,1,1,1\n")
    assert run(["rerun", str(first / "manifest.json"), "--out", str(tmp_path / "x")]) == 3


def test_nothing_written_outside_out(tmp_path, monkeypatch):
    f = small_linear(tmp_path, seed=1)
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    before = tree(tmp_path)
    assert run(["fit", "--data", str(f), "--response", "y", "--grid", "10",
                "--out", str(tmp_path / "res")]) == 0
    added = set(tree(tmp_path)) - set(before)
    assert all(p.startswith("res") for p in added)


def _separable(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4 * n, 2))
    s = x[:, 0] - x[:, 1]
    keep = np.flatnonzero(np.abs(s) > 0.4)[:n]
    x, s = x[keep], s[keep]
    return x, (s > 0).astype(float)


def test_fit_glm_separable_fixture(tmp_path):
    x, y = _separable(80, 0)
    assert y.mean() == pytest.approx(0.5, abs=0.15)
    f = write_table(tmp_path / "sep.csv", ["y", "a", "b"], [y, x[:, 0], x[:, 1]])
    out = tmp_path / "glm"
    assert run(["fit-glm", "--data", str(f), "--response", "y", "--rho-grid", "30",
                "--cv-folds", "5", "--out", str(out)]) == 0
    assert tree(out) == ["coefficients.csv", "label_probabilities.csv", "manifest.json",
                         "path.csv", "summary.json"]
    coef = {int(c["index"]): float(c["beta"]) for c in read_csv(out / "coefficients.csv")}
    assert coef[1] > 0 and coef[2] < 0
    xt, yt = _separable(500, 1)
    pred = (xt @ np.array([coef[1], coef[2]]) > 0).astype(float)
    assert np.mean(pred != yt) == 0.0
    probs = read_csv(out / "label_probabilities.csv")
    assert len(probs) == 80
    nu = np.array([float(r["nu"]) for r in probs])
    assert np.all((nu > 0) & (nu < 1))
    assert [int(r["label"]) for r in probs] == (nu >= 0.5).astype(int).tolist()
    assert json.loads((out / "summary.json").read_text())["training_error"] == 0.0


@pytest.mark.slow
def test_toy_fixture_bf_support(tmp_path):
    d, _ = toy_data(0)
    header = ["y"] + [f"x{j}" for j in range(1, 1001)]
    f = write_table(tmp_path / "toy.csv", header, [d.y] + [d.x[:, j] for j in range(1000)])
    t = 0.2 * 1000 * math.log(1000) / 10 + 1
    out = tmp_path / "toy"
    assert run(["fit", "--data", str(f), "--response", "y", "--tau1", repr(t),
                "--tau2", repr(t - 1), "--select", "bf", "--out", str(out)]) == 0
    coef = read_csv(out / "coefficients.csv")
    support = [int(c["index"]) for c in coef if float(c["beta"]) != 0]
    assert support == [j + 1 for j in TOY_INDEX]
