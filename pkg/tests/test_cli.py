import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from insider_impact import cli
from insider_impact import model_core

import oracles

UNIT_FLAGS = ["--alpha-i", "1", "--alpha-u", "1", "--p-i", "1", "--p-n", "1", "--pi", "0"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_solve_pi(capsys):
    code, out, _ = run(capsys, "solve", *UNIT_FLAGS, "--kind", "pi")
    assert code == 0
    doc = json.loads(out)
    (block,) = doc["equilibria"]
    assert block["y_hat"] == pytest.approx(oracles.bisect_root(1, 0.5, 1), abs=1e-11)
    assert block["p_pub"] == pytest.approx(0.0685, abs=1e-4)
    assert abs(block["residual"]) < 1e-10
    assert doc["ce"]["diff_I"] > 0


def test_solve_all(capsys):
    code, out, _ = run(capsys, "solve", *UNIT_FLAGS, "--kind", "all")
    assert code == 0
    kinds = [b["kind"] for b in json.loads(out)["equilibria"]]
    assert kinds == ["PI", "PT", "NS_PI", "NS_PT"]


def test_solve_csv(capsys):
    code, out, _ = run(capsys, "solve", *UNIT_FLAGS, "--kind", "pt", "--format", "csv")
    assert code == 0
    table = dict(r for r in rows(out)[1:])
    assert float(table["PT.p_pub"]) == 0.5


def test_solve_zero_precision_points_to_no_signal(capsys):
    code, _, err = run(capsys, "solve", "--alpha-i", "1", "--alpha-u", "1", "--p-i", "0", "--p-n", "1", "--kind", "pi")
    assert code == 2
    assert "--kind ns-pi" in err
    code, out, _ = run(capsys, "solve", "--alpha-i", "1", "--alpha-u", "1", "--p-i", "0", "--p-n", "1", "--kind", "ns-pi")
    assert code == 0 and "ce" not in json.loads(out)


def test_kappa_lambda_input(capsys):
    code, out, _ = run(capsys, "solve", "--kappa", "1", "--lambda", "0.5", "--p-i", "1", "--kind", "pi")
    assert code == 0
    assert json.loads(out)["equilibria"][0]["y_hat"] == pytest.approx(2.6890953236, abs=1e-9)


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"alpha_I": 1, "alpha_U": 1, "p_I": 1, "p_N": 1, "Pi": 0}))
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--kind", "pi")
    assert code == 0
    assert json.loads(out)["equilibria"][0]["y_hat"] == pytest.approx(2.6890953236, abs=1e-9)


def test_config_asset_model(tmp_path, capsys):
    cfg = tmp_path / "m.json"
    doc = {"d": 2, "mu_X": [0, 0], "prec_X": [[1, 0.2], [0.2, 2]], "p_I": 1, "p_N": 1, "alpha_I": 1, "alpha_U": 1, "Pi": [0, 1]}
    cfg.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--kind", "pi")
    assert code == 0
    block = json.loads(out)["equilibria"][0]
    assert np.array(block["price_coef"]).shape == (2, 2)
    assert block["clearing_residual"] < 1e-10


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["solve", "--alpha-i", "-1", "--alpha-u", "1", "--p-i", "1", "--p-n", "1"], "alpha_I"),
        (["solve", "--alpha-i", "1", "--alpha-u", "1", "--p-i", "1"], "--p-n"),
        (["solve", "--kappa", "1", "--lambda", "1.5"], "lambda"),
        (["solve", "--kappa", "1"], "--lambda"),
        (["solve", *UNIT_FLAGS, "--kind", "kyle"], "kind"),
        (["sweep", *UNIT_FLAGS, "--count", "1"], "count"),
        (["sweep", *UNIT_FLAGS, "--p-i-min", "2", "--p-i-max", "1"], "grid"),
        (["region"], "--alpha-i"),
        (["solve", "--config", "/nonexistent/p.json"], "config"),
    ],
)
def test_validation_exit_2(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert needle in err


def test_config_and_inline_conflict(tmp_path, capsys):
    cfg = tmp_path / "p.json"
    cfg.write_text("{not json")
    code, _, err = run(capsys, "solve", "--config", str(cfg))
    assert code == 2 and "invalid JSON" in err
    cfg.write_text(json.dumps({"alpha_I": 1, "alpha_U": 1, "p_I": 1, "p_N": 1}))
    code, _, err = run(capsys, "solve", "--config", str(cfg), "--alpha-i", "2")
    assert code == 2 and "not both" in err


def test_argparse_errors_exit_2(capsys):
    assert run(capsys, "solve", "--bogus")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "figure", "4")[0] == 2
    assert run(capsys, "mc", *UNIT_FLAGS, "--seed", "-1")[0] == 2


def test_solver_failure_exit_3(capsys, monkeypatch):
    def boom(*a, **k):
        raise model_core.ConvergenceError("no convergence")

    monkeypatch.setattr("insider_impact.equilibria.solve_cubic", boom)
    code, _, err = run(capsys, "solve", *UNIT_FLAGS, "--kind", "pi")
    assert code == 3 and "no convergence" in err


def test_overflow_exit_3(capsys):
    code, _, err = run(capsys, "solve", "--alpha-i", "1", "--alpha-u", "1", "--p-i", "1e300", "--p-n", "1", "--kind", "pi")
    assert code == 3 and "solver failure" in err


def test_mc_ok(capsys):
    code, out, _ = run(capsys, "mc", *UNIT_FLAGS, "--n-paths", "100000", "--seed", "42")
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines()]
    assert all(r["passed"] for r in lines)
    assert {"clearing_PI", "optimality_PT"} <= {r["name"] for r in lines}


def test_mc_small_sample(capsys):
    code, out, _ = run(capsys, "mc", *UNIT_FLAGS, "--n-paths", "10")
    lines = [json.loads(line) for line in out.splitlines()]
    assert code in (0, 4)
    assert any(r.get("std_error", 0) > 1e-3 for r in lines)


def test_mc_corrupt_exit_4(capsys):
    code, out, err = run(capsys, "mc", *UNIT_FLAGS, "--n-paths", "20000", "--corrupt")
    assert code == 4
    assert "clearing_PI" in err
    assert out.strip()


def test_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--kappa", "1", "--lambda", "0.5", "--p-i-min", "0.01", "--p-i-max", "100", "--count", "50")
    assert code == 0
    table = rows(out)
    assert table[0] == ["p_I", "ce_I_pi", "ce_I_pt"]
    assert len(table) == 51
    assert np.all(np.diff([float(r[1]) for r in table[1:]]) > 0)
    assert "\r\n" in out


def test_region(capsys):
    code, out, _ = run(capsys, "region", "--alpha-i", "0.1")
    assert code == 0
    table = rows(out)
    assert table[0] == ["alpha_U", "p_I", "sign"]
    assert len(table) == 1601


def test_determinism(tmp_path, capsys):
    for argv in (["region", "--alpha-i", "0.1"], ["mc", *UNIT_FLAGS, "--n-paths", "50000"], ["figure", "2"]):
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main([*argv, "--out", str(a)]) == 0
        assert cli.main([*argv, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_env_override(capsys, monkeypatch):
    monkeypatch.setenv("INSIDER_IMPACT_COUNT", "7")
    code, out, _ = run(capsys, "sweep", *UNIT_FLAGS)
    assert code == 0 and len(rows(out)) == 8
    code, out, _ = run(capsys, "sweep", *UNIT_FLAGS, "--count", "3")
    assert len(rows(out)) == 4
    monkeypatch.setenv("INSIDER_IMPACT_COUNT", "many")
    assert run(capsys, "sweep", *UNIT_FLAGS)[0] == 2


def test_figure_1(capsys):
    code, out, _ = run(capsys, "figure", "1")
    assert code == 0
    table = rows(out)
    assert table[0] == ["preset", "kappa", "lambda", "shape", "p_I", "ce_I_pt"]
    shapes = {}
    for r in table[1:]:
        shapes.setdefault((r[0], r[3]), []).append(float(r[5]))
    assert {s for _, s in shapes} == {"decreasing", "interior_max"}
    for (_, shape), ce in shapes.items():
        step = np.diff(ce)
        if shape == "decreasing":
            assert np.all(step < 0)
        else:
            assert step[0] > 0 and step[-1] < 0


def test_figure_2(capsys):
    code, out, _ = run(capsys, "figure", "2")
    assert code == 0
    table = np.array([[float(v) for v in r] for r in rows(out)[1:]])
    assert table[0, 0] > 0 and table[-1, 0] == 10.0
    assert np.all(np.diff(table[:, 1]) > 0)
    pt = np.diff(table[:, 2])
    k = int(np.argmax(table[:, 2]))
    assert np.all(pt < 0) or (0 < k < len(table) - 1 and np.all(pt[:k] > 0) and np.all(pt[k:] < 0))


def test_figure_3(capsys):
    code, out, _ = run(capsys, "figure", "3")
    assert code == 0
    table = rows(out)[1:]
    assert len(table) == 3 * 1600
    for a_I, a_U, _, sign in table:
        if abs(float(a_I) - float(a_U)) < 1e-12:
            assert sign == "PI_better"
    pt = [(float(r[1]), float(r[2])) for r in table if r[0].startswith("0.05") and r[3] == "PT_better"]
    assert pt and min(a for a, _ in pt) > 1.0 and min(p for _, p in pt) < 2.0


def test_module_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "insider_impact", "solve", *UNIT_FLAGS, "--kind", "pt"],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["equilibria"][0]["p_pub"] == 0.5
