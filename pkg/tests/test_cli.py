import csv
import json
import math
import subprocess
import sys

import pytest

from shrinklab.cli import RunConfig, main, resolve_config
from shrinklab.hypersurface import read_profile


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def r0_of(text):
    return float(text.splitlines()[0].split("=")[1])


def read_margins(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    return json.loads(lines[0][len("# config: "):]), list(csv.DictReader(lines[1:]))


# ---------------------------------------------------------------------------
# check-fn


def test_check_fn_quotient(tmp_path, capsys):
    code, out, _ = run(["check-fn", "--fn", "quotient:2,1", "--n", "3", "--samples", "10000", "--seed", "42",
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    cfg, rows = read_margins(tmp_path / "margins.csv")
    assert cfg["fn"] == "quotient:2,1" and cfg["seed"] == 42
    row = next(r for r in rows if r["check"] == "condition2")
    assert row["status"] == "violated (expected)"
    assert float(row["min_margin"]) < -1e-6
    assert "kappa" in json.loads(row["witness"])


def test_check_fn_failure(tmp_path, capsys):
    code, _, err = run(["check-fn", "--fn", "power_mean:-2", "--n", "2", "--out", str(tmp_path)], capsys)
    assert code == 1
    obj = json.loads(err.strip().splitlines()[-1])
    assert obj["exit"] == 1
    failed = {d["check"]: d["witness"] for d in obj["detail"]["failed"]}
    assert failed["inverse_concavity"]["margin"] < 0
    _, rows = read_margins(tmp_path / "margins.csv")
    assert next(r for r in rows if r["check"] == "inverse_concavity")["status"] == "fail"


def test_check_fn_ek_root(tmp_path, capsys):
    code, _, _ = run(["check-fn", "--fn", "ek_root:2", "--n", "3", "--out", str(tmp_path)], capsys)
    assert code == 0
    _, rows = read_margins(tmp_path / "margins.csv")
    assert all(float(r["min_margin"]) >= -1e-10 for r in rows)


def test_check_fn_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(["check-fn", "--fn", "quotient:3,1", "--samples", "300", "--out", str(tmp_path)], capsys)[0] == 0
        (tmp_path / "margins.csv").rename(tmp_path / f"{d}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["check-fn", "--fn", "nonsense:1"],
    ["solve", "--alpha", "0.5"],
    ["solve", "--ambient", "hemisphere"],
    ["solve", "--mode", "q7"],
    ["flow", "--offset", "1"],
    ["solve", "--bogus"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    code, _, err = run(argv + ["--out", str(tmp_path)], capsys)
    assert code == 2
    obj = json.loads(err.strip().splitlines()[-1])
    assert obj["exit"] == 2 and "message" in obj


# ---------------------------------------------------------------------------
# slice, solve, quantities


def test_slice(tmp_path, capsys):
    code, out, _ = run(["slice", "--fn", "ek_root:2", "--alpha", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    first = out.splitlines()[0]
    assert first.startswith("r0 = ")
    assert round(float(first.split("=")[1]), 6) == 0.904557
    assert float(first.split("=")[1]) == pytest.approx(math.acos((math.sqrt(5) - 1) / 2), abs=1e-12)
    assert "substitution residual" in out
    data = json.loads((tmp_path / "slice.json").read_text())
    assert data["result"]["substitution_residual"] <= 1e-12
    assert data["config"]["command"] == "slice"


def test_solve_then_quantities(tmp_path, capsys):
    code, out, _ = run(["solve", "--fn", "quotient:2,1", "--alpha", "2", "--n", "3", "--perturb", "0.2",
                        "--mode", "p2", "--seed", "7", "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = (tmp_path / "solve.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["config"]["fn"] == "quotient:2,1"
    last = json.loads(lines[-1])
    assert last["anisotropy"] <= 1e-8
    assert {"iter", "residual_sup", "anisotropy", "scale"} <= set(last)
    body = read_profile(tmp_path / "final.profile")
    assert max(abs(body.values - 1.0)) <= 1e-8
    for svg in ("profile.svg", "residual.svg"):
        text = (tmp_path / svg).read_text()
        assert text.startswith("<svg") and "config:" in text and "generated:" not in text

    qdir = tmp_path / "q"
    code, out, _ = run(["quantities", "--body", str(tmp_path / "final.profile"), "--fn", "ek_root:2",
                        "--alpha", "2", "--out", str(qdir)], capsys)
    assert code == 0
    text = (qdir / "quantities.csv").read_text().splitlines()
    assert text[0].startswith("# config: ")
    assert "agreement: yes" in text[-1]
    assert (qdir / "quantities.svg").exists()


def test_quantities_default_bodies(tmp_path, capsys):
    for amb in ("euclid", "hemisphere"):
        code, out, _ = run(["quantities", "--ambient", amb, "--grid", "16", "--out", str(tmp_path / amb)], capsys)
        assert code == 0 and "agreement: True" in out


def test_solve_non_convergence_exit_1(tmp_path, capsys):
    code, _, err = run(["solve", "--perturb", "0.3", "--out", str(tmp_path), "--max-iter", "1"], capsys)
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["error"] == "ConvergenceError"


def test_solve_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(["solve", "--mode", "random", "--seed", "11", "--perturb", "0.3", "--grid", "64",
                    "--out", str(tmp_path)], capsys)[0] == 0
        (tmp_path / "solve.jsonl").rename(tmp_path / f"{d}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_flow_short(tmp_path, capsys):
    code, out, _ = run(["flow", "--fn", "power_mean:1", "--alpha", "1", "--grid", "16", "--roundness", "1.1",
                        "--record-every", "20", "--out", str(tmp_path)], capsys)
    assert code == 0
    recs = [json.loads(x) for x in (tmp_path / "flow.jsonl").read_text().splitlines()[1:]]
    assert recs[-1]["roundness"] <= 1.1
    assert (tmp_path / "roundness.svg").exists()


def test_flow_budget_exhausted_exit_1(tmp_path, capsys):
    code, _, err = run(["flow", "--grid", "16", "--max-steps", "5", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["error"] == "CheckFailure"


def test_svg_timestamp_flag(tmp_path, capsys):
    assert run(["solve", "--grid", "32", "--svg-timestamp", "--out", str(tmp_path)], capsys)[0] == 0
    assert "generated:" in (tmp_path / "profile.svg").read_text()


# ---------------------------------------------------------------------------
# config resolution and sweeps


def test_precedence(tmp_path, monkeypatch):
    monkeypatch.delenv("SHRINK_OUT", raising=False)
    cfg = resolve_config({"command": "solve", "alpha": 3.0}, {"alpha": 1.5, "n": 4})
    assert (cfg.alpha, cfg.n, cfg.fn, cfg.out) == (3.0, 4, RunConfig().fn, "out")
    monkeypatch.setenv("SHRINK_OUT", str(tmp_path / "env"))
    assert resolve_config({"command": "solve"}).out == str(tmp_path / "env")
    assert resolve_config({"command": "solve", "out": "x"}).out == "x"


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"fn": "ek_root:2", "alpha": 1, "n": 3}))
    code, out, _ = run(["slice", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 0 and round(r0_of(out), 6) == 0.904557
    code, out, _ = run(["slice", "--config", str(cfg), "--alpha", "2", "--out", str(tmp_path)], capsys)
    assert round(r0_of(out), 6) == 0.855468
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run(["slice", "--config", str(cfg)], capsys)[0] == 2
    cfg.write_text("{not json")
    assert run(["slice", "--config", str(cfg)], capsys)[0] == 2


def test_sweep(tmp_path, capsys):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"grid": 32, "perturb": 0.25, "mode": "p2+p3",
                               "vary": {"fn": ["quotient:2,1", "power_mean:-1"], "alpha": [1.5, 3]}}))
    code, out, _ = run(["sweep", "--config", str(cfg), "--jobs", "2", "--out", str(tmp_path / "s")], capsys)
    assert code == 0
    lines = (tmp_path / "s" / "sweep.jsonl").read_text().splitlines()
    results = [json.loads(x) for x in lines[1:]]
    assert len(results) == 4 and all(r["exit"] == 0 for r in results)
    assert all(r["summary"]["deviation_from_sphere"] <= 1e-8 for r in results)
    for i in range(4):
        assert (tmp_path / "s" / f"job-{i:03d}" / "final.profile").exists()


def test_sweep_failure_propagates(tmp_path, capsys):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"runs": [{"command": "slice"}, {"command": "check-fn", "fn": "power_mean:-2",
                                                                "n": 2, "samples": 500}]}))
    code, _, err = run(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")], capsys)
    assert code == 1
    assert "job-001" in err


def test_sweep_requires_runs(tmp_path, capsys):
    assert run(["sweep", "--out", str(tmp_path)], capsys)[0] == 2


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shrinklab.cli", "slice", "--fn", "ek_root:2", "--alpha", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert round(r0_of(proc.stdout), 6) == 0.904557
