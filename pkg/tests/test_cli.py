import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from thermistor_lab.cli import main
from thermistor_lab.config import parse_config
from thermistor_lab.runner import TRAJECTORY_HEADER, run, sweep

BASE = {"problem": {"p": 2, "lambda": 1, "source": "constant", "domain": {"dim": 1, "extent": 1},
                    "u0": {"profile": "sine", "amplitude": 0.1}, "T": 0.2},
        "discretization": {"n": 24}}


def write(tmp_path, name="c.json", **extra):
    d = json.loads(json.dumps(BASE))
    for key, value in extra.items():
        d[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_evolve_artifacts(tmp_path):
    cfg = write(tmp_path, experiment="evolve", output={"snapshot_every": 5, "extra_norms": [4]})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "trajectory.csv")
    assert rows[0] == list(TRAJECTORY_HEADER) + ["norm_4"]
    assert len(rows) == 12 and rows[1][0] == "0"
    assert float(rows[-1][0]) == pytest.approx(0.2)
    snap = read_csv(tmp_path / "o" / "snapshots" / "snapshot_0005.csv")
    assert snap[0] == ["x", "u"] and len(snap) == 25
    dat = (tmp_path / "o" / "plot" / "norm_inf.dat").read_text().splitlines()
    assert len(dat) == 11 and len(dat[0].split()) == 2
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["status"] == "completed" and summary["exit_status"] == 0
    assert summary["config"] == parse_config(cfg.read_text()).to_dict()
    assert summary["boundedness"]["pass"] is True


def test_zero_horizon_gives_single_row(tmp_path):
    d = json.loads(json.dumps(BASE))
    d["problem"]["T"] = 0
    path = tmp_path / "c.json"
    path.write_text(json.dumps(d))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "trajectory.csv")
    assert len(rows) == 2 and rows[1][0] == "0"


def test_two_dimensional_snapshots(tmp_path):
    d = json.loads(json.dumps(BASE))
    d["problem"]["domain"] = {"dim": 2, "extent": [1, 2]}
    d["discretization"] = {"n": [4, 5]}
    d["output"] = {"snapshot_every": 10}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(d))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    snap = read_csv(tmp_path / "o" / "snapshots" / "snapshot_0000.csv")
    assert snap[0] == ["x", "y", "u"] and len(snap) == 21


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, problem={**BASE["problem"], "source": "power-growth", "p": 3},
                experiment="evolve", output={"snapshot_every": 3})
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    for rel in ("trajectory.csv", "snapshots/snapshot_0003.csv", "plot/w1p.dat", "summary.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_ghidaglia_summary(tmp_path):
    cfg = write(tmp_path, experiment={"kind": "ghidaglia", "draws": 20})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["pass"] is True and summary["draws"] == 20
    assert isinstance(summary["worst_margin"], float)
    assert len(read_csv(tmp_path / "o" / "ghidaglia.csv")) == 21


@pytest.mark.parametrize("experiment", [
    "threshold", "contraction", {"kind": "absorbing", "t_end": 1.5, "tau": 0.5}, {"kind": "weak-residual", "tolerance": 1.0}])
def test_probe_experiments_pass(tmp_path, experiment):
    cfg = write(tmp_path, experiment=experiment, stepper={"scheme": "imex", "dt": 0.005})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["pass"] is True


def test_probe_failure_exit_code(tmp_path):
    cfg = write(tmp_path, experiment={"kind": "weak-residual", "tolerance": 0.0},
                stepper={"scheme": "imex", "dt": 0.01})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_unexpected_blowup_exit_code(tmp_path):
    problem = {**BASE["problem"], "lambda": 100, "source": "power-growth", "u0": {"amplitude": 0.5}, "T": 1}
    cfg = write(tmp_path, problem=problem, stepper={"blowup_cap": 2.0})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["status"] == "blew-up" and summary["blowup_time"] > 0
    expected = write(tmp_path, "e.json", problem=problem, stepper={"blowup_cap": 2.0},
                     experiment={"kind": "evolve", "expect_blowup": True})
    assert main(["run", str(expected), "--out", str(tmp_path / "e")]) == 0


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"problem": {"p": 2, "lamda": 1}}')
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "did you mean 'lambda'" in capsys.readouterr().err
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["exit_status"] == 1 and summary["error"]["field"] == "problem.lamda"
    assert main(["validate", str(tmp_path / "missing.json")]) == 1


def test_galerkin_run_via_config_rejects_fd_only_probe(tmp_path):
    cfg = write(tmp_path, experiment="contraction", stepper={"scheme": "rk4-spectral", "dt": 1e-4})
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    spec_run = write(tmp_path, "s.json", experiment="evolve", stepper={"scheme": "rk4-spectral", "dt": 1e-4},
                     output={"snapshot_every": 10})
    assert main(["run", str(spec_run), "--out", str(tmp_path / "s")]) == 0
    assert len(read_csv(tmp_path / "s" / "snapshots" / "snapshot_0010.csv")) == 25


def test_validate_prints_effective_config(tmp_path, capsys):
    cfg = write(tmp_path)
    assert main(["validate", str(cfg)]) == 0
    printed = capsys.readouterr().out
    assert parse_config(printed) == parse_config(cfg.read_text())


def test_seed_flag(tmp_path):
    cfg = write(tmp_path, problem={**BASE["problem"], "u0": {"profile": "random", "amplitude": 0.5}})
    main(["run", str(cfg), "--out", str(tmp_path / "a"), "--seed", "3"])
    main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"])
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert s["config"]["problem"]["u0"]["params"]["seed"] == 3
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_output_directory_from_environment(tmp_path, monkeypatch):
    cfg = write(tmp_path)
    monkeypatch.setenv("THERMISTOR_LAB_OUT", str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()


def test_sweep_one_axis(tmp_path):
    cfg = write(tmp_path, sweep={"axes": [{"field": "problem.lambda", "values": [0.5, 1, 2]}]})
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert rows[0][:3] == ["problem.lambda", "status", "exit_status"]
    assert [r[0] for r in rows[1:]] == ["0.5", "1", "2"]
    assert all(r[1] == "completed" for r in rows[1:])


def test_sweep_is_independent_of_concurrency(tmp_path):
    axes = [{"field": "problem.u0.amplitude", "values": [0.1, 0.5]},
            {"field": "problem.lambda", "values": [1, 3]}]
    path = write(tmp_path, sweep={"axes": axes})
    cfg = parse_config(path.read_text())
    a = sweep(cfg, tmp_path / "serial", jobs=1)
    b = sweep(cfg, tmp_path / "pool", jobs=3)
    assert a.exit_status == b.exit_status == 0
    assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "pool" / "sweep.csv").read_bytes()
    for i in range(4):
        rel = f"points/{i:04d}/trajectory.csv"
        assert (tmp_path / "serial" / rel).read_bytes() == (tmp_path / "pool" / rel).read_bytes()
    rows = read_csv(tmp_path / "serial" / "sweep.csv")
    assert [(r[0], r[1]) for r in rows[1:]] == [("0.10000000000000001", "1"), ("0.10000000000000001", "3"),
                                                ("0.5", "1"), ("0.5", "3")]


def test_sweep_validates_every_point_first(tmp_path):
    cfg = write(tmp_path, sweep={"axes": [{"field": "problem.p", "values": [2, 1.5]}]})
    assert main(["sweep", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "points").exists()


def test_empty_sweep_is_a_single_run(tmp_path):
    cfg = write(tmp_path, experiment="sweep")
    result = run(parse_config(cfg.read_text()), tmp_path / "o")
    assert result.exit_status == 0
    assert (tmp_path / "o" / "trajectory.csv").exists()


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "thermistor_lab", "validate", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["problem"]["p"] == 2.0


@pytest.mark.parametrize("experiment", ["evolve", "ghidaglia", "weak-residual"])
def test_exit_status_is_always_in_contract(tmp_path, experiment):
    rng = np.random.default_rng(len(experiment))
    for i in range(3):
        problem = {**BASE["problem"], "lambda": float(rng.uniform(0, 50)), "source": "power-growth",
                   "u0": {"profile": "random", "amplitude": float(rng.uniform(0, 2)), "params": {"seed": i}}}
        cfg = write(tmp_path, f"c{i}.json", problem=problem, experiment=experiment,
                    stepper={"blowup_cap": float(rng.uniform(0.5, 5))})
        assert main(["run", str(cfg), "--out", str(tmp_path / f"o{i}")]) in {0, 1, 2, 3}
