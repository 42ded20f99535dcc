"""Experiment orchestration and on-disk artifacts.

Exit statuses: 0 completed or pass, 1 configuration error, 2 probe failure,
3 unexpected divergence (including solver failure and exhausted step budget).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .config import RunConfig, config_from_dict
from .discretization import Grid
from .errors import ConfigError, DegeneracyError, EvaluationError, SolverError, StepBudgetError
from .galerkin import galerkin_run
from .problem import InitialCondition
from .stepping import initial_values, run_to_time
from .trajectory import TrajectoryRecord, norm_label

EXIT_OK, EXIT_CONFIG, EXIT_PROBE_FAIL, EXIT_BLOWUP = 0, 1, 2, 3
TRAJECTORY_HEADER = ("t", "norm_k0p2", "norm_2", "norm_inf", "w1p", "seminorm_int_f")
OUTPUT_ENV = "THERMISTOR_LAB_OUT"
DEFAULT_OUTPUT = "thermistor-output"


def fmt(x) -> str:
    if x is None:
        return ""
    return "%.17g" % x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, float) else norm_label(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def resolve_output_dir(config: RunConfig | None, override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    if config is not None and config.output["directory"]:
        return Path(config.output["directory"])
    return Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


@dataclass
class RunResult:
    exit_status: int
    summary: dict
    out_dir: Path


# -- artifacts -------------------------------------------------------------------

def trajectory_columns(record: TrajectoryRecord, extra_norms=()) -> tuple[list[str], list[list[float]]]:
    key = record.k0 + 2.0
    extras = [float(k) for k in extra_norms if float(k) not in (key, 2.0, math.inf)]
    header = list(TRAJECTORY_HEADER) + [f"norm_{norm_label(k)}" for k in extras]
    columns = [record.times, record.norm(key), record.norm(2), record.norm(math.inf), record.w1p,
               record.integral_f] + [record.norm(k) for k in extras]
    return header, [list(map(float, col)) for col in columns]


def write_trajectory(record: TrajectoryRecord, out: Path, formats, extra_norms=()) -> None:
    header, columns = trajectory_columns(record, extra_norms)
    if "csv" in formats:
        _write_csv(out / "trajectory.csv", header, ([fmt(v) for v in row] for row in zip(*columns)))
    if "dat" in formats:
        plot = out / "plot"
        plot.mkdir(exist_ok=True)
        for name, col in zip(header[1:], columns[1:]):
            with open(plot / f"{name}.dat", "w") as fh:
                fh.writelines(f"{fmt(t)} {fmt(v)}\n" for t, v in zip(columns[0], col))


def write_snapshots(record: TrajectoryRecord, out: Path) -> None:
    if not record.snapshots:
        return
    folder = out / "snapshots"
    folder.mkdir(exist_ok=True)
    coords = record.coordinates
    names = ["x", "y"][: len(coords)]
    flat = [np.asarray(c).reshape(-1) for c in coords]
    for idx, values in sorted(record.snapshots.items()):
        rows = ([fmt(c[j]) for c in flat] + [fmt(v)] for j, v in enumerate(np.asarray(values).reshape(-1)))
        _write_csv(folder / f"snapshot_{idx:04d}.csv", names + ["u"], rows)


def _record_summary(record: TrajectoryRecord) -> dict:
    out = {"status": record.status, "steps": record.steps,
           "final_time": record.times[-1] if record.times else None,
           "blowup_time": record.blowup_time, "blowup_step": record.blowup_step}
    if record.times:
        out["final"] = {f"norm_{norm_label(k)}": v[-1] for k, v in record.norms.items()}
        out["final"]["w1p"] = record.w1p[-1]
        out["max_norm_inf"] = float(np.max(record.norm(math.inf)))
    return out


# -- experiments -----------------------------------------------------------------

def _sample_times(config: RunConfig, horizon: float) -> np.ndarray:
    given = config.output["sample_times"]
    if given is not None:
        return np.asarray(given, dtype=float)
    return np.unique(np.linspace(0.0, horizon, config.output["samples"]))


def _snapshot_indices(config: RunConfig, count: int, force: bool = False):
    every = config.output["snapshot_every"]
    if force:
        return True
    return set(range(0, count, every)) if every else False


def _simulate(config: RunConfig, snapshots_forced: bool = False) -> TrajectoryRecord:
    spec = config.problem_spec()
    cfg = config.stepper_config()
    times = _sample_times(config, spec.T)
    snaps = _snapshot_indices(config, len(times), snapshots_forced)
    extra = config.output["extra_norms"]
    if cfg.scheme == "rk4-spectral":
        n = config.discretization["n"]
        grid = Grid.uniform(spec.domain, n if isinstance(n, int) else tuple(n)) if spec.domain.dimension == 1 else None
        return galerkin_run(spec, config.discretization["modes"], cfg, times, snapshots=snaps,
                            snapshot_grid=grid, extra_norms=extra)
    return run_to_time(spec, config.grid(), cfg, times, snapshots=snaps, extra_norms=extra)


def _require_fd(config: RunConfig, kind: str) -> None:
    if config.stepper["scheme"] == "rk4-spectral":
        raise ConfigError(f"the {kind} experiment needs a finite-difference scheme", "stepper.scheme")


def _exp_evolve(config: RunConfig, out: Path) -> tuple[int, dict]:
    record = _simulate(config)
    write_trajectory(record, out, config.output["formats"], config.output["extra_norms"])
    write_snapshots(record, out)
    summary = _record_summary(record)
    if record.completed:
        tau = config.experiment["tau"]
        if record.times[-1] >= tau:
            summary["boundedness"] = analysis.boundedness_probe(record, tau).to_dict()
        return EXIT_OK, summary
    return (EXIT_OK if config.experiment["expect_blowup"] else EXIT_BLOWUP), summary


def _probe_exit(report: analysis.ProbeReport) -> int:
    return EXIT_OK if report.passed else EXIT_PROBE_FAIL


def _probe_summary(report: analysis.ProbeReport) -> dict:
    return {"pass": report.passed, **report.measured, "report": report.to_dict()}


def _exp_ghidaglia(config: RunConfig, out: Path) -> tuple[int, dict]:
    e = config.experiment
    report = analysis.ghidaglia_suite(e["draws"], e["seed"], e["t_end"], e["rtol"])
    if "csv" in config.output["formats"]:
        cols = ("gamma", "nu", "delta", "y0", "t_end", "worst_margin", "pass")
        _write_csv(out / "ghidaglia.csv", cols,
                   ([fmt(row[c]) if c != "pass" else str(row[c]).lower() for c in cols] for row in report.evidence))
    return _probe_exit(report), _probe_summary(report)


def _exp_threshold(config: RunConfig, out: Path, jobs: int) -> tuple[int, dict]:
    _require_fd(config, "threshold")
    spec = config.problem_spec()
    times = _sample_times(config, spec.T)
    e = config.experiment
    report = analysis.threshold_probe(spec, config.grid(), config.stepper_config(), config.problem["c7"],
                                      e["amplitudes"], samples=len(times), refine=e["refine"], jobs=jobs)
    if "csv" in config.output["formats"]:
        cols = ("amplitude", "ratio_to_d0", "status", "blowup_time", "sup_inf", "sup_k0p2")
        _write_csv(out / "threshold.csv", cols,
                   ([row.get(c) if c == "status" else fmt(row.get(c)) for c in cols] for row in report.evidence))
    return _probe_exit(report), _probe_summary(report)


def _exp_contraction(config: RunConfig, out: Path) -> tuple[int, dict]:
    _require_fd(config, "contraction")
    spec, grid, e = config.problem_spec(), config.grid(), config.experiment
    ua = initial_values(spec, grid)
    ub = ua.copy().reshape(-1)
    node = grid.size // 2 if e["node"] is None else e["node"]
    if node >= grid.size:
        raise ConfigError(f"node index {node} outside the grid of {grid.size} nodes", "experiment.node")
    ub[node] += e["perturbation"]
    report = analysis.contraction_probe(spec, ua, ub.reshape(grid.shape), e["t_end"], grid,
                                        config.stepper_config(), samples=e["samples"],
                                        check_dt_halving=e["check_dt_halving"])
    if "csv" in config.output["formats"] and report.evidence:
        _write_csv(out / "contraction.csv", ("t", "w_norm_2", "envelope"),
                   ([fmt(r["t"]), fmt(r["w"]), fmt(r["envelope"])] for r in report.evidence))
    return _probe_exit(report), _probe_summary(report)


def absorbing_family(config: RunConfig) -> list[InitialCondition]:
    e = config.experiment
    amp = config.problem["u0"]["amplitude"]
    return [InitialCondition("random", amp, {"seed": e["seed"] + i, "modes": 6}) for i in range(e["members"])]


def _exp_absorbing(config: RunConfig, out: Path, jobs: int) -> tuple[int, dict]:
    _require_fd(config, "absorbing")
    e = config.experiment
    report = analysis.absorbing_probe(config.problem_spec(), absorbing_family(config), e["tau"], e["t_end"],
                                      config.grid(), config.stepper_config(), samples=e["samples"],
                                      rtol=e["rtol"], jobs=jobs)
    if "csv" in config.output["formats"] and report.evidence:
        cols = ("member", "w1p_initial", "sup_tau_T", "sup_tau_2T", "w1p_final")
        _write_csv(out / "absorbing.csv", cols, ([fmt(r[c]) for c in cols] for r in report.evidence))
    return _probe_exit(report), _probe_summary(report)


def _exp_weak_residual(config: RunConfig, out: Path) -> tuple[int, dict]:
    _require_fd(config, "weak-residual")
    record = _simulate(config, snapshots_forced=True)
    write_trajectory(record, out, config.output["formats"], config.output["extra_norms"])
    summary = _record_summary(record)
    if not record.completed:
        return EXIT_BLOWUP, summary
    spec = config.problem_spec()
    tests = analysis.default_test_functions(spec.domain.extents, record.times[0], record.times[-1],
                                            config.experiment["tests"])
    residual = analysis.weak_residual(record, spec, tests)
    tol = config.experiment["tolerance"]
    passed = tol is None or residual <= tol
    summary.update({"pass": passed, "residual": residual, "tests": len(tests), "tolerance": tol})
    return (EXIT_OK if passed else EXIT_PROBE_FAIL), summary


def _dispatch(config: RunConfig, out: Path, jobs: int) -> tuple[int, dict]:
    kind = config.experiment["kind"]
    if kind == "evolve":
        return _exp_evolve(config, out)
    if kind == "ghidaglia":
        return _exp_ghidaglia(config, out)
    if kind == "threshold":
        return _exp_threshold(config, out, jobs)
    if kind == "contraction":
        return _exp_contraction(config, out)
    if kind == "absorbing":
        return _exp_absorbing(config, out, jobs)
    if kind == "weak-residual":
        return _exp_weak_residual(config, out)
    raise ConfigError(f"experiment {kind!r} is not runnable on its own", "experiment.kind")


def _error_summary(exc: BaseException) -> dict:
    return {"type": type(exc).__name__, "message": str(exc), "field": getattr(exc, "field", None)}


def write_summary(out: Path, summary: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
        fh.write("\n")


def run(config: RunConfig, out_dir: str | os.PathLike | None = None, jobs: int = 1) -> RunResult:
    """Execute the configured experiment and write its artifacts."""
    if config.experiment["kind"] == "sweep":
        return sweep(config, out_dir, jobs)
    out = resolve_output_dir(config, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = config.experiment["kind"]
    try:
        status, body = _dispatch(config, out, jobs)
        error = None
    except (ConfigError, DegeneracyError, EvaluationError) as exc:
        status, body, error = EXIT_CONFIG, {}, _error_summary(exc)
    except (SolverError, StepBudgetError) as exc:
        record = getattr(exc, "record", None)
        body = _record_summary(record) if record is not None else {}
        if record is not None:
            write_trajectory(record, out, config.output["formats"], config.output["extra_norms"])
        status, error = EXIT_BLOWUP, _error_summary(exc)
    summary = {"experiment": kind, "exit_status": status, **body, "error": error, "config": config.to_dict()}
    summary.setdefault("status", "completed" if status == EXIT_OK else "failed")
    write_summary(out, summary)
    return RunResult(status, summary, out)


# -- sweeps ----------------------------------------------------------------------

def _sweep_point(args) -> tuple[int, dict]:
    doc, out = args
    result = run(config_from_dict(doc), out)
    return result.exit_status, result.summary


def sweep_points(config: RunConfig) -> list[tuple[tuple, RunConfig]]:
    """Validated configuration for every point of the axis cross product, in axis order."""
    axes = config.sweep["axes"]
    base = config.to_dict()
    base["sweep"] = {"axes": []}
    if base["experiment"]["kind"] == "sweep":
        base["experiment"] = {"kind": "evolve"}
    base_cfg = config_from_dict(base)
    points = []
    for combo in itertools.product(*(axis["values"] for axis in axes)):
        point = base_cfg
        for axis, value in zip(axes, combo):
            point = point.with_value(axis["field"], value)
        points.append((combo, point))
    return points


def sweep(config: RunConfig, out_dir: str | os.PathLike | None = None, jobs: int = 1) -> RunResult:
    """Run every sweep point (concurrently with ``jobs`` > 1) and write ``sweep.csv``.

    All points are validated before any of them runs. Without axes this is a
    single run.
    """
    out = resolve_output_dir(config, out_dir)
    axes = config.sweep["axes"]
    if not axes:
        point = config_from_dict({**config.to_dict(), "experiment": (
            {"kind": "evolve"} if config.experiment["kind"] == "sweep" else config.experiment)})
        return run(point, out, jobs)
    try:
        points = sweep_points(config)
    except ConfigError as exc:
        summary = {"experiment": "sweep", "exit_status": EXIT_CONFIG, "status": "failed",
                   "error": _error_summary(exc), "config": config.to_dict()}
        write_summary(out, summary)
        return RunResult(EXIT_CONFIG, summary, out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(point.to_dict(), str(out / "points" / f"{i:04d}")) for i, (_, point) in enumerate(points)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]

    fields = [axis["field"] for axis in axes]
    header = fields + ["status", "exit_status", "final_norm_inf", "max_norm_inf", "final_w1p", "blowup_time"]
    rows = []
    for (combo, _), (code, summ) in zip(points, results):
        final = summ.get("final", {})
        rows.append([fmt(v) for v in combo] + [summ.get("status"), str(code), fmt(final.get("norm_inf")),
                                               fmt(summ.get("max_norm_inf")), fmt(final.get("w1p")),
                                               fmt(summ.get("blowup_time"))])
    _write_csv(out / "sweep.csv", header, rows)
    codes = [code for code, _ in results]
    status = next((c for c in (EXIT_CONFIG, EXIT_BLOWUP, EXIT_PROBE_FAIL) if c in codes), EXIT_OK)
    summary = {"experiment": "sweep", "exit_status": status, "status": "completed" if status == EXIT_OK else "failed",
               "points": len(points), "point_status": [s.get("status") for _, s in results],
               "error": None, "config": config.to_dict()}
    write_summary(out, summary)
    return RunResult(status, summary, out)
