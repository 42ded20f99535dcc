"""Strict JSON run configuration.

Every block is normalised into an explicit "effective" dictionary in which
all defaults are filled in. Serialising that dictionary and parsing it again
gives the same configuration back.
"""

from __future__ import annotations

import copy
import difflib
import json
import math
from dataclasses import dataclass
from typing import Any

from .discretization import Grid
from .errors import ConfigError
from .problem import (
    DomainSpec,
    InitialCondition,
    ProblemSpec,
    SourceFunction,
    Thresholds,
)
from .stepping import StepperConfig

EXPERIMENTS = ("evolve", "ghidaglia", "threshold", "contraction", "absorbing", "weak-residual", "sweep")
OUTPUT_FORMATS = ("csv", "dat")
SWEEP_FIELDS = ("problem.lambda", "problem.p", "problem.u0.amplitude", "problem.T",
                "discretization.n", "discretization.modes")

_SOURCE_PARAMS = {
    "constant": {"c": 1.0},
    "power-growth": {"a": 1.0, "q": 2.0, "c": 1.0},
    "exponential-truncated": {"a": 1.0, "b": 1.0, "cap": 5.0},
    "user-table": {},
}
_PROFILE_PARAMS = {
    "sine": {},
    "bump": {"sharpness": 8.0},
    "parabola": {},
    "zero": {},
    "random": {"seed": 0, "modes": 6},
}
_EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "evolve": {"tau": None, "expect_blowup": False},
    "ghidaglia": {"draws": 20, "seed": 0, "t_end": 10.0, "rtol": 1e-6},
    "threshold": {"amplitudes": None, "fractions_of_d0": [0.0, 0.25, 0.5, 0.75, 0.95, 1.5, 3.0, 10.0],
                  "refine": 0},
    "contraction": {"perturbation": 1e-6, "node": None, "t_end": None, "check_dt_halving": True,
                    "samples": 21},
    "absorbing": {"members": 5, "seed": 0, "tau": None, "t_end": None, "samples": 41, "rtol": 0.05},
    "weak-residual": {"tests": 10, "tolerance": None},
    "sweep": {},
}


class ConfigParseError(ConfigError):
    """The document is not well-formed JSON."""

    def __init__(self, message: str, line: int, column: int):
        self.line, self.column = line, column
        super().__init__(f"line {line}, column {column}: {message}", "document")


def _check_keys(block: Any, allowed, path: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError("expected an object", path)
    for key in block:
        if key not in allowed:
            near = difflib.get_close_matches(key, list(allowed), n=1, cutoff=0.6)
            hint = f"; did you mean {near[0]!r}?" if near else f"; allowed keys: {', '.join(allowed)}"
            raise ConfigError(f"unknown key {key!r}{hint}", f"{path}.{key}" if path else key)
    return block


def _num(value: Any, path: str, *, integer: bool = False, minimum: float | None = None,
         positive: bool = False) -> float | int:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"expected an integer, got {value!r}", path)
        value = int(value)
    elif not math.isfinite(value):
        raise ConfigError("must be finite", path)
    else:
        value = float(value)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", path)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum:g}, got {value!r}", path)
    return value


def _optional(value: Any, path: str, **kw):
    return None if value is None else _num(value, path, **kw)


def _numbers(value: Any, path: str, **kw) -> list:
    if not isinstance(value, list):
        raise ConfigError("expected a list of numbers", path)
    return [_num(v, f"{path}[{i}]", **kw) for i, v in enumerate(value)]


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {value!r}", path)
    return value


# -- problem -------------------------------------------------------------------

def _source(doc: Any) -> dict:
    path = "problem.source"
    if isinstance(doc, str):
        doc = {"kind": doc}
    block = _check_keys(doc, ("kind", "params", "sigma", "c1", "c2", "alpha"), path)
    kind = block.get("kind")
    if kind not in _SOURCE_PARAMS:
        near = difflib.get_close_matches(str(kind), list(_SOURCE_PARAMS), n=1)
        hint = f"; did you mean {near[0]!r}?" if near else ""
        raise ConfigError(f"unknown source {kind!r}{hint} (built-ins: {', '.join(_SOURCE_PARAMS)})", f"{path}.kind")
    envelope = {k: _num(block[k], f"{path}.{k}") for k in ("sigma", "c1", "c2", "alpha") if k in block}
    if kind == "user-table":
        params = _check_keys(block.get("params", {}), ("xi", "f"), f"{path}.params")
        missing = [k for k in ("sigma", "c1", "c2", "alpha") if k not in envelope]
        if missing or "xi" not in params or "f" not in params:
            raise ConfigError("user-table needs params.xi, params.f and sigma, c1, c2, alpha", path)
        src = SourceFunction.table(_numbers(params["xi"], f"{path}.params.xi"),
                                   _numbers(params["f"], f"{path}.params.f"), **envelope)
    else:
        defaults = _SOURCE_PARAMS[kind]
        params = _check_keys(block.get("params", {}), tuple(defaults), f"{path}.params")
        values = {k: _num(params.get(k, v), f"{path}.params.{k}") for k, v in defaults.items()}
        builder = {"constant": SourceFunction.constant, "power-growth": SourceFunction.power_growth,
                   "exponential-truncated": SourceFunction.exponential_truncated}[kind]
        src = builder(**values, **envelope)
    return src.to_dict()


def _domain(doc: Any) -> dict:
    block = _check_keys(doc, ("dim", "extent"), "problem.domain")
    dim = _num(block.get("dim", 1), "problem.domain.dim", integer=True)
    if dim not in (1, 2):
        raise ConfigError("dim must be 1 or 2", "problem.domain.dim")
    extent = block.get("extent", 1.0)
    extents = _numbers(extent, "problem.domain.extent", positive=True) if isinstance(extent, list) \
        else [_num(extent, "problem.domain.extent", positive=True)] * dim
    if len(extents) != dim:
        raise ConfigError(f"need {dim} extents", "problem.domain.extent")
    return {"dim": dim, "extent": extents}


def _u0(doc: Any) -> dict:
    path = "problem.u0"
    block = _check_keys(doc, ("profile", "amplitude", "params"), path)
    profile = block.get("profile", "sine")
    if profile not in _PROFILE_PARAMS:
        raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(_PROFILE_PARAMS)}", f"{path}.profile")
    defaults = _PROFILE_PARAMS[profile]
    params = _check_keys(block.get("params", {}), tuple(defaults), f"{path}.params")
    integer = {"seed", "modes"}
    values = {k: _num(params.get(k, v), f"{path}.params.{k}", integer=k in integer) for k, v in defaults.items()}
    if profile == "random" and values["modes"] < 1:
        raise ConfigError("modes must be positive", f"{path}.params.modes")
    return {"profile": profile, "amplitude": _num(block.get("amplitude", 1.0), f"{path}.amplitude"), "params": values}


def _problem(doc: Any) -> dict:
    block = _check_keys(doc, ("p", "lambda", "source", "domain", "u0", "T", "c7"), "problem")
    for key in ("p", "lambda"):
        if key not in block:
            raise ConfigError("required", f"problem.{key}")
    p = _num(block["p"], "problem.p")
    if p < 2:
        raise ConfigError(f"p must be >= 2, got {p:g}", "problem.p")
    out = {
        "p": p,
        "lambda": _num(block["lambda"], "problem.lambda", minimum=0.0),
        "source": _source(block.get("source", "constant")),
        "domain": _domain(block.get("domain", {})),
        "u0": _u0(block.get("u0", {})),
        "T": _num(block.get("T", 1.0), "problem.T", minimum=0.0),
        "c7": _num(block.get("c7", 1.0), "problem.c7", positive=True),
    }
    build_problem(out)  # cross-field checks (boundary values etc.)
    return out


def build_problem(block: dict) -> ProblemSpec:
    src = block["source"]
    source = SourceFunction(src["kind"], {k: tuple(v) if isinstance(v, list) else v for k, v in src["params"].items()},
                            sigma=src["sigma"], c1=src["c1"], c2=src["c2"], alpha=src["alpha"])
    domain = DomainSpec(block["domain"]["dim"], tuple(block["domain"]["extent"]))
    u0 = InitialCondition(block["u0"]["profile"], block["u0"]["amplitude"], dict(block["u0"]["params"]))
    return ProblemSpec(block["p"], block["lambda"], domain, source, u0, block["T"])


# -- other blocks ----------------------------------------------------------------

def _discretization(doc: Any, dim: int) -> dict:
    block = _check_keys(doc, ("n", "modes"), "discretization")
    n = block.get("n", 64)
    if isinstance(n, list):
        n = _numbers(n, "discretization.n", integer=True, minimum=1)
        if len(n) != dim:
            raise ConfigError(f"need {dim} point counts", "discretization.n")
    else:
        n = _num(n, "discretization.n", integer=True, minimum=1)
    return {"n": n, "modes": _num(block.get("modes", 32), "discretization.modes", integer=True, minimum=1)}


_STEPPER_KEYS = {"scheme": "scheme", "dt": "dt_initial", "safety": "dt_safety", "max_steps": "max_steps",
                 "newton_tol": "newton_tol", "newton_max_iter": "newton_max_iter", "epsilon": "epsilon",
                 "blowup_cap": "blowup_cap"}


def _stepper(doc: Any) -> dict:
    block = _check_keys(doc, tuple(_STEPPER_KEYS), "stepper")
    defaults = StepperConfig().to_dict()
    out = {}
    for key, attr in _STEPPER_KEYS.items():
        value = block.get(key, defaults[attr])
        if key == "scheme":
            if not isinstance(value, str):
                raise ConfigError("expected a string", "stepper.scheme")
        else:
            value = _num(value, f"stepper.{key}", integer=key in ("max_steps", "newton_max_iter"))
        out[key] = value
    build_stepper(out)
    return out


def build_stepper(block: dict) -> StepperConfig:
    return StepperConfig(**{attr: block[key] for key, attr in _STEPPER_KEYS.items()})


def _experiment(doc: Any, problem: dict) -> dict:
    if isinstance(doc, str):
        doc = {"kind": doc}
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError("expected an experiment name or an object with 'kind'", "experiment")
    kind = doc["kind"]
    if kind not in EXPERIMENTS:
        near = difflib.get_close_matches(str(kind), EXPERIMENTS, n=1)
        hint = f"; did you mean {near[0]!r}?" if near else ""
        raise ConfigError(f"unknown experiment {kind!r}{hint}", "experiment.kind")
    defaults = _EXPERIMENT_DEFAULTS[kind]
    block = _check_keys(doc, ("kind", *defaults), "experiment")
    path = "experiment"
    T = problem["T"]
    out: dict[str, Any] = {"kind": kind}
    if kind == "evolve":
        tau = block.get("tau")
        out["tau"] = _num(0.05 * T if tau is None else tau, f"{path}.tau", minimum=0.0)
        out["expect_blowup"] = _bool(block.get("expect_blowup", False), f"{path}.expect_blowup")
    elif kind == "ghidaglia":
        out["draws"] = _num(block.get("draws", 20), f"{path}.draws", integer=True, minimum=1)
        out["seed"] = _num(block.get("seed", 0), f"{path}.seed", integer=True, minimum=0)
        out["t_end"] = _num(block.get("t_end", 10.0), f"{path}.t_end", positive=True)
        out["rtol"] = _num(block.get("rtol", 1e-6), f"{path}.rtol", minimum=0.0)
    elif kind == "threshold":
        out["fractions_of_d0"] = _numbers(block.get("fractions_of_d0", defaults["fractions_of_d0"]),
                                          f"{path}.fractions_of_d0", minimum=0.0)
        amps = block.get("amplitudes")
        if amps is None:
            spec = build_problem(problem)
            d0 = Thresholds.for_problem(spec, problem["c7"]).d0
            amps = [f * d0 for f in out["fractions_of_d0"]]
        out["amplitudes"] = _numbers(amps, f"{path}.amplitudes", minimum=0.0)
        if not out["amplitudes"]:
            raise ConfigError("need at least one amplitude", f"{path}.amplitudes")
        out["refine"] = _num(block.get("refine", 0), f"{path}.refine", integer=True, minimum=0)
    elif kind == "contraction":
        out["perturbation"] = _num(block.get("perturbation", 1e-6), f"{path}.perturbation")
        out["node"] = _optional(block.get("node"), f"{path}.node", integer=True, minimum=0)
        t_end = block.get("t_end")
        out["t_end"] = _num(T if t_end is None else t_end, f"{path}.t_end", positive=True)
        out["check_dt_halving"] = _bool(block.get("check_dt_halving", True), f"{path}.check_dt_halving")
        out["samples"] = _num(block.get("samples", 21), f"{path}.samples", integer=True, minimum=2)
    elif kind == "absorbing":
        out["members"] = _num(block.get("members", 5), f"{path}.members", integer=True, minimum=5)
        out["seed"] = _num(block.get("seed", 0), f"{path}.seed", integer=True, minimum=0)
        t_end = _num(T if block.get("t_end") is None else block["t_end"], f"{path}.t_end", positive=True)
        tau = block.get("tau")
        out["tau"] = _num(0.05 * t_end if tau is None else tau, f"{path}.tau", positive=True)
        out["t_end"] = t_end
        if not out["tau"] < t_end:
            raise ConfigError("tau must be below t_end", f"{path}.tau")
        out["samples"] = _num(block.get("samples", 41), f"{path}.samples", integer=True, minimum=2)
        out["rtol"] = _num(block.get("rtol", 0.05), f"{path}.rtol", positive=True)
    elif kind == "weak-residual":
        out["tests"] = _num(block.get("tests", 10), f"{path}.tests", integer=True, minimum=1)
        out["tolerance"] = _optional(block.get("tolerance"), f"{path}.tolerance", minimum=0.0)
    return out


def _output(doc: Any) -> dict:
    block = _check_keys(doc, ("directory", "formats", "samples", "sample_times", "snapshot_every", "extra_norms"),
                        "output")
    directory = block.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ConfigError("expected a path string or null", "output.directory")
    formats = block.get("formats", list(OUTPUT_FORMATS))
    if not isinstance(formats, list) or any(f not in OUTPUT_FORMATS for f in formats):
        raise ConfigError(f"formats must be a list drawn from {OUTPUT_FORMATS}", "output.formats")
    times = block.get("sample_times")
    if times is not None:
        times = _numbers(times, "output.sample_times", minimum=0.0)
    extra = _numbers(block.get("extra_norms", []), "output.extra_norms", minimum=1.0)
    return {
        "directory": directory,
        "formats": [f for f in OUTPUT_FORMATS if f in formats],
        "samples": _num(block.get("samples", 11), "output.samples", integer=True, minimum=1),
        "sample_times": times,
        "snapshot_every": _num(block.get("snapshot_every", 0), "output.snapshot_every", integer=True, minimum=0),
        "extra_norms": extra,
    }


def _sweep(doc: Any) -> dict:
    block = _check_keys(doc, ("axes",), "sweep")
    axes = block.get("axes", [])
    if not isinstance(axes, list) or len(axes) > 2:
        raise ConfigError("expected a list of at most two axes", "sweep.axes")
    out = []
    for i, axis in enumerate(axes):
        path = f"sweep.axes[{i}]"
        axis = _check_keys(axis, ("field", "values"), path)
        name = axis.get("field")
        if name not in SWEEP_FIELDS:
            near = difflib.get_close_matches(str(name), SWEEP_FIELDS, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else f" (sweepable: {', '.join(SWEEP_FIELDS)})"
            raise ConfigError(f"cannot sweep {name!r}{hint}", f"{path}.field")
        values = _numbers(axis.get("values"), f"{path}.values")
        if not values:
            raise ConfigError("need at least one value", f"{path}.values")
        out.append({"field": name, "values": values})
    return {"axes": out}


# -- public API ------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    problem: dict
    discretization: dict
    stepper: dict
    experiment: dict
    output: dict
    sweep: dict

    def to_dict(self) -> dict:
        return copy.deepcopy({"problem": self.problem, "discretization": self.discretization,
                              "stepper": self.stepper, "experiment": self.experiment,
                              "output": self.output, "sweep": self.sweep})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def problem_spec(self) -> ProblemSpec:
        return build_problem(self.problem)

    def stepper_config(self) -> StepperConfig:
        return build_stepper(self.stepper)

    def grid(self) -> Grid:
        domain = self.problem_spec().domain
        n = self.discretization["n"]
        return Grid.uniform(domain, tuple(n) if isinstance(n, list) else n)

    def with_seed(self, seed: int) -> "RunConfig":
        """Override every random seed (random initial profile, randomised experiments)."""
        doc = self.to_dict()
        if doc["problem"]["u0"]["profile"] == "random":
            doc["problem"]["u0"]["params"]["seed"] = int(seed)
        if "seed" in doc["experiment"]:
            doc["experiment"]["seed"] = int(seed)
        return config_from_dict(doc)

    def with_value(self, dotted: str, value) -> "RunConfig":
        """Copy with one dotted field replaced, re-validated."""
        doc = self.to_dict()
        *parents, leaf = dotted.split(".")
        node = doc
        for key in parents:
            node = node[key]
        node[leaf] = value
        return config_from_dict(doc)


def config_from_dict(doc: Any) -> RunConfig:
    block = _check_keys(doc, ("problem", "discretization", "stepper", "experiment", "output", "sweep"), "")
    if "problem" not in block:
        raise ConfigError("required", "problem")
    problem = _problem(block["problem"])
    return RunConfig(
        problem=problem,
        discretization=_discretization(block.get("discretization", {}), problem["domain"]["dim"]),
        stepper=_stepper(block.get("stepper", {})),
        experiment=_experiment(block.get("experiment", "evolve"), problem),
        output=_output(block.get("output", {})),
        sweep=_sweep(block.get("sweep", {})),
    )


def parse_config(document: str) -> RunConfig:
    """Parse and validate a JSON document into an effective :class:`RunConfig`."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(exc.msg, exc.lineno, exc.colno) from None
    return config_from_dict(doc)
