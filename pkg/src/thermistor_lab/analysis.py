"""Empirical checks of the a priori bounds, thresholds and long-time claims.

Every probe returns a :class:`ProbeReport`. Measured constants are reported
quantities: the corresponding proof constants are existential and are never
compared against.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .discretization import Grid, GridField, face_gradients, flux, lp_norm
from .errors import ConfigError, ProbeError, StepBudgetError
from .problem import InitialCondition, ProblemSpec, compute_d0, compute_k0, nonlocal_source
from .stepping import StepperConfig, initial_values, run_to_time
from .trajectory import TrajectoryRecord

BUDGET_EXHAUSTED = "step-budget"


@dataclass
class ProbeReport:
    kind: str
    passed: bool
    measured: dict = field(default_factory=dict)
    evidence: list = field(default_factory=list)
    witness: dict | None = None

    def __post_init__(self):
        if not self.passed and self.witness is None:
            raise ValueError("a failed probe must carry a witness")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "pass": self.passed, "measured": self.measured,
                "evidence": self.evidence, "witness": self.witness}


# -- Ghidaglia comparison lemma ------------------------------------------------

@dataclass(frozen=True)
class GhidagliaParams:
    """Constants of y' + gamma*y**nu <= delta."""

    gamma: float
    nu: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive", "gamma")
        if not self.nu > 1:
            raise ConfigError("nu must exceed 1", "nu")
        if not self.delta >= 0:
            raise ConfigError("delta must be >= 0", "delta")


def ghidaglia_bound(t: float, params: GhidagliaParams) -> float:
    """(delta/gamma)^(1/nu) + (gamma (nu-1) t)^(-1/(nu-1)); +inf at t = 0."""
    if t < 0:
        raise ConfigError("t must be >= 0", "t")
    floor = (params.delta / params.gamma) ** (1.0 / params.nu)
    if t == 0:
        return math.inf
    base = params.gamma * (params.nu - 1.0) * t
    with np.errstate(over="ignore"):
        transient = float(np.float64(base) ** (-1.0 / (params.nu - 1.0)))
    return floor + transient


def verify_ghidaglia(params: GhidagliaParams, y0: float, t_end: float, samples: int = 100,
                     rtol: float = 1e-6) -> ProbeReport:
    """Compare the extremal solution of y' = -gamma y^nu + delta with the bound.

    Any y obeying the differential inequality lies below this solution, so
    it is the worst admissible case. The check runs at ``samples`` uniform
    and ``samples`` geometric times in (0, t_end].
    """
    if not y0 > 0:
        raise ConfigError("y0 must be positive", "y0")
    g, nu, d = params.gamma, params.nu, params.delta

    def rhs(t, y):
        return -g * np.maximum(y, 0.0) ** nu + d

    times = np.union1d(np.linspace(t_end / samples, t_end, samples),
                       np.geomspace(t_end * 1e-6, t_end, samples))
    sol = solve_ivp(rhs, (0.0, t_end), [y0], method="LSODA", t_eval=times,
                    rtol=1e-11, atol=1e-13 * max(1.0, y0))
    if not sol.success:
        raise ProbeError(f"ODE integration failed: {sol.message}")
    y = sol.y[0]
    bounds = np.array([ghidaglia_bound(t, params) for t in times])
    with np.errstate(invalid="ignore"):
        margin = np.where(np.isinf(bounds), 1.0, (bounds - y) / bounds)
    ok = y <= bounds * (1.0 + rtol)
    worst = int(np.argmin(margin))
    witness = None
    if not ok.all():
        bad = int(np.argmax(~ok))
        witness = {"t": float(times[bad]), "y": float(y[bad]), "bound": float(bounds[bad])}
    return ProbeReport(
        "ghidaglia", bool(ok.all()),
        measured={"worst_margin": float(margin[worst]), "worst_t": float(times[worst]), "samples": int(times.size)},
        evidence=[{"gamma": g, "nu": nu, "delta": d, "y0": y0, "t_end": t_end}],
        witness=witness)


def ghidaglia_suite(draws: int = 20, seed: int = 0, t_end: float = 10.0, rtol: float = 1e-6) -> ProbeReport:
    """Randomised draws with gamma in [0.1, 10], nu in (1, 3], delta in [0, 10], y0 in (0, 100]."""
    rng = np.random.default_rng(seed)
    evidence, witness = [], None
    worst = math.inf
    for _ in range(draws):
        params = GhidagliaParams(gamma=rng.uniform(0.1, 10.0), nu=3.0 - 2.0 * rng.random(),
                                 delta=rng.uniform(0.0, 10.0))
        y0 = 100.0 * (1.0 - rng.random())
        rep = verify_ghidaglia(params, y0, t_end, rtol=rtol)
        worst = min(worst, rep.measured["worst_margin"])
        evidence.append({**rep.evidence[0], "pass": rep.passed, "worst_margin": rep.measured["worst_margin"],
                         "samples": rep.measured["samples"]})
        if not rep.passed and witness is None:
            witness = {**rep.witness, **rep.evidence[0]}
    passed = witness is None
    return ProbeReport("ghidaglia", passed, {"draws": draws, "worst_margin": worst}, evidence, witness)


# -- trajectory probes ---------------------------------------------------------

def _blowup_witness(record: TrajectoryRecord, label: str = "") -> dict:
    return {"run": label, "status": record.status, "t": record.blowup_time, "step": record.blowup_step}


def boundedness_probe(record: TrajectoryRecord, tau: float, extended: TrajectoryRecord | None = None,
                      rtol: float = 1e-2) -> ProbeReport:
    """Sup of the L^{k0+2} and L^inf norms over t >= tau.

    With ``extended`` (same problem, longer horizon) the sups over the longer
    window must not exceed the original ones by more than ``rtol``.
    """
    if not record.completed:
        return ProbeReport("boundedness", False, witness=_blowup_witness(record, "base"))
    mask = record.window(tau)
    if not mask.any():
        raise ProbeError(f"no samples at or after tau={tau}")
    key = record.k0 + 2.0
    times = np.asarray(record.times)[mask]
    n_k, n_inf = record.norm(key)[mask], record.norm(math.inf)[mask]
    c3, c4 = float(n_k.max()), float(n_inf.max())
    measured = {"tau": tau, "c3": c3, "c4": c4, "c3_at": float(times[np.argmax(n_k)]),
                "c4_at": float(times[np.argmax(n_inf)])}
    if not (math.isfinite(c3) and math.isfinite(c4)):
        return ProbeReport("boundedness", False, measured, witness={"t": float(times[-1]), "c3": c3, "c4": c4})
    if extended is not None:
        if not extended.completed:
            return ProbeReport("boundedness", False, measured, witness=_blowup_witness(extended, "extended"))
        emask = extended.window(tau)
        e3 = float(extended.norm(key)[emask].max())
        e4 = float(extended.norm(math.inf)[emask].max())
        measured.update({"c3_extended": e3, "c4_extended": e4, "horizon": record.times[-1],
                         "horizon_extended": extended.times[-1]})
        if not (e3 <= c3 * (1 + rtol) and e4 <= c4 * (1 + rtol)):
            return ProbeReport("boundedness", False, measured,
                               witness={"c3": c3, "c3_extended": e3, "c4": c4, "c4_extended": e4})
    return ProbeReport("boundedness", True, measured)


def _scaled_initial(spec: ProblemSpec, grid: Grid, target_norm: float, k: float) -> np.ndarray:
    base = initial_values(spec.replace(u0=replace(spec.u0, amplitude=1.0)), grid)
    norm = lp_norm(GridField(grid, base), k)
    if norm == 0:
        raise ConfigError("the initial profile has zero norm and cannot be rescaled", "u0.profile")
    return base * (target_norm / norm)


def _evolve(args):
    spec, grid, cfg, times, u0 = args
    return run_to_time(spec, grid, cfg, times, u0_values=u0)


def _evolve_budgeted(args):
    # An exhausted step budget counts as divergence in threshold scans.
    try:
        return _evolve(args)
    except StepBudgetError as exc:
        exc.record.status = BUDGET_EXHAUSTED
        exc.record.blowup_time, exc.record.blowup_step = exc.time, exc.steps
        return exc.record


def _run_many(jobs: int, tasks: list, worker=_evolve) -> list[TrajectoryRecord]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(worker, tasks))
    return [worker(t) for t in tasks]


def threshold_probe(spec: ProblemSpec, grid: Grid, cfg: StepperConfig, c7: float,
                    amplitudes: Sequence[float], *, samples: int = 11, refine: int = 0,
                    jobs: int = 1) -> ProbeReport:
    """Run the smallness experiment around d0.

    ``amplitudes`` are target values of ||u0||_{k0+2}; the profile of
    ``spec.u0`` is rescaled to each. Only the claim below d0 is asserted:
    every such run must complete with finite norms. The smallest diverging
    amplitude (blow-up or an exhausted step budget) is reported as the
    empirical boundary (``None`` when nothing diverged) and may be bisected
    ``refine`` times against the largest completed amplitude below it.
    """
    N = spec.domain.dimension
    k0 = compute_k0(spec.p, spec.source.alpha, N)
    d0 = compute_d0(k0, spec.p, spec.source.alpha, c7)
    amps = sorted(float(a) for a in amplitudes)
    if not amps or amps[0] < 0:
        raise ConfigError("need a non-empty list of non-negative amplitudes", "amplitudes")
    times = np.linspace(0.0, spec.T, samples)
    key = k0 + 2.0

    def tasks_for(values):
        return [(spec, grid, cfg, times, _scaled_initial(spec, grid, a, key) if a > 0 else np.zeros(grid.shape))
                for a in values]

    records = _run_many(jobs, tasks_for(amps), _evolve_budgeted)
    evidence = []
    witness = None
    for a, rec in zip(amps, records):
        row = {"amplitude": a, "ratio_to_d0": a / d0, "status": rec.status, "blowup_time": rec.blowup_time,
               "sup_inf": float(np.max(rec.norm(math.inf))) if rec.times else None,
               "sup_k0p2": float(np.max(rec.norm(key))) if rec.times else None}
        evidence.append(row)
        if a < d0 and witness is None and not (rec.completed and rec.all_finite()):
            witness = {"amplitude": a, "status": rec.status, "t": rec.blowup_time}
    blown = [row["amplitude"] for row in evidence if row["status"] != "completed"]
    boundary = min(blown) if blown else None
    below = [row["amplitude"] for row in evidence
             if row["status"] == "completed" and (boundary is None or row["amplitude"] < boundary)]
    lo = max(below) if below else None
    if boundary is not None and lo is not None:
        hi = boundary
        for _ in range(refine):
            mid = 0.5 * (lo + hi)
            rec = _evolve_budgeted(tasks_for([mid])[0])
            evidence.append({"amplitude": mid, "ratio_to_d0": mid / d0, "status": rec.status,
                             "blowup_time": rec.blowup_time, "refinement": True})
            if rec.completed:
                lo = mid
            else:
                hi = mid
        boundary = hi
    measured = {"k0": k0, "d0": d0, "c7": c7, "empirical_boundary": boundary,
                "largest_completed_below_boundary": lo,
                "completed_below_d0": sum(1 for r in evidence if r["amplitude"] < d0 and r["status"] == "completed"),
                "runs_below_d0": sum(1 for r in evidence if r["amplitude"] < d0)}
    return ProbeReport("threshold", witness is None, measured, evidence, witness)


def _as_values(u0, spec: ProblemSpec, grid: Grid) -> np.ndarray:
    if isinstance(u0, InitialCondition):
        return initial_values(spec.replace(u0=u0), grid)
    return np.asarray(u0, dtype=float).reshape(grid.shape)


def _growth_rate(spec, grid, cfg, times, ua, ub):
    ra = run_to_time(spec, grid, cfg, times, snapshots=True, u0_values=ua)
    rb = run_to_time(spec, grid, cfg, times, snapshots=True, u0_values=ub)
    for label, rec in (("a", ra), ("b", rb)):
        if not rec.completed:
            return None, _blowup_witness(rec, label), None
    diffs = [ra.snapshots[i] - rb.snapshots[i] for i in range(len(times))]
    wn = np.array([lp_norm(GridField.wrap(grid, d), 2.0) for d in diffs])
    return wn, None, diffs


def contraction_probe(spec: ProblemSpec, u0_a, u0_b, t_end: float, grid: Grid, cfg: StepperConfig, *,
                      samples: int = 21, check_dt_halving: bool = True, stability_rtol: float = 0.1) -> ProbeReport:
    """Evolve two initial states and fit the Gronwall rate of their difference.

    The rate is the smallest C with ||w(t)||_2 <= ||w(0)||_2 e^{C t} at all
    sample times, i.e. max_t log(||w(t)|| / ||w(0)||) / t. Identical inputs
    must give bitwise identical trajectories. With ``check_dt_halving`` the
    rate is refitted with half the time step (explicit Euler: half the
    safety factor) and must agree within ``stability_rtol``.
    """
    spec = spec.replace(T=t_end)
    times = np.linspace(0.0, t_end, samples)
    ua, ub = _as_values(u0_a, spec, grid), _as_values(u0_b, spec, grid)
    wn, witness, diffs = _growth_rate(spec, grid, cfg, times, ua, ub)
    if witness:
        return ProbeReport("contraction", False, witness=witness)
    measured = {"w0": float(wn[0]), "w_final": float(wn[-1])}
    if wn[0] == 0:
        identical = all(not np.any(d) for d in diffs)
        measured.update({"identical": identical, "rate": 0.0})
        return ProbeReport("contraction", identical, measured,
                           witness=None if identical else {"t": float(times[int(np.argmax(wn > 0))])})

    def fit(norms):
        with np.errstate(divide="ignore"):
            return float(np.max(np.log(norms[1:] / norms[0]) / times[1:]))

    rate = fit(wn)
    measured["rate"] = rate
    evidence = [{"t": float(t), "w": float(w), "envelope": float(wn[0] * math.exp(rate * t))}
                for t, w in zip(times, wn)]
    if not math.isfinite(rate):
        return ProbeReport("contraction", False, measured, evidence, witness={"rate": rate})
    if check_dt_halving:
        half = replace(cfg, dt_initial=cfg.dt_initial / 2, max_steps=2 * cfg.max_steps)
        if cfg.scheme == "explicit-euler":
            half = replace(half, dt_safety=cfg.dt_safety / 2)
        wn_half, witness, _ = _growth_rate(spec, grid, half, times, ua, ub)
        if witness:
            return ProbeReport("contraction", False, measured, evidence, witness)
        rate_half = fit(wn_half)
        change = abs(rate_half - rate) / max(abs(rate), 1e-300)
        measured.update({"rate_half_dt": rate_half, "relative_change": change})
        if not (math.isfinite(rate_half) and change <= stability_rtol):
            return ProbeReport("contraction", False, measured, evidence,
                               witness={"rate": rate, "rate_half_dt": rate_half})
    return ProbeReport("contraction", True, measured, evidence)


def absorbing_probe(spec: ProblemSpec, family: Sequence, tau: float, t_end: float, grid: Grid,
                    cfg: StepperConfig, *, samples: int = 41, rtol: float = 0.05, jobs: int = 1) -> ProbeReport:
    """Common W^{1,p} radius over t >= tau for a family of initial states.

    Each member runs to 2*t_end; R is the largest seminorm over [tau, t_end]
    and R2 the same over [tau, 2 t_end]. The probe passes when every run
    completes and (R2 - R) / R < rtol.
    """
    if len(family) < 5:
        raise ConfigError("the absorbing-set probe needs at least five initial states", "family")
    if not 0 < tau < t_end:
        raise ConfigError("need 0 < tau < t_end", "tau")
    spec = spec.replace(T=2 * t_end)
    times = np.union1d(np.linspace(0.0, t_end, samples), np.linspace(t_end, 2 * t_end, samples))
    times = np.union1d(times, [tau])
    records = _run_many(jobs, [(spec, grid, cfg, times, _as_values(u0, spec, grid)) for u0 in family])
    evidence = []
    for i, rec in enumerate(records):
        if not rec.completed:
            return ProbeReport("absorbing", False, witness=_blowup_witness(rec, f"member {i}"))
        w = np.asarray(rec.w1p)
        evidence.append({"member": i, "w1p_initial": float(w[0]),
                         "sup_tau_T": float(w[rec.window(tau, t_end)].max()),
                         "sup_tau_2T": float(w[rec.window(tau)].max()), "w1p_final": float(w[-1])})
    r1 = max(row["sup_tau_T"] for row in evidence)
    r2 = max(row["sup_tau_2T"] for row in evidence)
    change = (r2 - r1) / r1 if r1 > 0 else (0.0 if r2 == 0 else math.inf)
    measured = {"R": r1, "R_doubled_horizon": r2, "relative_change": change, "tau": tau, "t_end": t_end}
    passed = math.isfinite(r2) and change < rtol
    return ProbeReport("absorbing", passed, measured, evidence,
                       witness=None if passed else {"R": r1, "R_doubled_horizon": r2})


# -- weak formulation ----------------------------------------------------------

@dataclass(frozen=True)
class WeakTestFunction:
    """Separable test function psi(x) * chi(t); psi vanishes on the boundary, chi at both ends."""

    space: Callable
    time: Callable[[float], float]
    time_derivative: Callable[[float], float]


class _SineSpace:
    def __init__(self, modes, extents):
        self.modes, self.extents = modes, extents

    def __call__(self, coords):
        out = 1.0
        for j, x, length in zip(self.modes, coords, self.extents):
            out = out * np.sin(j * np.pi * x / length)
        return out


class _SineTime:
    def __init__(self, i, t0, t1, derivative=False):
        self.i, self.t0, self.t1, self.derivative = i, t0, t1, derivative

    def __call__(self, t):
        w = self.i * np.pi / (self.t1 - self.t0)
        if self.derivative:
            return w * math.cos(w * (t - self.t0))
        return math.sin(w * (t - self.t0))


def default_test_functions(extents: Sequence[float], t0: float, t1: float, count: int = 10) -> list[WeakTestFunction]:
    """Products of sine modes in space and time, lowest total frequency first."""
    dim = len(extents)
    combos = []
    for total in range(dim + 1, dim + 1 + 4 * count):
        for i in range(1, total):
            rest = total - i
            if dim == 1:
                combos.append(((rest,), i))
            else:
                combos.extend(((a, rest - a), i) for a in range(1, rest))
        if len(combos) >= count:
            break
    return [WeakTestFunction(_SineSpace(modes, tuple(extents)), _SineTime(i, t0, t1),
                             _SineTime(i, t0, t1, derivative=True)) for modes, i in combos[:count]]


def weak_residuals(record: TrajectoryRecord, spec: ProblemSpec,
                   tests: Sequence[WeakTestFunction] | None = None) -> np.ndarray:
    """Space-time weak-form residual of every test function.

    For phi = psi(x) chi(t) the residual is

        int_0^T [ <u, psi> chi' - <|grad u|^{p-2} grad u, grad psi> chi + <S(u), psi> chi ] dt

    with the discrete pairings of the finite-difference grid and the
    trapezoid rule over the record's sample times.
    """
    n = len(record.times)
    if n < 2 or any(i not in record.snapshots for i in range(n)):
        raise ConfigError("weak residual needs a snapshot at every sample time", "snapshots")
    if record.spacing is None:
        raise ConfigError("record carries no grid spacing; finite-difference records only", "record")
    shape = record.snapshots[0].shape
    grid = Grid(spec.domain.dimension, tuple(shape), tuple(spec.domain.extents))
    times = np.asarray(record.times)
    if tests is None:
        tests = default_test_functions(spec.domain.extents, times[0], times[-1])
    dt = np.diff(times)
    quad = np.zeros(n)
    quad[:-1] += 0.5 * dt
    quad[1:] += 0.5 * dt
    vol = grid.cell_volume

    mass, stiff, load = [], [], []
    psis = [test.space(grid.coordinates) * np.ones(shape) for test in tests]
    psi_grads = [face_gradients(psi, grid.spacing) for psi in psis]
    for i in range(n):
        u = record.snapshots[i]
        fluxes = [flux(g, spec.p) for g in face_gradients(u, grid.spacing)]
        src = nonlocal_source(u, vol, spec.source, spec.lam) if spec.lam else np.zeros(shape)
        mass.append([vol * float(np.sum(u * psi)) for psi in psis])
        stiff.append([vol * sum(float(np.sum(fl * gp)) for fl, gp in zip(fluxes, gps)) for gps in psi_grads])
        load.append([vol * float(np.sum(src * psi)) for psi in psis])
    mass, stiff, load = map(np.asarray, (mass, stiff, load))
    out = np.empty(len(tests))
    for j, test in enumerate(tests):
        chi = np.array([test.time(t) for t in times])
        dchi = np.array([test.time_derivative(t) for t in times])
        out[j] = float(np.sum(quad * (mass[:, j] * dchi - stiff[:, j] * chi + load[:, j] * chi)))
    return out


def weak_residual(record: TrajectoryRecord, spec: ProblemSpec,
                  tests: Sequence[WeakTestFunction] | None = None) -> float:
    """Largest absolute weak-form residual over the test set."""
    return float(np.max(np.abs(weak_residuals(record, spec, tests))))
