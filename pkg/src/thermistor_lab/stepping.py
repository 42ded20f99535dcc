"""Finite-difference time stepping: explicit Euler and IMEX backward Euler.

Both schemes treat the nonlocal source explicitly. The IMEX step solves

    v - dt * A_p(v) = u + dt * S(u)

by Newton's method; the left side is the gradient of the strictly convex
functional 1/2|v|^2 - <b, v> + dt/p * sum |grad v|^p, which is what the
damped line search monitors.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .discretization import (
    Grid,
    GridField,
    apply_p_laplacian,
    face_gradients,
    flux,
    integrate,
    lp_norm,
    p_laplacian_jacobian,
    w1p_seminorm,
)
from .errors import BlowUpError, ConfigError, SolverError, StepBudgetError
from .problem import ProblemSpec, compute_k0, nonlocal_source
from .trajectory import BLEW_UP, TrajectoryRecord

SCHEMES = ("explicit-euler", "imex", "rk4-spectral")


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping parameters.

    ``dt_initial`` is the step for imex and rk4-spectral and the upper limit
    for explicit Euler, which further shrinks it through :func:`stable_dt`.
    ``blowup_cap`` bounds max|u|; exceeding it counts as divergence.
    """

    scheme: str = "explicit-euler"
    dt_initial: float = 1e-3
    dt_safety: float = 0.9
    max_steps: int = 10_000_000
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    epsilon: float = 0.0
    blowup_cap: float = 1e8

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}", "stepper.scheme")
        if not (self.dt_initial > 0 and math.isfinite(self.dt_initial)):
            raise ConfigError("dt_initial must be positive", "stepper.dt")
        if not 0 < self.dt_safety <= 1:
            raise ConfigError("dt_safety must lie in (0, 1]", "stepper.safety")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive", "stepper.max_steps")
        if not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive", "stepper.newton_tol")
        if self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter must be positive", "stepper.newton_max_iter")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0", "stepper.epsilon")
        if not self.blowup_cap > 0:
            raise ConfigError("blowup_cap must be positive", "stepper.blowup_cap")

    def to_dict(self) -> dict:
        return asdict(self)


def _source(values: np.ndarray, grid: Grid, spec: ProblemSpec) -> np.ndarray:
    return nonlocal_source(values, grid.cell_volume, spec.source, spec.lam)


def _explicit_terms(values: np.ndarray, grid: Grid, spec: ProblemSpec, cfg: StepperConfig,
                    epsilon: float) -> tuple[np.ndarray, float]:
    """Right-hand side A_p u + S(u) and the explicit step bound, sharing one gradient pass."""
    p = spec.p
    rate = np.zeros_like(values)
    gmax = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for axis, (g, h) in enumerate(zip(face_gradients(values, grid.spacing), grid.spacing)):
            rate += np.diff(flux(g, p, epsilon), axis=axis) / h
            gmax = max(gmax, float(np.max(np.abs(g))))
        if epsilon:
            gmax = math.hypot(gmax, epsilon)
        stiff = max(1.0, gmax ** (p - 2.0))
        dt = min(cfg.dt_initial, cfg.dt_safety * min(grid.spacing) ** 2 / (2 * grid.dimension * stiff))
        if spec.lam > 0:
            src = _source(values, grid, spec)
            rate += src
            smax = float(np.max(np.abs(src)))
            if smax > 0:
                dt = min(dt, cfg.dt_safety * max(1.0, float(np.max(np.abs(values)))) / smax)
    return rate, dt


def stable_dt(values: np.ndarray, grid: Grid, spec: ProblemSpec, cfg: StepperConfig) -> float:
    """Explicit-Euler step bound for the current state.

    Diffusion: dt <= safety * h^2 / (2N * max(1, max|g|^(p-2))), which is
    exactly the condition under which one explicit step cannot increase the
    discrete L^2 norm when the source is off. Source: dt * max|S| <=
    safety * max(1, max|u|), which keeps divergence resolved in time.
    """
    return _explicit_terms(values, grid, spec, cfg, cfg.epsilon)[1]


def _check_finite(values: np.ndarray, step: int | None, time: float | None) -> None:
    if not np.all(np.isfinite(values)):
        raise BlowUpError(step, time, f"non-finite state at step {step} (t={time})")


def step_explicit(field: GridField, spec: ProblemSpec, dt: float, *, epsilon: float = 0.0,
                  step: int | None = None) -> GridField:
    """u + dt * (A_p u + S(u)). Raises BlowUpError on a non-finite result."""
    if dt == 0:
        return GridField(field.grid, field.values.copy())
    grid = field.grid
    with np.errstate(over="ignore", invalid="ignore"):
        rate = apply_p_laplacian(field.values, grid.spacing, spec.p, epsilon)
        if spec.lam:
            rate = rate + _source(field.values, grid, spec)
        new = field.values + dt * rate
    _check_finite(new, step, None)
    return GridField.wrap(grid, new)


def _energy(v: np.ndarray, b: np.ndarray, grid: Grid, p: float, dt: float, eps: float) -> float:
    grads = face_gradients(v, grid.spacing)
    if eps:
        dirichlet = sum(float(np.sum((g * g + eps * eps) ** (p / 2.0))) for g in grads)
    else:
        dirichlet = sum(float(np.sum(np.abs(g) ** p)) for g in grads)
    return grid.cell_volume * (0.5 * float(np.sum(v * v)) - float(np.sum(b * v)) + dt / p * dirichlet)


def _linear_solve(matrix: sp.csr_matrix, rhs: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.dimension == 1:
        n = grid.size
        bands = np.zeros((3, n))
        bands[0, 1:] = matrix.diagonal(1)
        bands[1] = matrix.diagonal(0)
        bands[2, :-1] = matrix.diagonal(-1)
        return solve_banded((1, 1), bands, rhs, check_finite=False)
    return spsolve(sp.csc_matrix(matrix), rhs)


def step_imex(field: GridField, spec: ProblemSpec, dt: float, cfg: StepperConfig) -> GridField:
    """Backward Euler in the p-Laplacian, forward Euler in the nonlocal source.

    Newton stops once max|v - dt A_p v - b| <= newton_tol * max(1, max|b|).
    For p = 2 without regularisation the system is linear and one solve is
    taken. A full Newton step is kept when it lowers the residual; otherwise
    the step is backtracked on the convex energy.
    """
    grid = field.grid
    u = field.values
    p, eps = spec.p, cfg.epsilon
    b = u + dt * _source(u, grid, spec) if spec.lam else u.copy()
    _check_finite(b, None, None)
    if dt == 0:
        return GridField(grid, b)
    tol = cfg.newton_tol * max(1.0, float(np.max(np.abs(b))))
    eye = sp.identity(grid.size, format="csr")

    def residual(v):
        return v - dt * apply_p_laplacian(v, grid.spacing, p, eps) - b

    if p == 2 and eps == 0:
        jac = eye - dt * p_laplacian_jacobian(u, grid, p, eps)
        v = _linear_solve(jac, b.reshape(-1), grid).reshape(grid.shape)
        rnorm = float(np.max(np.abs(residual(v))))
        if rnorm <= tol:
            return GridField.wrap(grid, v)
        raise SolverError(rnorm, 1)

    # At least one Newton step is always taken: stopping on the residual of
    # the previous state would freeze slowly varying solutions.
    v = u.copy()
    r = residual(v)
    rnorm = float(np.max(np.abs(r)))
    for it in range(cfg.newton_max_iter):
        jac = eye - dt * p_laplacian_jacobian(v, grid, p, eps)
        dv = _linear_solve(jac, -r.reshape(-1), grid).reshape(grid.shape)
        trial = v + dv
        r_trial = residual(trial)
        rn_trial = float(np.max(np.abs(r_trial)))
        if not rn_trial < rnorm and rnorm > tol:
            e0 = _energy(v, b, grid, p, dt, eps)
            slope = grid.cell_volume * float(np.sum(r * dv))
            s = 1.0
            while s > 1e-10:
                trial = v + s * dv
                if _energy(trial, b, grid, p, dt, eps) <= e0 + 1e-4 * s * slope:
                    break
                s *= 0.5
            r_trial = residual(trial)
            rn_trial = float(np.max(np.abs(r_trial)))
        v, r, rnorm = trial, r_trial, rn_trial
        if rnorm <= tol:
            return GridField.wrap(grid, v)
    raise SolverError(rnorm, cfg.newton_max_iter)


def initial_values(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    return spec.u0.evaluate(grid.coordinates, spec.domain.extents).reshape(grid.shape)


def norm_exponents(spec: ProblemSpec, extra: Iterable[float] = ()) -> list[float]:
    """k0+2, 2, inf, then any extra exponents, without duplicates."""
    k0 = compute_k0(spec.p, spec.source.alpha, spec.domain.dimension)
    keys: list[float] = []
    for k in (k0 + 2.0, 2.0, math.inf, *extra):
        if float(k) not in keys:
            keys.append(float(k))
    return keys


def _sample(record: TrajectoryRecord, t: float, values: np.ndarray, grid: Grid, spec: ProblemSpec,
            keys: Sequence[float], snapshot: bool) -> None:
    fld = GridField.wrap(grid, values)
    with np.errstate(over="ignore", invalid="ignore"):
        norms = {k: lp_norm(fld, k) for k in keys}
        int_f = integrate(spec.source(values), grid)
        smax = float(np.max(np.abs(_source(values, grid, spec)))) if spec.lam else 0.0
        w1p = w1p_seminorm(fld, spec.p)
    idx = record.append(t, norms, w1p, int_f, smax)
    if snapshot:
        record.snapshots[idx] = values.copy()


def _validate_times(sample_times: Sequence[float], horizon: float) -> np.ndarray:
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ConfigError("need at least one sample time", "sample_times")
    if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > horizon * (1 + 1e-12):
        raise ConfigError("sample times must ascend strictly within [0, T]", "sample_times")
    return times


def run_to_time(spec: ProblemSpec, grid: Grid, cfg: StepperConfig, sample_times: Sequence[float], *,
                snapshots: bool | Iterable[int] = False, extra_norms: Iterable[float] = (),
                u0_values: np.ndarray | None = None, raise_on_blowup: bool = False) -> TrajectoryRecord:
    """Advance the FD system from t = 0 through every sample time.

    Steps are shortened to land exactly on sample times. A divergence ends
    the run with ``status == "blew-up"`` and the partial record (or raises
    when ``raise_on_blowup``). Solver failures propagate with the partial
    record attached as ``exc.record``.
    """
    if cfg.scheme not in ("explicit-euler", "imex"):
        raise ConfigError(f"scheme {cfg.scheme!r} does not drive finite-difference grids", "stepper.scheme")
    if tuple(grid.extents) != tuple(spec.domain.extents):
        raise ConfigError("grid extents differ from the problem domain", "grid")
    times = _validate_times(sample_times, spec.T)
    keys = norm_exponents(spec, extra_norms)
    want = (lambda i: bool(snapshots)) if isinstance(snapshots, bool) else (lambda i, s=set(snapshots): i in s)

    u = initial_values(spec, grid) if u0_values is None else np.array(u0_values, dtype=float).reshape(grid.shape)
    record = TrajectoryRecord(p=spec.p, k0=keys[0] - 2.0, coordinates=grid.coordinates, spacing=grid.spacing)
    t, step = 0.0, 0
    try:
        for i, target in enumerate(times):
            while t < target:
                if step >= cfg.max_steps:
                    raise StepBudgetError(step, t)
                if cfg.scheme == "explicit-euler":
                    rate, dt = _explicit_terms(u, grid, spec, cfg, cfg.epsilon)
                else:
                    dt = cfg.dt_initial
                remaining = target - t
                if dt >= remaining or remaining - dt <= 1e-12 * max(1.0, target):
                    dt, t_next = remaining, float(target)
                else:
                    t_next = t + dt
                if cfg.scheme == "explicit-euler":
                    with np.errstate(over="ignore", invalid="ignore"):
                        u = u + dt * rate
                else:
                    try:
                        u = step_imex(GridField.wrap(grid, u), spec, dt, cfg).values
                    except BlowUpError:
                        raise BlowUpError(step + 1, t_next) from None
                step += 1
                t = t_next
                if not np.all(np.isfinite(u)) or float(np.max(np.abs(u))) > cfg.blowup_cap:
                    raise BlowUpError(step, t)
            _sample(record, t, u, grid, spec, keys, want(i))
    except BlowUpError as exc:
        record.status, record.blowup_time, record.blowup_step = BLEW_UP, exc.time, exc.step
        record.steps = step
        if raise_on_blowup:
            exc.record = record
            raise
        return record
    except (SolverError, StepBudgetError) as exc:
        record.steps = step
        exc.record = record
        raise
    record.steps = step
    return record
