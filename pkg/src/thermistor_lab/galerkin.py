"""Faedo-Galerkin semidiscretisation on a Dirichlet sine basis (1D).

u_m(x, t) = sum_j g_j(t) w_j(x),  w_j(x) = sqrt(2/L) sin(j pi x / L).

The basis is L^2-orthonormal, so the mass matrix is the identity and each
coefficient obeys

    g_j' = -a_p(u_m, w_j) + lam / (int f(u_m))^2 * <f(u_m), w_j>,

with a_p(u, w) = int |u'|^{p-2} u' w' dx. All integrals use composite
Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .discretization import Grid
from .errors import BlowUpError, ConfigError, DegeneracyError, StepBudgetError
from .problem import ProblemSpec
from .stepping import StepperConfig, _validate_times, norm_exponents
from .trajectory import BLEW_UP, TrajectoryRecord


class SineBasis:
    """First ``m`` sine modes on (0, L) sampled at composite Gauss-Legendre nodes.

    ``panels`` defaults to 2m with ``order`` nodes each; fewer than m panels
    cannot resolve the highest mode and is rejected.
    """

    def __init__(self, m: int, length: float = 1.0, panels: int | None = None, order: int = 10):
        if m < 1:
            raise ConfigError("need at least one mode", "modes")
        panels = 2 * m if panels is None else int(panels)
        if panels < m or order < 4:
            raise ConfigError(
                f"quadrature too coarse for {m} modes ({panels} panels of order {order}); "
                f"need >= {m} panels of order >= 4", "quadrature")
        self.m, self.length, self.panels, self.order = m, float(length), panels, order
        ref_x, ref_w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, length, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        self.points = (mid[:, None] + half[:, None] * ref_x[None, :]).ravel()
        self.weights = (half[:, None] * ref_w[None, :]).ravel()
        self.values = self.evaluate_modes(self.points)
        self.derivatives = self.evaluate_mode_derivatives(self.points)
        # weighted transposes, so that <F, w_j> = wvalues @ F
        self.wvalues = (self.values * self.weights[:, None]).T
        self.wderivatives = (self.derivatives * self.weights[:, None]).T

    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.m + 1) * np.pi / self.length

    def evaluate_modes(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return math.sqrt(2.0 / self.length) * np.sin(np.multiply.outer(x, self.wavenumbers()))

    def evaluate_mode_derivatives(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = self.wavenumbers()
        return math.sqrt(2.0 / self.length) * k * np.cos(np.multiply.outer(x, k))

    def project(self, values_at_points: np.ndarray) -> np.ndarray:
        """L^2 projection of a function sampled at the quadrature points.

        The sine modes are orthogonal in both L^2 and H^1_0, so this also
        equals the H^1_0-orthogonal projection.
        """
        return self.wvalues @ values_at_points


@dataclass
class SpectralState:
    coefficients: np.ndarray
    length: float = 1.0

    def __post_init__(self):
        self.coefficients = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if self.coefficients.ndim != 1 or self.coefficients.size < 1:
            raise ConfigError("coefficients must be a non-empty vector")
        if not np.all(np.isfinite(self.coefficients)):
            raise ConfigError("coefficients must be finite")

    @property
    def m(self) -> int:
        return self.coefficients.size

    def evaluate(self, x) -> np.ndarray:
        k = np.arange(1, self.m + 1) * np.pi / self.length
        return math.sqrt(2.0 / self.length) * np.sin(np.multiply.outer(np.asarray(x, float), k)) @ self.coefficients


def _check_problem(spec: ProblemSpec) -> None:
    if spec.domain.dimension != 1:
        raise ConfigError("the spectral Galerkin solver is one-dimensional", "domain.dim")


def _rhs(g: np.ndarray, basis: SineBasis, spec: ProblemSpec) -> np.ndarray:
    du = basis.derivatives @ g
    p = spec.p
    flux = du if p == 2 else np.abs(du) ** (p - 2.0) * du
    out = -(basis.wderivatives @ flux)
    if spec.lam:
        fu = spec.source(basis.values @ g)
        integral = float(basis.weights @ fu)
        floor = 0.5 * spec.source.sigma * basis.length
        if math.isnan(integral):
            return np.full_like(g, np.nan)
        if not integral >= floor:
            raise DegeneracyError(integral, floor)
        out += spec.lam / integral**2 * (basis.wvalues @ fu)
    return out


def galerkin_rhs(state: SpectralState, spec: ProblemSpec, basis: SineBasis | None = None) -> np.ndarray:
    """Time derivative of the Galerkin coefficients."""
    _check_problem(spec)
    if basis is None:
        basis = SineBasis(state.m, spec.domain.extents[0])
    elif basis.m != state.m:
        raise ConfigError(f"basis has {basis.m} modes but the state has {state.m}", "modes")
    return _rhs(state.coefficients, basis, spec)


def project_initial(spec: ProblemSpec, basis: SineBasis) -> SpectralState:
    u0 = spec.u0.evaluate((basis.points,), spec.domain.extents)
    return SpectralState(basis.project(u0), basis.length)


def _sample(record, t, g, basis, spec, keys, snap_modes, want):
    u = basis.values @ g
    du = basis.derivatives @ g
    w = basis.weights
    with np.errstate(over="ignore", invalid="ignore"):
        norms = {k: float(np.max(np.abs(u))) if math.isinf(k) else float(w @ np.abs(u) ** k) ** (1.0 / k)
                 for k in keys}
        fu = spec.source(u)
        int_f = float(w @ fu)
        smax = spec.lam * float(np.max(fu)) / int_f**2 if spec.lam else 0.0
        w1p = float(w @ np.abs(du) ** spec.p) ** (1.0 / spec.p)
    idx = record.append(t, norms, w1p, int_f, smax)
    if want:
        record.snapshots[idx] = snap_modes @ g
        record.extra.setdefault("coefficients", {})[idx] = g.copy()


def galerkin_run(spec: ProblemSpec, m: int, cfg: StepperConfig, sample_times: Sequence[float] | None = None, *,
                 basis: SineBasis | None = None, snapshots: bool | Iterable[int] = False,
                 snapshot_grid: Grid | None = None, extra_norms: Iterable[float] = (),
                 raise_on_blowup: bool = False) -> TrajectoryRecord:
    """Integrate the Galerkin system with classical RK4 at the fixed step ``cfg.dt_initial``.

    Steps are shortened to hit sample times (default: 11 equispaced times
    on [0, T]). Snapshots hold u_m at the nodes of ``snapshot_grid`` (or at
    the quadrature points) and the coefficient vectors in
    ``record.extra["coefficients"]``. Divergence ends the run with status
    ``"blew-up"`` and the divergence time.
    """
    _check_problem(spec)
    length = spec.domain.extents[0]
    basis = SineBasis(m, length) if basis is None else basis
    if basis.m != m:
        raise ConfigError(f"basis has {basis.m} modes, expected {m}", "modes")
    times = _validate_times(np.linspace(0.0, spec.T, 11) if sample_times is None else sample_times, spec.T)
    keys = norm_exponents(spec, extra_norms)
    dt0 = cfg.dt_initial
    if spec.p == 2 and dt0 * basis.wavenumbers()[-1] ** 2 > 2.78:
        warnings.warn(f"dt={dt0} exceeds the RK4 stability limit for {m} modes", RuntimeWarning, stacklevel=2)
    if snapshot_grid is not None:
        snap_points = snapshot_grid.axes[0]
        coords = (snap_points,)
    else:
        snap_points = basis.points
        coords = (basis.points,)
    snap_modes = basis.evaluate_modes(snap_points)
    want = (lambda i: bool(snapshots)) if isinstance(snapshots, bool) else (lambda i, s=set(snapshots): i in s)

    g = project_initial(spec, basis).coefficients
    record = TrajectoryRecord(p=spec.p, k0=keys[0] - 2.0, coordinates=coords)
    record.extra["modes"] = m

    def f(y):
        return _rhs(y, basis, spec)

    t, step = 0.0, 0
    try:
        for i, target in enumerate(times):
            while t < target:
                if step >= cfg.max_steps:
                    raise StepBudgetError(step, t)
                dt = dt0
                remaining = target - t
                if dt >= remaining or remaining - dt <= 1e-12 * max(1.0, target):
                    dt, t_next = remaining, float(target)
                else:
                    t_next = t + dt
                with np.errstate(over="ignore", invalid="ignore"):
                    k1 = f(g)
                    k2 = f(g + 0.5 * dt * k1)
                    k3 = f(g + 0.5 * dt * k2)
                    k4 = f(g + dt * k3)
                    g = g + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                step += 1
                t = t_next
                if not np.all(np.isfinite(g)) or float(np.max(np.abs(basis.values @ g))) > cfg.blowup_cap:
                    raise BlowUpError(step, t)
            _sample(record, t, g, basis, spec, keys, snap_modes, want(i))
    except BlowUpError as exc:
        record.status, record.blowup_time, record.blowup_step = BLEW_UP, exc.time, exc.step
        record.steps = step
        if raise_on_blowup:
            exc.record = record
            raise
        return record
    record.steps = step
    return record
