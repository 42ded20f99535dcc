"""Continuous problem data, source hypotheses, and theorem-level thresholds.

The model problem is

    u_t - div(|grad u|^{p-2} grad u) = lam * f(u) / (int_Omega f(u) dx)^2,
    u = 0 on the boundary,  u(0) = u0,

with the dissipative sign convention on the p-Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DegeneracyError, EvaluationError, RangeError

SOURCE_KINDS = ("constant", "power-growth", "exponential-truncated", "user-table")


@dataclass(frozen=True, eq=True)
class SourceFunction:
    """Nonlinearity f together with its growth data.

    ``sigma <= f(xi) <= c1 * |xi|**(alpha + 1) + c2`` is the declared envelope;
    :meth:`lipschitz` returns the declared local Lipschitz bound L(R).
    Use the classmethod constructors, which fill in the analytic constants for
    the built-in kinds.
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    sigma: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown source kind {self.kind!r}", "source.kind")
        for name in ("sigma", "c1", "c2", "alpha"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"must be a finite positive number, got {value!r}", f"source.{name}")
        if self.kind == "user-table":
            xs = np.asarray(self.params.get("xi", ()), dtype=float)
            if xs.size < 2 or xs.shape != np.asarray(self.params.get("f", ())).shape:
                raise ConfigError("table needs >= 2 nodes and matching xi/f lengths", "source.params")
            if np.any(np.diff(xs) <= 0):
                raise ConfigError("table nodes must be strictly increasing", "source.params.xi")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c: float = 1.0, **overrides) -> "SourceFunction":
        """f(xi) = c."""
        data = dict(sigma=c, c1=1.0, c2=c, alpha=1.0)
        data.update(overrides)
        return cls("constant", {"c": float(c)}, **data)

    @classmethod
    def power_growth(cls, a: float = 1.0, q: float = 2.0, c: float = 1.0, **overrides) -> "SourceFunction":
        """f(xi) = a*|xi|**q + c with q > 1, so alpha = q - 1."""
        if q <= 1:
            raise ConfigError("power-growth exponent q must exceed 1", "source.params.q")
        data = dict(sigma=c, c1=a, c2=c, alpha=q - 1.0)
        data.update(overrides)
        return cls("power-growth", {"a": float(a), "q": float(q), "c": float(c)}, **data)

    @classmethod
    def exponential_truncated(cls, a: float = 1.0, b: float = 1.0, cap: float = 5.0, **overrides) -> "SourceFunction":
        """f(xi) = a*exp(b*clip(xi, -cap, cap)); bounded above and below."""
        if cap <= 0:
            raise ConfigError("cap must be positive", "source.params.cap")
        data = dict(sigma=a * math.exp(-abs(b) * cap), c1=a, c2=a * math.exp(abs(b) * cap), alpha=1.0)
        data.update(overrides)
        return cls("exponential-truncated", {"a": float(a), "b": float(b), "cap": float(cap)}, **data)

    @classmethod
    def table(cls, xi: Sequence[float], f: Sequence[float], *, sigma: float, c1: float, c2: float,
              alpha: float) -> "SourceFunction":
        """Piecewise-linear interpolant of (xi, f), constant beyond the end nodes."""
        params = {"xi": tuple(float(v) for v in xi), "f": tuple(float(v) for v in f)}
        return cls("user-table", params, sigma=sigma, c1=c1, c2=c2, alpha=alpha)

    # -- evaluation -------------------------------------------------------
    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        prm = self.params
        if self.kind == "constant":
            return np.full_like(xi, prm["c"])
        if self.kind == "power-growth":
            return prm["a"] * np.abs(xi) ** prm["q"] + prm["c"]
        if self.kind == "exponential-truncated":
            return prm["a"] * np.exp(prm["b"] * np.clip(xi, -prm["cap"], prm["cap"]))
        return np.interp(xi, prm["xi"], prm["f"])

    def lipschitz(self, radius: float) -> float:
        """Declared Lipschitz constant of f on [-radius, radius]; nondecreasing in radius."""
        r = abs(float(radius))
        prm = self.params
        if self.kind == "constant":
            return 0.0
        if self.kind == "power-growth":
            return prm["a"] * prm["q"] * r ** (prm["q"] - 1.0)
        if self.kind == "exponential-truncated":
            b = abs(prm["b"])
            return prm["a"] * b * math.exp(b * min(r, prm["cap"]))
        xs = np.asarray(prm["xi"])
        slopes = np.abs(np.diff(prm["f"]) / np.diff(xs))
        touching = (xs[:-1] <= r) & (xs[1:] >= -r)
        return float(slopes[touching].max()) if touching.any() else 0.0

    def upper_envelope(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.c1 * np.abs(xi) ** (self.alpha + 1.0) + self.c2

    def to_dict(self) -> dict:
        params = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "params": params, "sigma": self.sigma, "c1": self.c1,
                "c2": self.c2, "alpha": self.alpha}


@dataclass(frozen=True)
class DomainSpec:
    """Box domain (0, L1) x ... x (0, LN), N in {1, 2}."""

    dimension: int
    extents: tuple[float, ...]

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.dimension!r}", "domain.dim")
        if len(self.extents) != self.dimension:
            raise ConfigError("need one extent per axis", "domain.extent")
        if not all(math.isfinite(e) and e > 0 for e in self.extents):
            raise ConfigError("extents must be finite and positive", "domain.extent")

    @classmethod
    def interval(cls, length: float = 1.0) -> "DomainSpec":
        return cls(1, (float(length),))

    @property
    def measure(self) -> float:
        return math.prod(self.extents)


def _sine_profile(coords, extents, params):
    out = 1.0
    for x, length in zip(coords, extents):
        out = out * np.sin(np.pi * x / length)
    return out


def _bump_profile(coords, extents, params):
    q = float(params.get("sharpness", 8.0))
    return np.abs(_sine_profile(coords, extents, params)) ** q


def _parabola_profile(coords, extents, params):
    out = 1.0
    for x, length in zip(coords, extents):
        out = out * 4.0 * x * (length - x) / length**2
    return out


def _zero_profile(coords, extents, params):
    return np.zeros(np.broadcast(*coords).shape)


def _random_profile(coords, extents, params):
    # Sine series with coefficients normalised by sum |c_j| so max |u| <= 1.
    rng = np.random.default_rng(int(params.get("seed", 0)))
    modes = int(params.get("modes", 6))
    out = 1.0
    for x, length in zip(coords, extents):
        coef = rng.uniform(-1.0, 1.0, modes) / np.arange(1, modes + 1)
        coef /= np.abs(coef).sum()
        series = sum(c * np.sin((j + 1) * np.pi * x / length) for j, c in enumerate(coef))
        out = out * series
    return out


PROFILES: dict[str, Callable] = {
    "sine": _sine_profile,
    "bump": _bump_profile,
    "parabola": _parabola_profile,
    "zero": _zero_profile,
    "random": _random_profile,
}


@dataclass(frozen=True)
class InitialCondition:
    """Named profile times amplitude. Every profile vanishes on the boundary."""

    profile: str = "sine"
    amplitude: float = 1.0
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(
                f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}", "u0.profile")
        if not math.isfinite(self.amplitude):
            raise ConfigError("amplitude must be finite", "u0.amplitude")

    def evaluate(self, coords: Sequence[np.ndarray], extents: Sequence[float]) -> np.ndarray:
        """Evaluate on broadcastable coordinate arrays (one per axis)."""
        return self.amplitude * np.asarray(PROFILES[self.profile](coords, extents, self.params), dtype=float)

    def to_dict(self) -> dict:
        return {"profile": self.profile, "amplitude": self.amplitude, "params": dict(self.params)}


@dataclass(frozen=True)
class ProblemSpec:
    p: float
    lam: float
    domain: DomainSpec
    source: SourceFunction
    u0: InitialCondition = field(default_factory=InitialCondition)
    T: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p >= 2):
            raise ConfigError(f"p must be >= 2, got {self.p!r}", "problem.p")
        # lam == 0 switches the source off; used by the dissipativity checks.
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lambda must be >= 0, got {self.lam!r}", "problem.lambda")
        if not (math.isfinite(self.T) and self.T >= 0):
            raise ConfigError(f"T must be >= 0, got {self.T!r}", "problem.T")
        ends = []
        for axis, length in enumerate(self.domain.extents):
            for end in (0.0, length):
                coords = [np.array([0.5 * e]) for e in self.domain.extents]
                coords[axis] = np.array([end])
                ends.append(float(self.u0.evaluate(coords, self.domain.extents)[0]))
        if max(abs(v) for v in ends) > 1e-12 * max(1.0, abs(self.u0.amplitude)):
            raise ConfigError("initial condition must vanish on the boundary", "u0")

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class Thresholds:
    k0: float
    d0: float
    c7_estimate: float

    @classmethod
    def for_problem(cls, spec: ProblemSpec, c7: float = 1.0) -> "Thresholds":
        k0 = compute_k0(spec.p, spec.source.alpha, spec.domain.dimension)
        return cls(k0, compute_d0(k0, spec.p, spec.source.alpha, c7), c7)


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    worst_xi: float
    value: float
    bound: float


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


def validate_hypotheses(source: SourceFunction, xi_range: tuple[float, float], samples: int) -> HypothesisReport:
    """Sample the growth and Lipschitz hypotheses on a uniform grid over ``xi_range``.

    Three checks are reported: ``lower`` (f >= sigma), ``upper``
    (f <= c1|xi|^(alpha+1) + c2) and ``lipschitz`` (difference quotients of
    adjacent samples against L(max |xi|)). Adjacent pairs suffice: on sorted
    samples any wider quotient is a convex combination of adjacent ones and
    L(R) is nondecreasing.
    """
    lo, hi = map(float, xi_range)
    if samples < 2:
        raise ConfigError("need at least two samples", "samples")
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigError("range must be a finite interval lo < hi", "range")
    xi = np.linspace(lo, hi, samples)
    with np.errstate(over="ignore", invalid="ignore"):
        fx = source(xi)
    bad = ~np.isfinite(fx)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(float(xi[i]), float(fx[i]))

    lower_gap = fx - source.sigma
    i_lo = int(np.argmin(lower_gap))
    lower = HypothesisCheck("lower", bool(lower_gap[i_lo] >= 0), float(xi[i_lo]), float(fx[i_lo]), source.sigma)

    env = source.upper_envelope(xi)
    upper_gap = env - fx
    i_up = int(np.argmin(upper_gap))
    upper = HypothesisCheck("upper", bool(upper_gap[i_up] >= 0), float(xi[i_up]), float(fx[i_up]), float(env[i_up]))

    ratios = np.abs(np.diff(fx)) / np.diff(xi)
    radii = np.maximum(np.abs(xi[:-1]), np.abs(xi[1:]))
    bounds = np.array([source.lipschitz(r) for r in radii])
    # Small relative slack absorbs rounding in the difference quotients.
    slack = 1e-9 * np.maximum(bounds, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        use = np.where(bounds > 0, ratios / bounds, np.where(ratios > slack, np.inf, 0.0))
    k = int(np.argmax(use))
    worst = float(xi[k] if abs(xi[k]) >= abs(xi[k + 1]) else xi[k + 1])
    lip = HypothesisCheck("lipschitz", bool(np.all(ratios <= bounds + slack)), worst, float(ratios[k]), float(bounds[k]))
    return HypothesisReport((lower, upper, lip))


def compute_k0(p: float, alpha: float, N: int) -> float:
    """Smallest admissible integrability shift k0 = max(0, N(alpha+2-p)/p - 2)."""
    if p < 2 or alpha <= 0 or N < 1:
        raise ConfigError(f"need p >= 2, alpha > 0, N >= 1 (got p={p}, alpha={alpha}, N={N})")
    return max(0.0, N * (alpha + 2.0 - p) / p - 2.0)


def compute_d0(k0: float, p: float, alpha: float, c7: float) -> float:
    """Smallness threshold d0 = (4 / (c7 (k0+p)^p))^(1/alpha) on ||u0||_{k0+2}."""
    if c7 <= 0 or p < 2 or alpha <= 0 or k0 < 0:
        raise ConfigError(f"need c7 > 0, p >= 2, alpha > 0, k0 >= 0 (got {c7}, {p}, {alpha}, {k0})")
    log_d0 = (math.log(4.0) - math.log(c7) - p * math.log(k0 + p)) / alpha
    try:
        d0 = math.exp(log_d0)
    except OverflowError as exc:
        raise RangeError(f"d0 overflows (log d0 = {log_d0:.6g})") from exc
    if d0 == 0.0:
        raise RangeError(f"d0 underflows to zero (log d0 = {log_d0:.6g})")
    return d0


def nonlocal_source(values, weights, source: SourceFunction, lam: float, floor: float | None = None) -> np.ndarray:
    """Pointwise lam*f(u_i) / (sum_j w_j f(u_j))**2.

    ``floor`` defaults to half the analytic lower bound sigma*|Omega|, with
    |Omega| taken as the total quadrature weight.
    """
    values = np.asarray(values, dtype=float)
    fu = source(values)
    if np.ndim(weights) == 0:
        integral = float(weights) * float(np.sum(fu))
        total_weight = float(weights) * values.size
    else:
        weights = np.broadcast_to(np.asarray(weights, dtype=float), values.shape)
        integral = float(np.sum(weights * fu))
        total_weight = float(np.sum(weights))
    if floor is None:
        floor = 0.5 * source.sigma * total_weight
    if not integral >= floor:
        raise DegeneracyError(integral, floor)
    return lam * fu / integral**2
