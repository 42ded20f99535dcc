"""Uniform interior-node grids and the conservative discrete p-Laplacian.

Nodes sit at x_i = i*h, i = 1..n, with h = L/(n+1); the boundary values are
implicitly zero. Gradients live on the n+1 faces between neighbouring nodes
(including the two faces touching the boundary), so that

    -sum_i (A_p u)_i u_i h^N  ==  sum_faces |grad u|^p h^N

holds exactly up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .problem import DomainSpec


@dataclass(frozen=True)
class Grid:
    dimension: int
    points_per_axis: tuple[int, ...]
    extents: tuple[float, ...]

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigError("grid dimension must be 1 or 2", "grid.dimension")
        if len(self.points_per_axis) != self.dimension or len(self.extents) != self.dimension:
            raise ConfigError("need one point count and one extent per axis", "grid")
        if any(int(n) != n or n < 1 for n in self.points_per_axis):
            raise ConfigError("points per axis must be positive integers", "grid.n")
        if any(not (e > 0 and math.isfinite(e)) for e in self.extents):
            raise ConfigError("extents must be finite and positive", "grid.extent")

    @classmethod
    def uniform(cls, domain: DomainSpec, n: int | tuple[int, ...]) -> "Grid":
        if isinstance(n, int):
            n = (n,) * domain.dimension
        return cls(domain.dimension, tuple(int(k) for k in n), tuple(domain.extents))

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / (n + 1) for e, n in zip(self.extents, self.points_per_axis))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points_per_axis

    @property
    def size(self) -> int:
        return math.prod(self.points_per_axis)

    @cached_property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def measure(self) -> float:
        """Discrete measure |Omega_h|: the total midpoint-rule weight."""
        return self.cell_volume * self.size

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(h * np.arange(1, n + 1) for h, n in zip(self.spacing, self.points_per_axis))

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of ``shape`` per axis."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))


@dataclass
class GridField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("field values must be finite")

    @classmethod
    def wrap(cls, grid: Grid, values: np.ndarray) -> "GridField":
        """Wrap an array without validation (solver internals, possibly non-finite)."""
        obj = cls.__new__(cls)
        obj.grid, obj.values = grid, values
        return obj

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.shape))


def face_gradients(values: np.ndarray, spacing) -> list[np.ndarray]:
    """Forward differences on every face, padding with the zero boundary."""
    grads = []
    for axis, h in enumerate(spacing):
        shape = list(values.shape)
        shape[axis] += 1
        g = np.zeros(shape)
        lead = [slice(None)] * values.ndim
        lag = [slice(None)] * values.ndim
        lead[axis], lag[axis] = slice(0, -1), slice(1, None)
        g[tuple(lead)] += values
        g[tuple(lag)] -= values
        g /= h
        grads.append(g)
    return grads


def flux(g: np.ndarray, p: float, epsilon: float = 0.0) -> np.ndarray:
    """phi(g) = (g^2 + eps^2)^((p-2)/2) g; eps = 0 gives |g|^(p-2) g."""
    if p == 2 and epsilon == 0:
        return g
    if epsilon == 0:
        return np.abs(g) ** (p - 2.0) * g
    return (g * g + epsilon * epsilon) ** ((p - 2.0) / 2.0) * g


def flux_derivative(g: np.ndarray, p: float, epsilon: float = 0.0) -> np.ndarray:
    if epsilon == 0:
        return (p - 1.0) * np.abs(g) ** (p - 2.0)
    s = g * g + epsilon * epsilon
    return s ** ((p - 2.0) / 2.0) + (p - 2.0) * g * g * s ** ((p - 4.0) / 2.0)


def apply_p_laplacian(values: np.ndarray, spacing, p: float, epsilon: float = 0.0) -> np.ndarray:
    """Array-level kernel of :func:`p_laplacian_apply`."""
    out = np.zeros_like(values, dtype=float)
    for axis, (g, h) in enumerate(zip(face_gradients(values, spacing), spacing)):
        out += np.diff(flux(g, p, epsilon), axis=axis) / h
    return out


def p_laplacian_apply(field: GridField, p: float, epsilon: float = 0.0) -> GridField:
    """Discrete div(|grad u|^{p-2} grad u) with homogeneous Dirichlet data.

    In 1D the i-th entry is (phi(g_{i+1/2}) - phi(g_{i-1/2})) / h with
    g_{i+1/2} = (u_{i+1} - u_i)/h; in 2D the same is summed over both axes.
    """
    if p < 2:
        raise ConfigError(f"p must be >= 2, got {p}", "p")
    return GridField(field.grid, apply_p_laplacian(field.values, field.grid.spacing, p, epsilon))


def integrate(values, grid: Grid) -> float:
    """Midpoint rule h^N * sum(values); the boundary contributes nothing."""
    return grid.cell_volume * float(np.sum(values))


def lp_norm(field: GridField, k: float) -> float:
    """Discrete L^k norm; ``k = math.inf`` gives the max norm."""
    if math.isinf(k):
        return float(np.max(np.abs(field.values))) if field.values.size else 0.0
    if k < 1:
        raise ConfigError(f"norm exponent must be >= 1, got {k}", "k")
    return (field.grid.cell_volume * float(np.sum(np.abs(field.values) ** k))) ** (1.0 / k)


def w1p_seminorm(field: GridField, p: float) -> float:
    """(h^N * sum over faces |forward difference / h|^p)^(1/p), boundary faces included."""
    if p < 2:
        raise ConfigError(f"p must be >= 2, got {p}", "p")
    total = sum(float(np.sum(np.abs(g) ** p)) for g in face_gradients(field.values, field.grid.spacing))
    return (field.grid.cell_volume * total) ** (1.0 / p)


@lru_cache(maxsize=32)
def difference_operators(grid: Grid) -> tuple[sp.csr_matrix, ...]:
    """Sparse face-gradient matrices D_a (faces x nodes), one per axis.

    With these, A_p u = -sum_a D_a^T phi(D_a u).
    """
    mats = []
    for axis, (n, h) in enumerate(zip(grid.points_per_axis, grid.spacing)):
        d1 = sp.diags([np.ones(n), -np.ones(n)], [0, -1], shape=(n + 1, n)) / h
        factors = [sp.identity(m) for m in grid.points_per_axis]
        factors[axis] = d1
        op = factors[0]
        for fac in factors[1:]:
            op = sp.kron(op, fac)
        mats.append(sp.csr_matrix(op))
    return tuple(mats)


def p_laplacian_jacobian(values: np.ndarray, grid: Grid, p: float, epsilon: float = 0.0) -> sp.csr_matrix:
    """Jacobian of the discrete p-Laplacian at ``values`` (symmetric, negative semidefinite)."""
    u = values.reshape(-1)
    jac = None
    for d in difference_operators(grid):
        term = d.T @ sp.diags(flux_derivative(d @ u, p, epsilon)) @ d
        jac = term if jac is None else jac + term
    return sp.csr_matrix(-jac)
