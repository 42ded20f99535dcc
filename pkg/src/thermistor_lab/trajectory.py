"""Time series of norms and diagnostics produced by every solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

COMPLETED = "completed"
BLEW_UP = "blew-up"


def norm_label(k: float) -> str:
    if math.isinf(k):
        return "inf"
    return f"{k:g}"


@dataclass
class TrajectoryRecord:
    """Sampled trajectory of one run.

    ``norms`` maps a norm exponent (``math.inf`` for the max norm) to one
    value per sample time. ``gamma_exponent`` is k0/p, the power in the
    |u|^gamma u regularity statement. ``snapshots`` maps a sample index to the
    nodal field at that time; ``coordinates`` are the matching node arrays.
    """

    p: float
    k0: float
    times: list[float] = field(default_factory=list)
    norms: dict[float, list[float]] = field(default_factory=dict)
    w1p: list[float] = field(default_factory=list)
    integral_f: list[float] = field(default_factory=list)
    source_max: list[float] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    coordinates: tuple[np.ndarray, ...] | None = None
    spacing: tuple[float, ...] | None = None
    status: str = COMPLETED
    blowup_time: float | None = None
    blowup_step: int | None = None
    steps: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def gamma_exponent(self) -> float:
        return self.k0 / self.p

    @property
    def norm_keys(self) -> list[float]:
        return list(self.norms)

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    def norm(self, k: float) -> np.ndarray:
        return np.asarray(self.norms[float(k)])

    def append(self, t: float, norms: dict[float, float], w1p: float, integral_f: float,
               source_max: float) -> int:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"sample times must increase strictly ({t} after {self.times[-1]})")
        self.times.append(float(t))
        for k, v in norms.items():
            self.norms.setdefault(float(k), []).append(float(v))
        self.w1p.append(float(w1p))
        self.integral_f.append(float(integral_f))
        self.source_max.append(float(source_max))
        return len(self.times) - 1

    def window(self, t_from: float, t_to: float = math.inf) -> np.ndarray:
        """Boolean mask of samples with t_from <= t <= t_to."""
        t = np.asarray(self.times)
        return (t >= t_from) & (t <= t_to)

    def all_finite(self) -> bool:
        arrays = [self.w1p, self.integral_f, *self.norms.values()]
        return all(np.all(np.isfinite(a)) for a in arrays)
