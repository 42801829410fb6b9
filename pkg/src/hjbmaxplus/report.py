"""Evaluation grids and per-iteration solve reports."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UsageError

DEFAULT_GRID_CAP = 1_000_000


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid on the box ``[lo, hi]`` with `points_per_axis` nodes per axis."""

    lo: tuple
    hi: tuple
    points_per_axis: int = 41
    cap: int = DEFAULT_GRID_CAP

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise UsageError("grid bounds must have the same length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise UsageError("grid requires lo < hi componentwise")
        if self.points_per_axis < 1:
            raise UsageError("points_per_axis must be positive")
        if self.points_per_axis ** len(lo) > self.cap:
            raise UsageError(
                f"grid has {self.points_per_axis}^{len(lo)} points, above the cap {self.cap}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def box(cls, n: int, lo: float = -2.0, hi: float = 2.0, points_per_axis: int = 41):
        return cls((lo,) * n, (hi,) * n, points_per_axis)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def points(self) -> np.ndarray:
        """All grid nodes as an array of shape (points_per_axis**n, n)."""
        if self.points_per_axis == 1:
            axes = [np.array([0.5 * (a + b)]) for a, b in zip(self.lo, self.hi)]
        else:
            axes = [np.linspace(a, b, self.points_per_axis) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def radius(self) -> float:
        return float(np.sqrt(sum(max(a * a, b * b) for a, b in zip(self.lo, self.hi))))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    basis_size: int
    pruned: int
    residual: Optional[float]
    wall_ns: int


@dataclass
class SolveReport:
    """Trace of a solve: one record per iteration, including iteration 0."""

    tau: float
    steps: int
    prune_rule: str
    prune_order: float
    prune_const: float
    integrator: str = "rk4"
    substeps_per_unit_time: int = 1000
    seed: Optional[int] = None
    records: list = field(default_factory=list)

    def config(self) -> dict:
        return {
            "tau": self.tau, "steps": self.steps, "prune_rule": self.prune_rule,
            "prune_order": self.prune_order, "prune_const": self.prune_const,
            "integrator": self.integrator,
            "substeps_per_unit_time": self.substeps_per_unit_time, "seed": self.seed,
        }

    @property
    def residuals(self) -> np.ndarray:
        if any(r.residual is None for r in self.records):
            raise UsageError("report has no residuals; solve with a residual grid")
        return np.array([r.residual for r in self.records])

    @property
    def basis_sizes(self) -> np.ndarray:
        return np.array([r.basis_size for r in self.records])

    @property
    def horizons(self) -> np.ndarray:
        return self.tau * np.arange(len(self.records))
