"""Grids, function samples and L2 quadrature on [0, 1].

Every inner product, norm and projection in the package reduces to a
weighted sum on a shared grid. The default quadrature is the trapezoid
rule on a uniform grid, which is exact enough for the finite cosine
expansions used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCellError, GridMismatchError

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Quadrature grid on [0, 1]: ascending points plus positive weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        object.__setattr__(self, "weights", _readonly(self.weights))
        p, w = self.points, self.weights
        if p.ndim != 1 or p.size < 3 or w.shape != p.shape:
            raise ValueError("grid needs >= 3 points and matching weights")
        if not (np.all(np.diff(p) > 0) and p[0] == 0.0 and p[-1] == 1.0):
            raise ValueError("grid points must ascend strictly from 0 to 1")
        if not np.all(w > 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return isinstance(other, Grid) and np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.points.size, float(self.points[1]), float(self.weights[0])))


def uniform_grid(m: int) -> Grid:
    """Uniform grid of ``m >= 3`` points with trapezoid weights (h/2, h, ..., h, h/2)."""
    if m < 3:
        raise ValueError(f"need at least 3 grid points, got {m}")
    h = 1.0 / (m - 1)
    w = np.full(m, h)
    w[0] = w[-1] = h / 2.0
    return Grid(points=np.linspace(0.0, 1.0, m), weights=w)


@dataclass(frozen=True)
class FunctionSample:
    """A real-valued function observed on a shared grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.shape != self.grid.points.shape:
            raise ValueError("values length must match grid length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")


def _require_same_grid(f: FunctionSample, g: FunctionSample) -> None:
    if f.grid is not g.grid and f.grid != g.grid:
        raise GridMismatchError("samples do not share a grid")


def l2_inner(f: FunctionSample, g: FunctionSample) -> float:
    """Trapezoid approximation of the L2 inner product of two samples."""
    _require_same_grid(f, g)
    return float(np.sum(f.grid.weights * f.values * g.values))


def l2_norm(f: FunctionSample) -> float:
    """L2 norm, sqrt of the self inner product."""
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))


def cosine_basis(grid: Grid, n_components: int) -> np.ndarray:
    """Rows k = 1..n of the orthonormal cosine basis sqrt(2) cos(k pi t) on the grid."""
    k = np.arange(1, n_components + 1)[:, None]
    return np.sqrt(2.0) * np.cos(k * np.pi * grid.points[None, :])


@dataclass(frozen=True)
class LabeledSample:
    """A function sample with binary sensitive attribute ``a`` and label ``y``."""

    x: FunctionSample
    a: int
    y: int

    def __post_init__(self):
        if self.a not in (0, 1) or self.y not in (0, 1):
            raise ValueError("a and y must be 0 or 1")


@dataclass(frozen=True)
class Dataset:
    """Labeled function samples sharing one grid, stored row-wise for vector math.

    ``x`` has one row per sample aligned with ``grid.points``; ``a`` and ``y``
    are the matching attribute/label vectors.
    """

    grid: Grid
    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_2d(self.x)))
        object.__setattr__(self, "a", _readonly(self.a).astype(int))
        object.__setattr__(self, "y", _readonly(self.y).astype(int))
        n = self.x.shape[0]
        if self.x.shape[1] != len(self.grid):
            raise ValueError("sample columns must match grid length")
        if self.a.shape != (n,) or self.y.shape != (n,):
            raise ValueError("a and y must have one entry per sample row")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("sample values must be finite")
        if not (np.isin(self.a, (0, 1)).all() and np.isin(self.y, (0, 1)).all()):
            raise ValueError("a and y must be binary")

    @classmethod
    def from_samples(cls, samples: list[LabeledSample]) -> "Dataset":
        if not samples:
            raise ValueError("empty sample list")
        grid = samples[0].x.grid
        for s in samples[1:]:
            _require_same_grid(samples[0].x, s.x)
        return cls(
            grid=grid,
            x=np.stack([s.x.values for s in samples]),
            a=np.array([s.a for s in samples]),
            y=np.array([s.y for s in samples]),
        )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(
            x=FunctionSample(self.grid, self.x[i]), a=int(self.a[i]), y=int(self.y[i])
        )

    def counts(self) -> dict[tuple[int, int], int]:
        return {(a, y): int(np.sum((self.a == a) & (self.y == y))) for a, y in CELLS}

    def cell_rows(self, a: int, y: int) -> np.ndarray:
        """Row matrix of the samples in cell (a, y); may be empty."""
        return self.x[(self.a == a) & (self.y == y)]

    def cell_indices(self, a: int, y: int) -> np.ndarray:
        return np.flatnonzero((self.a == a) & (self.y == y))

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(grid=self.grid, x=self.x[idx], a=self.a[idx], y=self.y[idx])

    def require_cells(self, min_count: int = 1) -> None:
        for (a, y), c in self.counts().items():
            if c < min_count:
                raise DegenerateCellError(
                    f"cell (a={a}, y={y}) has {c} samples, needs >= {min_count}"
                )
