"""Training-stage estimation for group-wise Gaussian process discriminants.

Per sensitive group this module estimates class probabilities, class mean
curves, the pooled within-group covariance kernel, its eigen-system on the
grid, and the projected mean coefficients. Together these define the
truncated log density-ratio score

    log r_a(x) = sum_j (t1_j - t0_j) * (<x, phi_j> - t0_j) / lam_j
                 - 0.5 * sum_j (t1_j - t0_j)^2 / lam_j

where t_yj are the class mean coefficients in the estimated eigenbasis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DegenerateCellError, GridMismatchError, TruncationError
from .fnspace import CELLS, Dataset, FunctionSample, Grid, l2_inner


def estimate_priors(train: Dataset) -> np.ndarray:
    """Joint cell probabilities ``pi[a, y] = n_ay / n``; every cell must be nonempty."""
    counts = train.counts()
    for (a, y), c in counts.items():
        if c == 0:
            raise DegenerateCellError(f"cell (a={a}, y={y}) is empty")
    pi = np.zeros((2, 2))
    for (a, y), c in counts.items():
        pi[a, y] = c / train.n
    return pi


def estimate_means(train: Dataset) -> dict[tuple[int, int], FunctionSample]:
    """Pointwise sample mean curve per (a, y) cell."""
    out = {}
    for a, y in CELLS:
        rows = train.cell_rows(a, y)
        if rows.shape[0] == 0:
            raise DegenerateCellError(f"cell (a={a}, y={y}) is empty")
        out[(a, y)] = FunctionSample(train.grid, rows.mean(axis=0))
    return out


def estimate_pooled_covariance(train: Dataset, a: int) -> np.ndarray:
    """Within-class covariances of group ``a`` pooled with weights n_ay / n_a.

    Each class covariance uses the unbiased divisor (n_ay - 1), so both cells
    need at least two samples.
    """
    n_a = 0
    cov = np.zeros((len(train.grid), len(train.grid)))
    parts = []
    for y in (0, 1):
        rows = train.cell_rows(a, y)
        if rows.shape[0] < 2:
            raise DegenerateCellError(
                f"cell (a={a}, y={y}) has {rows.shape[0]} samples, needs >= 2 for covariance"
            )
        centered = rows - rows.mean(axis=0)
        parts.append((rows.shape[0], centered.T @ centered / (rows.shape[0] - 1)))
        n_a += rows.shape[0]
    for n_ay, c in parts:
        cov += (n_ay / n_a) * c
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues and L2-orthonormal eigenfunctions of a covariance kernel on a grid.

    ``functions`` holds one eigenfunction per row, aligned with ``grid.points``
    and normalised under the grid quadrature. Eigenvalues are nonincreasing
    and clamped at zero.
    """

    eigenvalues: np.ndarray
    functions: np.ndarray
    grid: Grid

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if np.any(lam < 0) or np.any(np.diff(lam) > 1e-12):
            raise ValueError("eigenvalues must be nonnegative and nonincreasing")

    def function(self, j: int) -> FunctionSample:
        return FunctionSample(self.grid, self.functions[j])

    @property
    def floor(self) -> float:
        """Smallest usable eigenvalue; components at or below are never used."""
        lead = self.eigenvalues[0] if self.eigenvalues.size else 0.0
        return max(lead, 1.0) * 1e-10

    @property
    def n_usable(self) -> int:
        return int(np.sum(self.eigenvalues > self.floor))


def eigendecompose(kernel: np.ndarray, grid: Grid, n_components: int | None = None) -> EigenSystem:
    """Discretised Mercer decomposition of a symmetric kernel matrix.

    Solves the symmetric weighted problem W^(1/2) K W^(1/2) so eigenfunctions
    phi = W^(-1/2) v come out exactly orthonormal under the grid quadrature.
    Negative numerical eigenvalues are clamped to zero and each eigenfunction
    gets a deterministic sign: its largest-magnitude coordinate is positive.
    """
    m = len(grid)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape != (m, m):
        raise ValueError("kernel must be square and grid-aligned")
    if np.max(np.abs(kernel - kernel.T)) > 1e-8 * max(1.0, np.max(np.abs(kernel))):
        raise ValueError("kernel must be symmetric")
    if n_components is None:
        n_components = min(50, m - 1)
    n_components = min(n_components, m)

    sqrt_w = np.sqrt(grid.weights)
    sym = sqrt_w[:, None] * kernel * sqrt_w[None, :]
    lam, vec = scipy.linalg.eigh(sym)
    order = np.argsort(lam)[::-1][:n_components]
    lam = np.clip(lam[order], 0.0, None)
    funcs = (vec[:, order] / sqrt_w[:, None]).T

    for row in funcs:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return EigenSystem(eigenvalues=lam, functions=funcs, grid=grid)


def project_mean_coeffs(
    means: dict[tuple[int, int], FunctionSample], eigen: EigenSystem, a: int, n_components: int
) -> np.ndarray:
    """Coefficients ``theta[y, j] = <mean_(a,y), phi_j>`` for j below the truncation."""
    if n_components > eigen.eigenvalues.size:
        raise ValueError("truncation exceeds retained components")
    theta = np.zeros((2, n_components))
    for y in (0, 1):
        for j in range(n_components):
            theta[y, j] = l2_inner(means[(a, y)], eigen.function(j))
    return theta


@dataclass(frozen=True)
class GroupModel:
    """Everything estimated for one sensitive group.

    ``pi`` are the joint cell probabilities (pi_a0, pi_a1) relative to the
    full training size, ``theta`` the (2, n_components) projected mean
    coefficients.
    """

    a: int
    pi: np.ndarray
    means: tuple[FunctionSample, FunctionSample]
    cov: np.ndarray
    eigen: EigenSystem
    theta: np.ndarray
    n_components: int

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one component")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-10 * max(1.0, np.max(np.abs(self.cov))):
            raise ValueError("covariance must be symmetric")
        lam = self.eigen.eigenvalues[: self.n_components]
        if np.any(lam <= self.eigen.floor):
            raise TruncationError(
                f"group {self.a}: eigenvalue at requested truncation {self.n_components} "
                f"is at or below the floor; lower the truncation"
            )


@dataclass(frozen=True)
class ScoreFunctional:
    """Affine functional computing the truncated log density ratio for one group.

    log r(x) = sum_j coef_j * <x, phi_j> + offset, with
    coef_j = (theta_1j - theta_0j) / lam_j and the offset folding in the
    class-0 centering and the quadratic normaliser.
    """

    a: int
    coef: np.ndarray
    offset: float
    functions: np.ndarray
    grid: Grid

    @classmethod
    def from_group_model(cls, model: GroupModel) -> "ScoreFunctional":
        j = model.n_components
        lam = model.eigen.eigenvalues[:j]
        diff = model.theta[1, :j] - model.theta[0, :j]
        coef = diff / lam
        offset = -float(coef @ model.theta[0, :j]) - 0.5 * float(np.sum(diff**2 / lam))
        if not np.all(np.isfinite(coef)):
            raise TruncationError(f"group {model.a}: non-finite score coefficients")
        return cls(
            a=model.a,
            coef=coef,
            offset=offset,
            functions=model.eigen.functions[:j],
            grid=model.eigen.grid,
        )

    def log_scores(self, rows: np.ndarray) -> np.ndarray:
        """Vectorised log density ratio for a row matrix of function values."""
        proj = (rows * self.grid.weights[None, :]) @ self.functions.T
        return proj @ self.coef + self.offset

    def log_score(self, x: FunctionSample) -> float:
        if x.grid is not self.grid and x.grid != self.grid:
            raise GridMismatchError("sample is not on the model grid")
        return float(self.log_scores(x.values[None, :])[0])


def log_density_ratio(score: ScoreFunctional, x: FunctionSample) -> float:
    """Log of the estimated density ratio between the two class laws at ``x``."""
    return score.log_score(x)


def fit_group_models(
    train: Dataset, n_components: int, n_components_max: int | None = None
) -> tuple[np.ndarray, dict[int, GroupModel], dict[int, ScoreFunctional]]:
    """Run the full training stage and return priors, per-group models and scores."""
    pi = estimate_priors(train)
    means = estimate_means(train)
    models: dict[int, GroupModel] = {}
    scores: dict[int, ScoreFunctional] = {}
    for a in (0, 1):
        cov = estimate_pooled_covariance(train, a)
        eigen = eigendecompose(cov, train.grid, n_components_max)
        if n_components > eigen.n_usable:
            raise TruncationError(
                f"group {a}: only {eigen.n_usable} usable components, requested {n_components}"
            )
        theta = project_mean_coeffs(means, eigen, a, n_components)
        models[a] = GroupModel(
            a=a,
            pi=pi[a].copy(),
            means=(means[(a, 0)], means[(a, 1)]),
            cov=cov,
            eigen=eigen,
            theta=theta,
            n_components=n_components,
        )
        scores[a] = ScoreFunctional.from_group_model(models[a])
    return pi, models, scores
