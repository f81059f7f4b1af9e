"""Reproducible synthetic functional data for the simulation study.

Curves are truncated basis expansions X(t) = mu_ay(t) + sum_k z_ak phi_k(t)
with the cosine basis phi_k(t) = sqrt(2) cos(k pi t), group-wise eigenvalues
lam_0k = k^-2 and lam_1k = 2 k^-2, and mean curves

    mu_00 = mu_10 = 0,
    mu_01 = sum_k 0.8 (-1)^k k^-beta phi_k,
    mu_11 = sum_k sqrt(2) (-1)^k k^-beta phi_k.

Scores z_ak are either N(0, lam_ak) or sqrt(lam_ak) * Unif(-sqrt(3), sqrt(3))
(same first two moments, non-Gaussian higher moments). Streams come from a
counter-based generator keyed by (seed, purpose...), so parallel replications
reproduce identically regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fnspace import Dataset, Grid, cosine_basis, uniform_grid
from .rng import derive_seed, stream

FAMILIES = ("gaussian", "uniform")

DEFAULT_GRID_SIZE = 513
DEFAULT_N_COMPONENTS = 50
DEFAULT_N_TEST = 5000


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of one simulation scenario."""

    beta: float
    p_a1: float
    p_y1_a0: float
    p_y1_a1: float
    family: str = "gaussian"
    n_train: int = 2000
    n_test: int = DEFAULT_N_TEST
    grid_size: int = DEFAULT_GRID_SIZE
    n_components: int = DEFAULT_N_COMPONENTS
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown score family {self.family!r}")
        for p in (self.p_a1, self.p_y1_a0, self.p_y1_a1):
            if not 0.0 < p < 1.0:
                raise ValueError("probabilities must lie strictly in (0, 1)")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    def grid(self) -> Grid:
        return uniform_grid(self.grid_size)

    def eigenvalues(self) -> np.ndarray:
        """(2, K) group-wise eigenvalues."""
        k = np.arange(1, self.n_components + 1, dtype=float)
        return np.stack([k**-2.0, 2.0 * k**-2.0])

    def mean_coeffs(self) -> np.ndarray:
        """(2, 2, K) basis coefficients of the four class means, indexed [a, y, k]."""
        k = np.arange(1, self.n_components + 1, dtype=float)
        decay = (-1.0) ** np.arange(1, self.n_components + 1) * k**-self.beta
        theta = np.zeros((2, 2, self.n_components))
        theta[0, 1] = 0.8 * decay
        theta[1, 1] = np.sqrt(2.0) * decay
        return theta

    def cell_probabilities(self) -> np.ndarray:
        """(2, 2) joint law of (A, Y)."""
        pa = np.array([1.0 - self.p_a1, self.p_a1])
        py1 = np.array([self.p_y1_a0, self.p_y1_a1])
        return np.stack([pa * (1.0 - py1), pa * py1], axis=1)


_PRESETS = {
    "main-beta1.5": dict(beta=1.5, p_a1=0.7, p_y1_a0=0.4, p_y1_a1=0.7, family="gaussian"),
    "main-beta2": dict(beta=2.0, p_a1=0.7, p_y1_a0=0.4, p_y1_a1=0.7, family="gaussian"),
    "nongauss-beta1.5": dict(beta=1.5, p_a1=0.7, p_y1_a0=0.4, p_y1_a1=0.7, family="uniform"),
    "perfect-I-beta0.5": dict(beta=0.5, p_a1=0.7, p_y1_a0=0.4, p_y1_a1=0.7, family="gaussian"),
    "perfect-II-beta0.5": dict(beta=0.5, p_a1=0.7, p_y1_a0=0.5, p_y1_a1=0.5, family="gaussian"),
}


def preset(name: str, n_train: int = 2000, seed: int = 0) -> ScenarioConfig:
    """Named scenario; the canonical sweep uses n_train in {1000, 2000, 5000}."""
    key = name.replace("β", "beta")  # accept the Greek spelling
    if key not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    return ScenarioConfig(n_train=n_train, seed=seed, **_PRESETS[key])


def preset_names() -> tuple[str, ...]:
    return tuple(_PRESETS)


def generate(
    cfg: ScenarioConfig, n: int | None = None, seed: int | None = None
) -> Dataset:
    """Draw ``n`` labeled curves (default the configured training size).

    (A, Y) come from the joint cell law, scores from the configured family;
    identical (cfg, n, seed) gives an identical dataset.
    """
    n = cfg.n_train if n is None else int(n)
    seed = cfg.seed if seed is None else int(seed)
    rng = stream(seed, 0)

    a = (rng.random(n) < cfg.p_a1).astype(int)
    py1 = np.where(a == 1, cfg.p_y1_a1, cfg.p_y1_a0)
    y = (rng.random(n) < py1).astype(int)
    x = _curves(cfg, a, y, rng)
    return Dataset(grid=cfg.grid(), x=x, a=a, y=y)


def generate_with_counts(
    cfg: ScenarioConfig, counts: dict[tuple[int, int], int], seed: int | None = None
) -> Dataset:
    """Draw curves with exact per-cell sample counts (deterministic layout)."""
    seed = cfg.seed if seed is None else int(seed)
    rng = stream(seed, 1)
    a = np.concatenate([np.full(c, key[0], dtype=int) for key, c in sorted(counts.items())])
    y = np.concatenate([np.full(c, key[1], dtype=int) for key, c in sorted(counts.items())])
    x = _curves(cfg, a, y, rng)
    return Dataset(grid=cfg.grid(), x=x, a=a, y=y)


def _curves(cfg: ScenarioConfig, a: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = a.size
    lam = cfg.eigenvalues()[a]  # (n, K)
    if cfg.family == "gaussian":
        z = rng.standard_normal((n, cfg.n_components)) * np.sqrt(lam)
    else:
        root3 = np.sqrt(3.0)
        z = rng.uniform(-root3, root3, (n, cfg.n_components)) * np.sqrt(lam)
    basis = cosine_basis(cfg.grid(), cfg.n_components)
    theta = cfg.mean_coeffs()[a, y]  # (n, K)
    return (theta + z) @ basis


def train_test(cfg: ScenarioConfig, replication: int = 0) -> tuple[Dataset, Dataset]:
    """Fresh train/test pair for one replication, derived from the scenario seed."""
    train = generate(cfg, cfg.n_train, seed=derive_seed(cfg.seed, replication, 0))
    test = generate(cfg, cfg.n_test, seed=derive_seed(cfg.seed, replication, 1))
    return train, test
