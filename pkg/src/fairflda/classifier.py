"""End-to-end fairness-constrained functional discriminant classifiers.

The pipeline splits the data in two stratified halves, estimates the
group-wise score functionals on one half and calibrates the threshold shift
on the other, then (by default) swaps the roles and averages the two
resulting decision rules, giving decision values in {0, 1/2, 1}.

Three variants share the estimation stage and differ only in calibration:

* ``flda``   unconstrained rule, shift fixed at zero;
* ``fair``   shift solved against the requested budget;
* ``fairc``  shift solved against the budget shrunk by a deviation constant,
             for high-probability disparity control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fairness, fpca
from .exceptions import DegenerateCellError, TruncationError
from .fairness import CalibrationScores, DisparityCurve, DisparitySpec, ThresholdSolution
from .fnspace import CELLS, Dataset, FunctionSample
from .rng import derive_seed, stream

VARIANTS = ("flda", "fair", "fairc")

# unit steps while components are cheap to compare, then one coarse level;
# eigenfunction estimates beyond that are too noisy to carry the threshold
# calibration even when they still shave training error
DEFAULT_CV_GRID = (1, 2, 3, 4, 5, 6, 7, 8, 20)


@dataclass(frozen=True)
class FitConfig:
    """Everything a fit needs besides the data.

    ``n_components`` fixes the score truncation; leave it None to select by
    cross-validated error of the unconstrained rule. ``kappa`` overrides the
    deviation constant of the calibrated variant (otherwise derived from the
    calibration-half size). ``delta`` may be ``inf`` for an unconstrained run.
    """

    kind: str = "DO"
    delta: float = 0.1
    variant: str = "fair"
    rho: float = 0.05
    n_components: int | None = None
    cv_grid: tuple[int, ...] = DEFAULT_CV_GRID
    cv_folds: int = 5
    seed: int = 0
    cross_fit: bool = True
    kappa: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.kind not in fairness.KINDS:
            raise ValueError(f"unknown disparity kind {self.kind!r}")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")


def split_halves(data: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified random equal split; odd cells send the extra sample to the first half.

    Every (a, y) cell must keep at least two samples on each side, since the
    halves swap estimation and calibration roles under cross-fitting.
    """
    counts = data.counts()
    for (a, y), c in counts.items():
        if c < 4:
            raise DegenerateCellError(
                f"cell (a={a}, y={y}) has {c} samples; need >= 4 to keep 2 per half"
            )
    rng = stream(seed, 101)
    first, second = [], []
    for a, y in CELLS:
        idx = data.cell_indices(a, y)
        perm = rng.permutation(idx.size)
        n1 = (idx.size + 1) // 2
        first.append(idx[perm[:n1]])
        second.append(idx[perm[n1:]])
    i1 = np.sort(np.concatenate(first))
    i2 = np.sort(np.concatenate(second))
    return data.subset(i1), data.subset(i2)


@dataclass(frozen=True)
class Stage1Fit:
    """Estimation-stage output for one (train, calibrate) ordering of the halves.

    ``models`` and ``cal_scores`` are None on a deserialized classifier, which
    only needs the score functionals and priors to predict.
    """

    pi: np.ndarray
    models: dict[int, fpca.GroupModel] | None
    scores: dict[int, fpca.ScoreFunctional]
    cal_scores: CalibrationScores | None
    n_cal: int
    n_components: int


def _stage1(train: Dataset, cal: Dataset, n_components: int) -> Stage1Fit:
    pi, models, scores = fpca.fit_group_models(train, n_components)
    logs = {}
    for a, y in CELLS:
        rows = cal.cell_rows(a, y)
        logs[(a, y)] = scores[a].log_scores(rows) if rows.shape[0] else np.empty(0)
    return Stage1Fit(
        pi=pi,
        models=models,
        scores=scores,
        cal_scores=CalibrationScores(logs),
        n_cal=cal.n,
        n_components=n_components,
    )


@dataclass(frozen=True)
class HalfClassifier:
    """One half's decision rule: score functionals plus a calibrated shift."""

    stage1: Stage1Fit
    spec: DisparitySpec
    tau: float
    solution: ThresholdSolution | None
    kappa: float
    delta_eff: float

    def log_scores(self, rows: np.ndarray, a: int) -> np.ndarray:
        return self.stage1.scores[a].log_scores(rows)

    def decision_values(self, data: Dataset) -> np.ndarray:
        out = np.zeros(data.n)
        for a in (0, 1):
            mask = data.a == a
            if not np.any(mask):
                continue
            logs = self.log_scores(data.x[mask], a)
            out[mask] = fairness.decision_values(logs, a, self.spec, self.stage1.pi, self.tau)
        return out


def _calibrate_half(s1: Stage1Fit, cfg: FitConfig) -> HalfClassifier:
    spec = fairness.bilinear_coefficients(cfg.kind, s1.pi)
    if cfg.variant == "flda" or math.isinf(cfg.delta):
        return HalfClassifier(s1, spec, 0.0, None, 0.0, math.inf)
    if cfg.variant == "fairc":
        kappa = cfg.kappa if cfg.kappa is not None else fairness.dkw_calibration_constant(
            s1.n_cal, cfg.rho, cfg.delta
        )
    else:
        kappa = 0.0
    delta_eff = max(cfg.delta - kappa, 0.0)
    sol = DisparityCurve(s1.cal_scores, spec, s1.pi).solve(delta_eff)
    return HalfClassifier(s1, spec, sol.tau, sol, kappa, delta_eff)


@dataclass(frozen=True)
class FittedFairClassifier:
    """Cross-fitted classifier; decision values live in {0, 1/2, 1}."""

    halves: tuple[HalfClassifier, ...]
    config: FitConfig
    n_components: int

    def decision_values(self, data: Dataset) -> np.ndarray:
        vals = np.zeros(data.n)
        for h in self.halves:
            vals += h.decision_values(data)
        return vals / len(self.halves)

    def predict(self, x: FunctionSample, a: int) -> float:
        data = Dataset(grid=x.grid, x=x.values[None, :], a=np.array([a]), y=np.array([0]))
        return float(self.decision_values(data)[0])

    @property
    def feasible(self) -> bool:
        return all(h.solution is None or h.solution.feasible for h in self.halves)

    def manifest(self) -> dict:
        out = {
            "variant": self.config.variant,
            "disparity": self.config.kind,
            "delta": self.config.delta,
            "seed": self.config.seed,
            "cross_fit": self.config.cross_fit,
            "n_components": self.n_components,
        }
        for i, h in enumerate(self.halves, start=1):
            out[f"half{i}.tau"] = h.tau
            out[f"half{i}.kappa"] = h.kappa
            out[f"half{i}.delta_eff"] = h.delta_eff
            out[f"half{i}.n_cal"] = h.stage1.n_cal
            if h.solution is not None:
                out[f"half{i}.achieved"] = h.solution.achieved
                out[f"half{i}.feasible"] = h.solution.feasible
                out[f"half{i}.candidates_scanned"] = h.solution.candidates_scanned
        return out

    def manifest_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.manifest().items()) + "\n"


def fit(data: Dataset, cfg: FitConfig) -> FittedFairClassifier:
    """Run the full pipeline: split, estimate, calibrate, cross-fit."""
    n_components = cfg.n_components
    if n_components is None:
        n_components = select_truncation_cv(
            data, cfg.cv_grid, folds=cfg.cv_folds, seed=derive_seed(cfg.seed, 7)
        )
    d1, d2 = split_halves(data, cfg.seed)
    pairs = [(d1, d2), (d2, d1)] if cfg.cross_fit else [(d1, d2)]
    halves = tuple(_calibrate_half(_stage1(tr, ca, n_components), cfg) for tr, ca in pairs)
    return FittedFairClassifier(halves=halves, config=cfg, n_components=n_components)


def fit_stage1(data: Dataset, n_components: int, seed: int, cross_fit: bool = True) -> tuple[Stage1Fit, ...]:
    """Estimation stage only, for sweeping several budgets over one fit."""
    d1, d2 = split_halves(data, seed)
    pairs = [(d1, d2), (d2, d1)] if cross_fit else [(d1, d2)]
    return tuple(_stage1(tr, ca, n_components) for tr, ca in pairs)


def calibrate(stages: tuple[Stage1Fit, ...], cfg: FitConfig) -> FittedFairClassifier:
    """Calibration stage on precomputed estimation-stage output."""
    halves = tuple(_calibrate_half(s1, cfg) for s1 in stages)
    return FittedFairClassifier(halves=halves, config=cfg, n_components=stages[0].n_components)


def _stratified_folds(data: Dataset, folds: int, seed: int) -> np.ndarray:
    """Fold label per row, filled round-robin within every (a, y) cell."""
    rng = stream(seed, 202)
    labels = np.zeros(data.n, dtype=int)
    for a, y in CELLS:
        idx = data.cell_indices(a, y)
        perm = rng.permutation(idx.size)
        labels[idx[perm]] = np.arange(idx.size) % folds
    return labels


def select_truncation_cv(
    data: Dataset,
    grid: tuple[int, ...] = DEFAULT_CV_GRID,
    folds: int = 5,
    seed: int = 0,
) -> int:
    """Truncation level minimising cross-validated error of the unconstrained rule.

    One estimation per fold at the largest usable level; smaller levels reuse
    it through cumulative scores. Ties resolve to the smallest level. Folds
    shrink automatically if a cell is too small to keep two training samples
    per fold.
    """
    if not grid:
        raise ValueError("empty truncation grid")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    grid = tuple(sorted(set(int(j) for j in grid)))
    if grid[0] < 1:
        raise ValueError("truncation levels must be positive")

    counts = data.counts()
    min_cell = min(counts.values())
    if min_cell < 3:
        raise DegenerateCellError("cross-validation needs at least 3 samples per cell")
    # leave-out share per fold is at most ceil(c/folds); keep 2 in training
    while folds > 2 and min_cell - math.ceil(min_cell / folds) < 2:
        folds -= 1
    if min_cell - math.ceil(min_cell / folds) < 2:
        raise DegenerateCellError("cells too small for any usable fold split")

    labels = _stratified_folds(data, folds, seed)
    j_hi = max(grid)
    errors = np.zeros((folds, len(grid)))
    usable = np.full(len(grid), True)
    for f in range(folds):
        train = data.subset(np.flatnonzero(labels != f))
        test = data.subset(np.flatnonzero(labels == f))
        pi = fpca.estimate_priors(train)
        means = fpca.estimate_means(train)
        fold_err = np.zeros((len(grid),))
        for a in (0, 1):
            cov = fpca.estimate_pooled_covariance(train, a)
            eigen = fpca.eigendecompose(cov, train.grid, min(j_hi, len(train.grid) - 1))
            j_use = min(j_hi, eigen.n_usable)
            usable &= np.array([j <= j_use for j in grid])
            if not usable.any():
                raise TruncationError("no truncation level in the grid is usable")
            theta = fpca.project_mean_coeffs(means, eigen, a, j_use)
            lam = eigen.eigenvalues[:j_use]
            diff = theta[1] - theta[0]
            mask = test.a == a
            rows = test.x[mask]
            proj = (rows * test.grid.weights[None, :]) @ eigen.functions[:j_use].T
            contrib = (proj - theta[0][None, :]) * (diff / lam)[None, :]
            cum = np.cumsum(contrib, axis=1) - 0.5 * np.cumsum(diff**2 / lam)[None, :]
            threshold = math.log(pi[a, 0] / pi[a, 1])
            y_test = test.y[mask]
            for gi, j in enumerate(grid):
                if j > j_use:
                    continue
                dec = cum[:, j - 1] > threshold
                fold_err[gi] += np.sum(np.where(y_test == 0, dec, ~dec))
        errors[f] = fold_err / test.n
    mean_err = errors.mean(axis=0)
    mean_err[~usable] = np.inf
    return int(grid[int(np.argmin(mean_err))])


def predict(clf: FittedFairClassifier, x: FunctionSample, a: int) -> float:
    """Decision value in {0, 1/2, 1} for one curve."""
    return clf.predict(x, a)
