"""Population ground truth: signal norms, disparity curves, optimal shifts, risk.

Under the homoscedastic Gaussian model the log density ratio within group a
is Gaussian with variance h_a^2 and mean -h_a^2/2 (class 0) or +h_a^2/2
(class 1), where h_a^2 is the squared kernel-space norm of the mean
difference. Every population rate below is therefore a normal tail
probability, and the disparity of the shifted rule has the closed form

    q_ay(tau) = P{ (pi_a1 - tau s_a) r_a(X) > pi_a0 + tau b_a | A=a, Y=y }
    D(tau)    = sum_a [ s_a q_a1(tau) + b_a q_a0(tau) ],

piecewise in tau according to the signs of the shifted prior terms. The
demographic variant mixes the two class-conditional tails with weights
pi_ay / pi_a through the same formula; its agreement with Monte Carlo is
exercised in the test suite before any downstream use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .exceptions import InfeasibleBudgetError, UnsupportedClosedFormError
from .fairness import DisparitySpec
from .fnspace import Dataset, FunctionSample, Grid, cosine_basis
from .simgen import ScenarioConfig

_BISECT_TAU_TOL = 1e-12
_BISECT_D_TOL = 1e-10
_BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class PopulationModel:
    """True priors, eigenvalues and mean coefficients in the known cosine basis."""

    pi: np.ndarray  # (2, 2) joint cell probabilities
    eigenvalues: np.ndarray  # (2, K)
    mean_coeffs: np.ndarray  # (2, 2, K) indexed [a, y, k]
    family: str = "gaussian"

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("cell probabilities must be positive and sum to 1")
        lam = np.asarray(self.eigenvalues, dtype=float)
        if np.any(lam <= 0) or np.any(np.diff(lam, axis=1) >= 0):
            raise ValueError("eigenvalues must be positive and strictly decreasing")

    @classmethod
    def from_scenario(cls, cfg: ScenarioConfig) -> "PopulationModel":
        return cls(
            pi=cfg.cell_probabilities(),
            eigenvalues=cfg.eigenvalues(),
            mean_coeffs=cfg.mean_coeffs(),
            family=cfg.family,
        )

    def signal_norm(self, a: int) -> float:
        return float(np.sqrt(rkhs_norm_sq(self, a)))

    def _require_gaussian(self):
        if self.family != "gaussian":
            raise UnsupportedClosedFormError(
                "closed forms hold only for Gaussian scores; use Monte Carlo instead"
            )


def rkhs_norm_sq(model: PopulationModel, a: int) -> float:
    """Squared kernel-space norm of the class mean difference over the modeled components."""
    diff = model.mean_coeffs[a, 1] - model.mean_coeffs[a, 0]
    return float(np.sum(diff**2 / model.eigenvalues[a]))


def _cell_rate(model: PopulationModel, spec: DisparitySpec, a: int, y: int, tau: float) -> float:
    """P(shifted decision = 1 | A=a, Y=y) under the Gaussian score law."""
    h = model.signal_norm(a)
    mult = model.pi[a, 1] - tau * spec.ratio_weight[a]
    bound = model.pi[a, 0] + tau * spec.base_weight[a]
    mean = 0.5 * h * h if y == 1 else -0.5 * h * h
    if mult > 0 and bound > 0:
        if h == 0.0:  # degenerate ratio == 1: point mass decision
            return float(mult > bound)
        return float(norm.sf((np.log(bound / mult) - mean) / h))
    if mult > 0:  # bound <= 0: positive score beats a nonpositive bound
        return 1.0
    if bound >= 0:  # mult <= 0: nonpositive left side cannot exceed it strictly
        return 0.0
    if mult == 0.0:  # 0 > negative bound
        return 1.0
    if h == 0.0:
        return float(mult > bound)
    return float(norm.cdf((np.log(bound / mult) - mean) / h))


def oracle_disparity(model: PopulationModel, spec: DisparitySpec, tau: float) -> float:
    """Population disparity of the shifted rule; continuous and nonincreasing in tau."""
    model._require_gaussian()
    total = 0.0
    for a in (0, 1):
        s, b = spec.ratio_weight[a], spec.base_weight[a]
        if s != 0.0:
            total += s * _cell_rate(model, spec, a, 1, tau)
        if b != 0.0:
            total += b * _cell_rate(model, spec, a, 0, tau)
    return total


def _admissible_interval(model: PopulationModel, spec: DisparitySpec) -> tuple[float, float]:
    """Open tau interval keeping every shifted prior term strictly positive."""
    lo, hi = -np.inf, np.inf
    for a in (0, 1):
        s, b = spec.ratio_weight[a], spec.base_weight[a]
        if s > 0:
            hi = min(hi, model.pi[a, 1] / s)
        elif s < 0:
            lo = max(lo, model.pi[a, 1] / s)
        if b > 0:
            lo = max(lo, -model.pi[a, 0] / b)
        elif b < 0:
            hi = min(hi, -model.pi[a, 0] / b)
    return lo, hi


def oracle_tau(model: PopulationModel, spec: DisparitySpec, delta: float) -> float:
    """Minimal-|tau| shift with |D(tau)| <= delta, by bisection on the monotone curve.

    Raises InfeasibleBudgetError when the disparity plateaus above the budget
    across the whole admissible interval (possible for the demographic
    measure under near-perfect separation).
    """
    model._require_gaussian()
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    d0 = oracle_disparity(model, spec, 0.0)
    if abs(d0) <= delta:
        return 0.0
    lo_adm, hi_adm = _admissible_interval(model, spec)
    lo_adm, hi_adm = max(lo_adm, -1e15), min(hi_adm, 1e15)
    target = delta if d0 > 0 else -delta
    if d0 > delta:
        lo, hi = 0.0, hi_adm * (1.0 - 1e-12)
    else:
        lo, hi = lo_adm * (1.0 - 1e-12), 0.0
    f_lo = d0 - target if d0 > delta else oracle_disparity(model, spec, lo) - target
    f_hi = oracle_disparity(model, spec, hi) - target if d0 > delta else d0 - target
    # D is nonincreasing, so the root is bracketed iff the far end crosses the target
    if d0 > delta and f_hi > 0:
        raise InfeasibleBudgetError(
            f"disparity stays above {delta} across the admissible interval"
        )
    if d0 < -delta and f_lo < 0:
        raise InfeasibleBudgetError(
            f"disparity stays below {-delta} across the admissible interval"
        )
    for _ in range(_BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f_mid = oracle_disparity(model, spec, mid) - target
        if d0 > delta:
            if f_mid > 0:
                lo = mid
            else:
                hi = mid
        else:
            if f_mid < 0:
                hi = mid
            else:
                lo = mid
        if hi - lo <= _BISECT_TAU_TOL * max(1.0, abs(hi)) and abs(f_mid) <= _BISECT_D_TOL:
            break
    # return the feasible end of the bracket
    tau = hi if d0 > delta else lo
    return float(tau)


def oracle_misclassification(model: PopulationModel, spec: DisparitySpec, tau: float) -> float:
    """Closed-form error of the shifted rule: group-prior-weighted normal tails.

    Requires the shifted prior terms to stay positive, which holds for every
    shift returned by the threshold search.
    """
    model._require_gaussian()
    total = 0.0
    for a in (0, 1):
        mult = model.pi[a, 1] - tau * spec.ratio_weight[a]
        bound = model.pi[a, 0] + tau * spec.base_weight[a]
        if mult <= 0 or bound <= 0:
            raise ValueError("shift leaves the admissible interval for group %d" % a)
        h = model.signal_norm(a)
        l_a = np.log(bound / mult)
        total += model.pi[a, 0] * norm.cdf(-0.5 * h - l_a / h)
        total += model.pi[a, 1] * norm.cdf(-0.5 * h + l_a / h)
    return float(total)


@dataclass(frozen=True)
class OracleClassifier:
    """Population decision rule at a fixed shift, evaluated with the true basis."""

    model: PopulationModel
    spec: DisparitySpec
    tau: float

    def __post_init__(self):
        for a in (0, 1):
            mult = self.model.pi[a, 1] - self.tau * self.spec.ratio_weight[a]
            bound = self.model.pi[a, 0] + self.tau * self.spec.base_weight[a]
            if mult <= 0 or bound <= 0:
                raise ValueError("shift leaves the admissible interval")

    def log_threshold(self, a: int) -> float:
        mult = self.model.pi[a, 1] - self.tau * self.spec.ratio_weight[a]
        bound = self.model.pi[a, 0] + self.tau * self.spec.base_weight[a]
        return float(np.log(bound / mult))

    def log_scores(self, grid: Grid, rows: np.ndarray, a: int) -> np.ndarray:
        """True log density ratio from the full modeled expansion."""
        k = self.model.eigenvalues.shape[1]
        basis = cosine_basis(grid, k)
        proj = (rows * grid.weights[None, :]) @ basis.T
        diff = self.model.mean_coeffs[a, 1] - self.model.mean_coeffs[a, 0]
        lam = self.model.eigenvalues[a]
        centered = proj - self.model.mean_coeffs[a, 0][None, :]
        return centered @ (diff / lam) - 0.5 * float(np.sum(diff**2 / lam))

    def decision_values(self, data: Dataset) -> np.ndarray:
        """Hard decisions for every row, ties resolved toward the positive class."""
        out = np.zeros(data.n)
        for a in (0, 1):
            mask = data.a == a
            if not np.any(mask):
                continue
            scores = self.log_scores(data.grid, data.x[mask], a)
            out[mask] = (scores >= self.log_threshold(a)).astype(float)
        return out

    def predict(self, x: FunctionSample, a: int) -> int:
        data = Dataset(grid=x.grid, x=x.values[None, :], a=np.array([a]), y=np.array([0]))
        return int(self.decision_values(data)[0])


def oracle_predict(clf: OracleClassifier, x: FunctionSample, a: int) -> int:
    return clf.predict(x, a)
