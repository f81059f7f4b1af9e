"""Disparity measures, the empirical disparity curve and the threshold solver.

The calibration stage evaluates, for a shift ``tau``, the group-wise decision

    g_tau(x, a) = 1{ (pi_a1 - tau * s_a) * r_a(x) > pi_a0 + tau * b_a }

where r_a is the estimated density ratio, and aggregates the decisions into
the empirical disparity

    D(tau) = sum_a [ s_a * mean_{(a,1)} g_tau + b_a * mean_{(a,0)} g_tau ].

D is a nonincreasing step function of tau. For each calibration point the
indicator flips exactly once, at

    tau(v) = (pi_a1 * v - pi_a0) / (s_a * v + b_a),   v = r_a(x),

so the curve is represented by per-sample breakpoints. Comparing ``tau``
against breakpoints directly (rather than re-evaluating products of
exponentials) keeps evaluation exact at the breakpoints themselves, where
the strict inequality has already flipped, and avoids overflow when scores
are huge (near-perfect separation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCellError
from .fnspace import CELLS

KINDS = ("DO", "PD", "DD")

# dedup tolerance for breakpoints, relative to |tau|
_BREAKPOINT_RTOL = 1e-14


@dataclass(frozen=True)
class DisparitySpec:
    """A bilinear disparity measure: per-group weights on the density ratio and the base measure.

    ratio_weight[a] multiplies the cell (a, 1) decision rate, base_weight[a]
    the cell (a, 0) rate.
    """

    kind: str
    ratio_weight: np.ndarray
    base_weight: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disparity kind {self.kind!r}")
        object.__setattr__(self, "ratio_weight", np.asarray(self.ratio_weight, dtype=float))
        object.__setattr__(self, "base_weight", np.asarray(self.base_weight, dtype=float))


def bilinear_coefficients(kind: str, pi: np.ndarray) -> DisparitySpec:
    """Coefficient pairs (s_a, b_a) for the three supported disparity measures.

    DO weighs true-positive rates, PD false-positive rates, DD the positive
    prediction rates mixed over classes with weights pi_ay / pi_a.
    """
    pi = np.asarray(pi, dtype=float)
    sign = np.array([-1.0, 1.0])
    if kind == "DO":
        return DisparitySpec(kind, sign, np.zeros(2))
    if kind == "PD":
        return DisparitySpec(kind, np.zeros(2), sign)
    if kind == "DD":
        pi_a = pi.sum(axis=1)
        if np.any(pi_a <= 0):
            raise DegenerateCellError("demographic disparity needs both groups present")
        return DisparitySpec(kind, sign * pi[:, 1] / pi_a, sign * pi[:, 0] / pi_a)
    raise ValueError(f"unknown disparity kind {kind!r}")


@dataclass(frozen=True)
class CalibrationScores:
    """Sorted log density-ratio values of the calibration samples, per (a, y) cell."""

    log_scores: dict[tuple[int, int], np.ndarray]

    def __post_init__(self):
        clean = {}
        for a, y in CELLS:
            v = np.sort(np.asarray(self.log_scores.get((a, y), ()), dtype=float))
            if v.size and not np.all(np.isfinite(v)):
                raise ValueError("log scores must be finite")
            clean[(a, y)] = v
        object.__setattr__(self, "log_scores", clean)

    @classmethod
    def from_ratios(cls, ratios: dict[tuple[int, int], np.ndarray]) -> "CalibrationScores":
        """Build from raw density-ratio values (must be positive)."""
        logs = {}
        for key, v in ratios.items():
            v = np.asarray(v, dtype=float)
            if np.any(v <= 0):
                raise ValueError("density ratios must be positive")
            logs[key] = np.log(v)
        return cls(logs)

    def count(self, a: int, y: int) -> int:
        return self.log_scores[(a, y)].size

    def ratios(self, a: int, y: int) -> np.ndarray:
        return np.exp(self.log_scores[(a, y)])


def _sample_breakpoints(log_scores, s, b, pi0, pi1):
    """Per-sample flip points and branches of the decision indicator.

    Returns (tau_less, tau_greater, n_const_true): the indicator of a sample
    with breakpoint t in tau_less is [tau < t], in tau_greater [tau > t];
    n_const_true counts samples whose indicator never flips and is true.
    Scaling numerator and denominator by exp(-|L|) keeps everything finite
    for arbitrarily large scores.
    """
    L = np.asarray(log_scores, dtype=float)
    scale = np.exp(-np.abs(L))
    num = np.where(L >= 0, pi1 - pi0 * scale, pi1 * scale - pi0)
    den = np.where(L >= 0, s + b * scale, s * scale + b)
    pos, neg = den > 0, den < 0
    flat = ~pos & ~neg
    n_const_true = int(np.sum(L[flat] > math.log(pi0 / pi1)))
    return np.sort(num[pos] / den[pos]), np.sort(num[neg] / den[neg]), n_const_true


class DisparityCurve:
    """The empirical disparity as a step function of the threshold shift.

    Precomputes sorted per-cell breakpoints once; a single evaluation is then
    two binary searches per contributing cell.
    """

    def __init__(self, scores: CalibrationScores, spec: DisparitySpec, pi: np.ndarray):
        pi = np.asarray(pi, dtype=float)
        self.spec = spec
        self._terms = []  # (coefficient, n, tau_less, tau_greater, n_const_true)
        self._missing_cell = None  # raised lazily: candidates are still well defined
        breakpoints = [np.empty(0)]
        for a in (0, 1):
            s, b = spec.ratio_weight[a], spec.base_weight[a]
            for y, coef in ((1, s), (0, b)):
                if coef == 0.0:
                    continue
                n = scores.count(a, y)
                if n == 0:
                    if self._missing_cell is None:
                        self._missing_cell = (a, y, coef)
                    continue
                less, greater, n_true = _sample_breakpoints(
                    scores.log_scores[(a, y)], s, b, pi[a, 0], pi[a, 1]
                )
                self._terms.append((coef, n, less, greater, n_true))
                breakpoints.append(less[np.isfinite(less)])
                breakpoints.append(greater[np.isfinite(greater)])
        self._breakpoints = _dedup_sorted(np.sort(np.concatenate(breakpoints)))

    def value(self, tau: float) -> float:
        if self._missing_cell is not None:
            a, y, coef = self._missing_cell
            raise DegenerateCellError(
                f"cell (a={a}, y={y}) carries weight {coef} but has no calibration samples"
            )
        total = 0.0
        for coef, n, less, greater, n_true in self._terms:
            on = less.size - np.searchsorted(less, tau, side="right")  # tau < t
            on += np.searchsorted(greater, tau, side="left")  # tau > t
            on += n_true
            total += coef * on / n
        return float(total)

    def candidates(self) -> np.ndarray:
        """All deduplicated breakpoints, ascending."""
        return self._breakpoints

    def solve(self, delta_eff: float) -> "ThresholdSolution":
        """Minimal-|tau| shift with |D(tau)| within the effective budget.

        Zero wins whenever it is feasible. Otherwise the monotonicity of D
        fixes the search side: candidates are scanned outward from zero and
        the scan stops once D has crossed the whole band, after which |D|
        can only grow. Infeasibility is reported, not raised; the shift with
        the smallest |D| seen is returned so a usable classifier remains.
        """
        if delta_eff < 0:
            raise ValueError("effective budget must be nonnegative")
        d0 = self.value(0.0)
        if abs(d0) <= delta_eff:
            return ThresholdSolution(0.0, True, d0, 0)
        bp = self._breakpoints
        if d0 > delta_eff:
            cands = bp[bp > 0]
        else:
            cands = bp[bp < 0][::-1]
        best_tau, best_val = 0.0, d0
        scanned = 0
        for tau in cands:
            val = self.value(float(tau))
            scanned += 1
            if abs(val) <= delta_eff:
                return ThresholdSolution(float(tau), True, val, scanned)
            if abs(val) < abs(best_val):
                best_tau, best_val = float(tau), val
            if (d0 > delta_eff and val < -delta_eff) or (d0 < -delta_eff and val > delta_eff):
                break
        return ThresholdSolution(best_tau, False, best_val, scanned)


def _dedup_sorted(values: np.ndarray) -> np.ndarray:
    if values.size == 0:
        return values
    keep = [values[0]]
    for v in values[1:]:
        if abs(v - keep[-1]) > _BREAKPOINT_RTOL * max(abs(v), abs(keep[-1])):
            keep.append(v)
    return np.array(keep)


@dataclass(frozen=True)
class ThresholdSolution:
    """Outcome of the threshold search."""

    tau: float
    feasible: bool
    achieved: float
    candidates_scanned: int


def empirical_disparity(
    scores: CalibrationScores, spec: DisparitySpec, pi: np.ndarray, tau: float
) -> float:
    """Empirical disparity of the shifted decision rule at ``tau``."""
    return DisparityCurve(scores, spec, pi).value(tau)


def candidate_thresholds(
    scores: CalibrationScores, spec: DisparitySpec, pi: np.ndarray
) -> np.ndarray:
    """Shift values where some calibration indicator flips, deduplicated and sorted."""
    return DisparityCurve(scores, spec, pi).candidates()


def solve_tau(
    scores: CalibrationScores, spec: DisparitySpec, pi: np.ndarray, delta_eff: float
) -> ThresholdSolution:
    """Minimal-|tau| threshold shift meeting the effective disparity budget."""
    return DisparityCurve(scores, spec, pi).solve(delta_eff)


def dkw_calibration_constant(n: int, rho: float, delta: float) -> float:
    """Budget shrinkage for high-probability disparity control.

    kappa = min(sqrt(2 log(1/rho) / n), delta): the plain calibrated variant
    shrinks the budget to delta - kappa so the population disparity stays
    below delta with probability about 1 - rho.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return min(math.sqrt(2.0 * math.log(1.0 / rho) / n), delta)


def decision_values(
    log_scores: np.ndarray, a: int, spec: DisparitySpec, pi: np.ndarray, tau: float
) -> np.ndarray:
    """Vectorised shifted decision rule for samples of group ``a`` given log scores.

    Uses the same breakpoint comparison as the calibration curve so that a
    point sitting exactly at the solved shift decides identically in both.
    """
    s, b = spec.ratio_weight[a], spec.base_weight[a]
    L = np.asarray(log_scores, dtype=float)
    scale = np.exp(-np.abs(L))
    num = np.where(L >= 0, pi[a, 1] - pi[a, 0] * scale, pi[a, 1] * scale - pi[a, 0])
    den = np.where(L >= 0, s + b * scale, s * scale + b)
    out = np.empty(L.shape, dtype=float)
    pos = den > 0
    neg = den < 0
    zero = ~pos & ~neg
    with np.errstate(divide="ignore", invalid="ignore"):
        out[pos] = tau < num[pos] / den[pos]
        out[neg] = tau > num[neg] / den[neg]
    if np.any(zero):
        out[zero] = L[zero] > math.log(pi[a, 0] / pi[a, 1])
    return out
