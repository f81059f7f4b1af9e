"""Shared test helpers: independent reference implementations and instance generators.

The reference disparity below evaluates the raw indicator products directly,
independent of the breakpoint machinery in the package.
"""

import numpy as np

from fairflda import CalibrationScores, bilinear_coefficients


def brute_force_disparity(cells_eta, spec, pi, tau):
    """Direct indicator count of the shifted rule, term order matching the package."""
    total = 0.0
    for a in (0, 1):
        s, b = spec.ratio_weight[a], spec.base_weight[a]
        for y, coef in ((1, s), (0, b)):
            if coef == 0.0:
                continue
            vals = cells_eta[(a, y)]
            cnt = sum(1 for v in vals if (pi[a, 1] - tau * s) * v > pi[a, 0] + tau * b)
            total += coef * cnt / len(vals)
    return total


def random_instance(rng, kind, max_per_cell=8):
    """Small random calibration instance: priors, spec, raw ratio values per cell."""
    counts = {cell: int(rng.integers(1, max_per_cell + 1)) for cell in ((0, 0), (0, 1), (1, 0), (1, 1))}
    raw = rng.random(4) + 0.05
    pi = (raw / raw.sum()).reshape(2, 2)
    cells_eta = {
        cell: np.exp(rng.normal(0.0, 1.5, size=n)) for cell, n in counts.items()
    }
    spec = bilinear_coefficients(kind, pi)
    scores = CalibrationScores.from_ratios(cells_eta)
    return cells_eta, scores, spec, pi


def exhaustive_solve(curve_value, candidates, delta_eff):
    """Reference threshold search: evaluate everywhere, take the minimal |tau|.

    Mirrors the documented tie rules: zero wins if feasible; otherwise the
    feasible candidate of smallest |tau|; otherwise the candidate with the
    smallest |D| on the monotone scan side, earliest (smallest |tau|) first.
    """
    d0 = curve_value(0.0)
    if abs(d0) <= delta_eff:
        return 0.0, True, d0
    feasible = [(t, curve_value(t)) for t in candidates if abs(curve_value(t)) <= delta_eff]
    if feasible:
        t, v = min(feasible, key=lambda tv: abs(tv[0]))
        return t, True, v
    side = sorted((t for t in candidates if (t > 0) == (d0 > delta_eff)), key=abs)
    best_t, best_v = 0.0, d0
    for t in side:
        v = curve_value(t)
        if abs(v) < abs(best_v):
            best_t, best_v = t, v
    return best_t, False, best_v
