import numpy as np
import pytest
from scipy.stats import norm

from fairflda import (
    FunctionSample,
    OracleClassifier,
    PopulationModel,
    bilinear_coefficients,
    oracle_disparity,
    oracle_misclassification,
    oracle_tau,
    preset,
    rkhs_norm_sq,
)
from fairflda.exceptions import InfeasibleBudgetError, UnsupportedClosedFormError
from fairflda.fnspace import cosine_basis, uniform_grid

MAIN = PopulationModel.from_scenario(preset("main-beta1.5"))
H50 = sum(1.0 / k for k in range(1, 51))


def score_space_mc(model, spec, tau, n, seed):
    """Monte Carlo disparity in score space, independent of the grid pipeline.

    Draws the Gaussian log-ratio directly per cell and applies the raw
    shifted decision rule.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for a in (0, 1):
        s, b = spec.ratio_weight[a], spec.base_weight[a]
        h2 = rkhs_norm_sq(model, a)
        for y, coef in ((1, s), (0, b)):
            if coef == 0.0:
                continue
            mean = h2 / 2 if y == 1 else -h2 / 2
            logs = rng.normal(mean, np.sqrt(h2), size=n)
            mult = model.pi[a, 1] - tau * s
            bound = model.pi[a, 0] + tau * b
            with np.errstate(over="ignore"):
                dec = mult * np.exp(logs) > bound
            total += coef * dec.mean()
    return total


class TestSignalNorm:
    def test_identical_means(self):
        cfg = preset("main-beta1.5")
        model = PopulationModel(
            pi=cfg.cell_probabilities(),
            eigenvalues=cfg.eigenvalues(),
            mean_coeffs=np.zeros_like(cfg.mean_coeffs()),
        )
        assert rkhs_norm_sq(model, 0) == 0.0

    def test_group0_direct_sum(self):
        expected = sum((0.8 * k**-1.5) ** 2 / k**-2 for k in range(1, 51))
        assert rkhs_norm_sq(MAIN, 0) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.64 * H50, abs=1e-12)

    def test_group1_direct_sum(self):
        expected = sum((np.sqrt(2) * k**-1.5) ** 2 / (2 * k**-2) for k in range(1, 51))
        assert rkhs_norm_sq(MAIN, 1) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(H50, abs=1e-12)


class TestOracleDisparity:
    def test_identical_groups_zero(self):
        cfg = preset("main-beta1.5")
        pi = np.full((2, 2), 0.25)
        theta = cfg.mean_coeffs().copy()
        theta[0] = theta[1]
        lam = np.stack([cfg.eigenvalues()[1], cfg.eigenvalues()[1]])
        model = PopulationModel(pi=pi, eigenvalues=lam, mean_coeffs=theta)
        spec = bilinear_coefficients("DO", pi)
        assert oracle_disparity(model, spec, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_main_do_at_zero(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        assert oracle_disparity(MAIN, spec, 0.0) == pytest.approx(0.199, abs=5e-4)

    def test_one_sided_branch_past_prior(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        tau = MAIN.pi[1, 1] + 0.05
        h0 = MAIN.signal_norm(0)
        expected = -norm.cdf(h0 / 2 - np.log(MAIN.pi[0, 0] / (MAIN.pi[0, 1] + tau)) / h0)
        assert oracle_disparity(MAIN, spec, tau) == pytest.approx(expected, abs=1e-14)
        assert oracle_disparity(MAIN, spec, tau) <= 0.0

    @pytest.mark.parametrize("kind", ["DO", "PD", "DD"])
    def test_against_score_space_monte_carlo(self, kind):
        spec = bilinear_coefficients(kind, MAIN.pi)
        n = 400_000
        for tau in (0.0, 0.1, -0.05):
            mc = score_space_mc(MAIN, spec, tau, n, seed=hash((kind, tau)) % 2**32)
            assert oracle_disparity(MAIN, spec, tau) == pytest.approx(mc, abs=0.004)

    @pytest.mark.parametrize("kind", ["DO", "PD", "DD"])
    def test_nonincreasing_sweep(self, kind):
        spec = bilinear_coefficients(kind, MAIN.pi)
        taus = np.linspace(-0.8, 0.8, 200)
        vals = [oracle_disparity(MAIN, spec, t) for t in taus]
        diffs = np.diff(vals)
        assert np.all(diffs <= 1e-12)

    def test_non_gaussian_rejected(self):
        model = PopulationModel.from_scenario(preset("nongauss-beta1.5"))
        spec = bilinear_coefficients("DO", model.pi)
        with pytest.raises(UnsupportedClosedFormError):
            oracle_disparity(model, spec, 0.0)


class TestOracleTau:
    def test_loose_budget(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        assert oracle_tau(MAIN, spec, 0.5) == 0.0

    def test_exact_zero_budget(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        tau = oracle_tau(MAIN, spec, 0.0)
        assert abs(oracle_disparity(MAIN, spec, tau)) <= 1e-10

    def test_main_delta_005(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        tau = oracle_tau(MAIN, spec, 0.05)
        assert tau > 0.0
        assert oracle_disparity(MAIN, spec, tau) == pytest.approx(0.05, abs=1e-10)
        mc = score_space_mc(MAIN, spec, tau, 500_000, seed=11)
        assert mc == pytest.approx(0.05, abs=0.003)

    def test_admissible_interval(self):
        for kind in ("DO", "PD", "DD"):
            spec = bilinear_coefficients(kind, MAIN.pi)
            for delta in (0.0, 0.02, 0.1):
                tau = oracle_tau(MAIN, spec, delta)
                for a in (0, 1):
                    assert MAIN.pi[a, 1] - tau * spec.ratio_weight[a] > 0
                    assert MAIN.pi[a, 0] + tau * spec.base_weight[a] > 0

    def test_dd_plateau_infeasible(self):
        model = PopulationModel.from_scenario(preset("perfect-I-beta0.5"))
        spec = bilinear_coefficients("DD", model.pi)
        assert oracle_disparity(model, spec, 0.0) == pytest.approx(0.3, abs=1e-6)
        with pytest.raises(InfeasibleBudgetError):
            oracle_tau(model, spec, 0.1)


class TestOracleMisclassification:
    def test_perfect_classification_limit(self):
        # enormous signal: error collapses to zero
        k = np.arange(1, 51, dtype=float)
        lam = np.stack([k**-2, k**-2])
        theta = np.zeros((2, 2, 50))
        theta[0, 1, 0] = theta[1, 1, 0] = 20.0  # norm = 20
        model = PopulationModel(pi=np.full((2, 2), 0.25), eigenvalues=lam, mean_coeffs=theta)
        spec = bilinear_coefficients("DO", model.pi)
        assert oracle_misclassification(model, spec, 0.0) < 1e-15

    def test_main_value_against_monte_carlo(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        rng = np.random.default_rng(17)
        n = 500_000
        err = 0.0
        for a in (0, 1):
            h2 = rkhs_norm_sq(MAIN, a)
            thr = np.log(MAIN.pi[a, 0] / MAIN.pi[a, 1])
            for y in (0, 1):
                mean = h2 / 2 if y == 1 else -h2 / 2
                logs = rng.normal(mean, np.sqrt(h2), size=n)
                dec = logs >= thr
                wrong = dec if y == 0 else ~dec
                err += MAIN.pi[a, y] * wrong.mean()
        closed = oracle_misclassification(MAIN, spec, 0.0)
        assert closed == pytest.approx(err, abs=0.002)

    def test_weak_signal_against_monte_carlo(self):
        k = np.arange(1, 51, dtype=float)
        lam = np.stack([k**-2, k**-2])
        theta = np.zeros((2, 2, 50))
        theta[0, 1, 0] = theta[1, 1, 0] = 0.1  # norm = 0.1
        model = PopulationModel(pi=np.full((2, 2), 0.25), eigenvalues=lam, mean_coeffs=theta)
        spec = bilinear_coefficients("DO", model.pi)
        rng = np.random.default_rng(23)
        n = 500_000
        err = 0.0
        for a in (0, 1):
            for y in (0, 1):
                mean = 0.005 if y == 1 else -0.005
                logs = rng.normal(mean, 0.1, size=n)
                dec = logs >= 0.0
                wrong = dec if y == 0 else ~dec
                err += 0.25 * wrong.mean()
        assert oracle_misclassification(model, spec, 0.0) == pytest.approx(err, abs=0.002)

    def test_invalid_shift_rejected(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        with pytest.raises(ValueError):
            oracle_misclassification(MAIN, spec, MAIN.pi[1, 1] + 0.01)

    def test_risk_monotone_away_from_zero(self):
        spec = bilinear_coefficients("DO", MAIN.pi)
        tau_star = oracle_tau(MAIN, spec, 0.05)
        path = np.linspace(tau_star, 0.0, 50)
        risks = [oracle_misclassification(MAIN, spec, t) for t in path]
        assert all(r1 >= r2 - 1e-12 for r1, r2 in zip(risks, risks[1:]))
        away = np.linspace(0.0, tau_star, 50)
        risks_away = [oracle_misclassification(MAIN, spec, t) for t in away]
        assert all(r2 >= r1 - 1e-12 for r1, r2 in zip(risks_away, risks_away[1:]))


class TestOraclePredict:
    def _classifier(self, tau=0.0):
        pi = np.full((2, 2), 0.25)
        cfg = preset("main-beta1.5")
        model = PopulationModel(pi=pi, eigenvalues=cfg.eigenvalues(), mean_coeffs=cfg.mean_coeffs())
        return model, OracleClassifier(model, bilinear_coefficients("DO", pi), tau)

    def test_class_means(self):
        model, clf = self._classifier()
        grid = uniform_grid(513)
        basis = cosine_basis(grid, 50)
        for a in (0, 1):
            mu1 = FunctionSample(grid, model.mean_coeffs[a, 1] @ basis)
            mu0 = FunctionSample(grid, model.mean_coeffs[a, 0] @ basis)
            assert clf.predict(mu1, a) == 1
            assert clf.predict(mu0, a) == 0

    def test_tie_goes_positive(self):
        # identical class means make the score exactly 0 for every curve and
        # equal priors put the threshold exactly at 0: the >= rule decides 1
        pi = np.full((2, 2), 0.25)
        cfg = preset("main-beta1.5")
        theta = cfg.mean_coeffs().copy()
        theta[:, 0] = theta[:, 1]
        model = PopulationModel(pi=pi, eigenvalues=cfg.eigenvalues(), mean_coeffs=theta)
        clf = OracleClassifier(model, bilinear_coefficients("DO", pi), 0.0)
        grid = uniform_grid(513)
        rng = np.random.default_rng(3)
        x = FunctionSample(grid, rng.normal(size=513))
        assert clf.log_scores(grid, x.values[None, :], 0)[0] == 0.0
        assert clf.log_threshold(0) == 0.0
        assert clf.predict(x, 0) == 1
