import math

import numpy as np
import pytest

from rocabc.baseline import (
    epanechnikov_weights,
    fit_weighted_logistic,
    logistic_bf,
)
from rocabc.errors import NumericalError, PreconditionError


class TestEpanechnikov:
    def test_values(self):
        w = epanechnikov_weights([0.0, 0.5, 1.0, 2.0], bandwidth=1.0)
        assert np.allclose(w, [1.0, 0.75, 0.0, 0.0])

    def test_bad_bandwidth(self):
        with pytest.raises(PreconditionError):
            epanechnikov_weights([1.0], bandwidth=0.0)


def logistic_data(rng, n=4000, b0=-0.5, b1=1.5):
    x = rng.normal(0, 1, size=(n, 1))
    p = 1 / (1 + np.exp(-(b0 + b1 * x[:, 0])))
    labels = np.where(rng.random(n) < p, 1, 2)
    return x, labels


class TestFitWeightedLogistic:
    def test_recovers_coefficients(self):
        rng = np.random.default_rng(0)
        x, labels = logistic_data(rng, n=20_000)
        fit = fit_weighted_logistic(x, labels, np.ones(len(labels)))
        assert fit.coefficients[0] == pytest.approx(-0.5, abs=0.1)
        assert fit.coefficients[1] == pytest.approx(1.5, abs=0.1)
        assert not fit.separated

    def test_label_swap_negates_coefficients(self):
        rng = np.random.default_rng(1)
        x, labels = logistic_data(rng)
        w = rng.random(len(labels)) + 0.1
        a = fit_weighted_logistic(x, labels, w)
        b = fit_weighted_logistic(x, np.where(labels == 1, 2, 1), w)
        assert np.allclose(a.coefficients, -b.coefficients, atol=1e-6)

    def test_label_swap_with_negated_covariates(self):
        # slope is preserved, intercept flips sign
        rng = np.random.default_rng(2)
        x, labels = logistic_data(rng)
        w = np.ones(len(labels))
        a = fit_weighted_logistic(x, labels, w)
        b = fit_weighted_logistic(-x, np.where(labels == 1, 2, 1), w)
        assert b.coefficients[0] == pytest.approx(-a.coefficients[0], abs=1e-6)
        assert b.coefficients[1] == pytest.approx(a.coefficients[1], abs=1e-6)

    def test_weight_scale_invariance(self):
        rng = np.random.default_rng(3)
        x, labels = logistic_data(rng, n=3000)
        a = fit_weighted_logistic(x, labels, np.ones(len(labels)))
        b = fit_weighted_logistic(x, labels, np.full(len(labels), 2.0))
        assert np.allclose(a.coefficients, b.coefficients, atol=1e-8)

    def test_perfect_separation_flagged_and_clamped(self):
        x = np.concatenate([np.linspace(1, 2, 60), np.linspace(-2, -1, 60)])[:, None]
        labels = np.array([1] * 60 + [2] * 60)
        fit = fit_weighted_logistic(x, labels, np.ones(120))
        assert fit.separated
        p = fit.predict_proba(np.array([1.5]))
        assert fit.clamp_eps <= p <= 1 - fit.clamp_eps

    def test_single_class_raises(self):
        x = np.linspace(0, 1, 50)[:, None]
        labels = np.ones(50, dtype=int)
        with pytest.raises(NumericalError):
            fit_weighted_logistic(x, labels, np.ones(50))

    def test_zero_weight_class_raises(self):
        x = np.linspace(0, 1, 60)[:, None]
        labels = np.array([1] * 30 + [2] * 30)
        weights = np.array([1.0] * 30 + [0.0] * 30)
        with pytest.raises(NumericalError):
            fit_weighted_logistic(x, labels, weights)


def oracle_draws(rng, n, mu1=0.0, mu2=1.0, d=0.0):
    """Scores |d - d*| under the two Gaussian models, equal priors."""
    labels = np.where(rng.random(n) < 0.5, 1, 2)
    draws = np.where(
        labels == 1, rng.normal(mu1, 1.0, n), rng.normal(mu2, 1.0, n)
    )
    scores = np.abs(d - draws)
    return scores[:, None], labels, scores


class TestLogisticBf:
    def test_gaussian_oracle_value(self):
        # truth: N(0; 0, 1) / N(0; 1, 1) = e^{1/2}, log10 ~ 0.217
        rng = np.random.default_rng(4)
        covs, labels, scores = oracle_draws(rng, 60_000)
        bf, fit = logistic_bf(covs, labels, scores)
        assert abs(math.log10(bf) - math.log10(math.exp(0.5))) <= 0.3
        assert not fit.separated

    def test_uninformative_covariates_give_unit_bf(self):
        rng = np.random.default_rng(5)
        covs, labels, scores = oracle_draws(rng, 40_000, mu1=1.0, mu2=1.0)
        bf, _ = logistic_bf(covs, labels, scores)
        assert abs(math.log10(bf)) <= 0.2

    def test_clamp_bound(self):
        # perfectly separated scores: the predicted probability clamps, so
        # |log10 BF| <= log10((1 - eps) / eps) ~ 12
        rng = np.random.default_rng(6)
        n = 2000
        labels = np.array([1] * n + [2] * n)
        scores = np.concatenate([rng.uniform(0, 0.5, n), rng.uniform(1.0, 1.5, n)])
        covs = scores[:, None]
        bf, fit = logistic_bf(covs, labels, scores, retained_fraction=0.9)
        assert fit.separated
        assert abs(math.log10(bf)) <= math.log10((1 - 1e-12) / 1e-12) + 1e-9

    def test_prior_odds_applied(self):
        rng = np.random.default_rng(7)
        covs, labels, scores = oracle_draws(rng, 30_000)
        bf1, _ = logistic_bf(covs, labels, scores, prior_odds_21=1.0)
        bf3, _ = logistic_bf(covs, labels, scores, prior_odds_21=3.0)
        assert bf3 == pytest.approx(3.0 * bf1)

    def test_too_few_effective_points(self):
        # class-2 scores all sit at or beyond the bandwidth quantile
        labels = np.array([1] * 500 + [2] * 500)
        scores = np.concatenate([np.linspace(0, 0.1, 500), np.linspace(50, 60, 500)])
        covs = scores[:, None]
        with pytest.raises(NumericalError):
            logistic_bf(covs, labels, scores)
