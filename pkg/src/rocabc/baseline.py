"""Weighted logistic-regression baseline for ABC model selection.

Pseudo-draws are weighted by an Epanechnikov kernel on their dissimilarity
score (bandwidth = a quantile of the scores, so a fixed fraction is
retained), a logistic regression of the model index on per-draw covariates
is fitted by IRLS, and the class-1 probability predicted at the observed
covariate point (the zero vector, since covariates are absolute summary
differences) is converted to a Bayes factor through the prior odds.

Perfect separation is a known pathology of this approach: fits are flagged
rather than rejected, and predicted probabilities are clamped so Bayes
factors stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PreconditionError

DEFAULT_CLAMP_EPS = 1e-12
DEFAULT_RETAINED_FRACTION = 0.5
MIN_EFFECTIVE_PER_CLASS = 100


@dataclass(frozen=True)
class LogisticFit:
    coefficients: np.ndarray  # intercept first, original covariate scale
    bandwidth: float
    retained_fraction: float
    clamp_eps: float
    separated: bool = False
    n_iter: int = 0

    def predict_log_odds(self, x: np.ndarray) -> float:
        """Class-1 log odds at x, clamped to +-log((1-eps)/eps).

        Clamping in log-odds space (rather than probability space) keeps
        the odds bound exact: exp of the clamped value never exceeds
        (1 - eps) / eps.
        """
        z = self.coefficients[0] + float(np.dot(self.coefficients[1:], x))
        z_max = math.log((1.0 - self.clamp_eps) / self.clamp_eps)
        return float(np.clip(z, -z_max, z_max))

    def predict_proba(self, x: np.ndarray) -> float:
        """Clamped class-1 probability at covariate vector x."""
        return 1.0 / (1.0 + math.exp(-self.predict_log_odds(x)))


def epanechnikov_weights(dists, bandwidth: float) -> np.ndarray:
    """w = max(0, 1 - (d / bandwidth)^2); zero at and beyond the bandwidth."""
    if bandwidth <= 0:
        raise PreconditionError("bandwidth must be positive")
    d = np.asarray(dists, dtype=float)
    return np.maximum(0.0, 1.0 - (d / bandwidth) ** 2)


def fit_weighted_logistic(
    covariates: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
    bandwidth: float = float("nan"),
    retained_fraction: float = 1.0,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
) -> LogisticFit:
    """Weighted logistic regression by iteratively reweighted least squares.

    `labels` are model indices (1 or 2); class 1 is the positive class.
    Converges when the parameter step drops below `tol` (or at `max_iter`).
    Raises NumericalError if weighting leaves a single class, the
    instability this baseline is known for.
    """
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = (np.asarray(labels) == 1).astype(float)
    w = np.asarray(weights, dtype=float)
    if not (x.shape[0] == y.size == w.size):
        raise PreconditionError("covariates, labels and weights must align")
    if np.any(w < 0):
        raise PreconditionError("weights must be non-negative")

    active = w > 0
    if w[active & (y == 1)].sum() <= 0 or w[active & (y == 0)].sum() <= 0:
        raise NumericalError(
            "weighting removed one class entirely; the logistic baseline "
            "cannot be fitted on this sample"
        )

    # Standardize internally for a well-conditioned Hessian.
    wsum = w.sum()
    mean = (w @ x) / wsum
    var = (w @ (x - mean) ** 2) / wsum
    sd = np.sqrt(np.maximum(var, 1e-300))
    sd[var <= 0] = 1.0
    xs = (x - mean) / sd
    design = np.column_stack([np.ones(x.shape[0]), xs])

    beta = np.zeros(design.shape[1])
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        eta = np.clip(design @ beta, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-eta))
        irls_w = w * p * (1.0 - p)
        grad = design.T @ (w * (y - p))
        hess = design.T @ (design * irls_w[:, None])
        hess[np.diag_indices_from(hess)] += 1e-10
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta += step
        if np.max(np.abs(step)) < tol:
            break

    eta = np.clip(design @ beta, -35.0, 35.0)
    p = 1.0 / (1.0 + np.exp(-eta))
    pos = active & (y == 1)
    neg = active & (y == 0)
    separated = bool(np.all(p[pos] > 1 - 1e-8) and np.all(p[neg] < 1e-8))

    # Undo the standardization.
    coef = np.empty(design.shape[1])
    coef[1:] = beta[1:] / sd
    coef[0] = beta[0] - float(np.dot(beta[1:], mean / sd))
    return LogisticFit(
        coefficients=coef,
        bandwidth=bandwidth,
        retained_fraction=retained_fraction,
        clamp_eps=clamp_eps,
        separated=separated,
        n_iter=n_iter,
    )


def logistic_bf(
    covariates: np.ndarray,
    labels: np.ndarray,
    delta_scores: np.ndarray,
    prior_odds_21: float = 1.0,
    *,
    retained_fraction: float = DEFAULT_RETAINED_FRACTION,
    clamp_eps: float = DEFAULT_CLAMP_EPS,
    min_effective: int = MIN_EFFECTIVE_PER_CLASS,
    observed: np.ndarray | None = None,
) -> tuple[float, LogisticFit]:
    """Bayes factor by weighted logistic regression.

    Draws are weighted by an Epanechnikov kernel on `delta_scores` with
    bandwidth at the `retained_fraction` quantile; the class-1 probability
    is predicted at `observed` (default: the zero vector) and clamped to
    [clamp_eps, 1 - clamp_eps] before forming odds.
    """
    scores = np.asarray(delta_scores, dtype=float)
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    if not (x.shape[0] == labels.size == scores.size):
        raise PreconditionError("covariates, labels and scores must align")

    bandwidth = float(np.quantile(scores, retained_fraction))
    if bandwidth <= 0:
        raise NumericalError("score quantile is zero; cannot form kernel weights")
    w = epanechnikov_weights(scores, bandwidth)

    kept = w > 0
    n1 = int(np.count_nonzero(kept & (labels == 1)))
    n2 = int(np.count_nonzero(kept & (labels == 2)))
    if n1 < min_effective or n2 < min_effective:
        raise NumericalError(
            f"weighting retained only {n1} M1 / {n2} M2 draws "
            f"(need {min_effective} each); most pseudo-data was discarded"
        )

    fit = fit_weighted_logistic(
        x[kept],
        labels[kept],
        w[kept],
        bandwidth=bandwidth,
        retained_fraction=retained_fraction,
        clamp_eps=clamp_eps,
    )
    point = np.zeros(x.shape[1]) if observed is None else np.asarray(observed, dtype=float)
    return math.exp(fit.predict_log_odds(point)) * prior_odds_21, fit
