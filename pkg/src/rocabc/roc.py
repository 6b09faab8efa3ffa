"""ROC estimation and ROC-based Bayes factors.

Two score sets drive everything: F-scores generated under the same-source
model (M1) and G-scores generated under the alternative-source model (M2).
The ROC curve is ROC(p) = F(G^{-1}(p)) and the Bayes factor is its slope
at the origin.  Two estimators are provided:

  * empirical: fix the accepted count m under M2, so the false-positive
    rate p = m/L shrinks as the simulation grows; BF = (F-rate / p) times
    the prior odds.  Purely rank-based.
  * dual-beta: fit ROC(p) built from two non-central beta distributions
    with first shape parameter fixed at 1, whose origin slope has the
    closed form (beta_F / beta_G) * exp((lambda_G - lambda_F) / 2);
    evaluated at a small false-positive floor for stability.

Bayes factors can span hundreds of orders of magnitude; downstream code
carries them in log10.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .errors import NumericalError, PreconditionError

# Non-central beta series truncation: stop once the cumulative Poisson
# mixture weight exceeds 1 - SERIES_TAIL, hard cap SERIES_MAX terms.
SERIES_TAIL = 1e-14
SERIES_MAX = 10_000
QUANTILE_TOL = 1e-12

DEFAULT_P_FLOOR = 1.0 / 25_000.0


@dataclass(frozen=True)
class ScoreSample:
    """Kernel scores generated under M1 (f_scores) and M2 (g_scores)."""

    f_scores: np.ndarray
    g_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "f_scores", np.asarray(self.f_scores, dtype=float))
        object.__setattr__(self, "g_scores", np.asarray(self.g_scores, dtype=float))

    @property
    def n_f(self) -> int:
        return self.f_scores.size

    @property
    def n_g(self) -> int:
        return self.g_scores.size


class RocPoint(NamedTuple):
    p: float  # false-positive rate
    tpr: float  # true-positive rate


@dataclass(frozen=True)
class DualBetaParams:
    """Free parameters of the dual non-central beta ROC model (alpha = 1)."""

    beta_f: float
    lambda_f: float
    beta_g: float
    lambda_g: float

    def __post_init__(self):
        if not (self.beta_f > 0 and self.beta_g > 0):
            raise PreconditionError("beta parameters must be positive")
        if self.lambda_f < 0 or self.lambda_g < 0:
            raise PreconditionError("lambda parameters must be non-negative")


def empirical_cdf(scores, t: float) -> float:
    """Fraction of scores <= t."""
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise PreconditionError("empirical_cdf of an empty sample")
    return float(np.count_nonzero(arr <= t) / arr.size)


def empirical_roc(sample: ScoreSample) -> list[RocPoint]:
    """Step-function ROC points at every distinct G-score threshold.

    Points are sorted by p; (0, 0) and (1, 1) are always included.  The
    curve value at an intermediate p follows the ceiling-step convention
    (smallest tabulated p' >= p), matching the ceil-rank quantile used by
    `empirical_bf`.
    """
    if sample.n_f == 0 or sample.n_g == 0:
        raise PreconditionError("empirical ROC requires scores on both sides")
    f = np.sort(sample.f_scores)
    g = np.sort(sample.g_scores)
    thresholds = np.unique(g)
    p = np.searchsorted(g, thresholds, side="right") / g.size
    tpr = np.searchsorted(f, thresholds, side="right") / f.size
    pts = [RocPoint(0.0, 0.0)]
    pts.extend(RocPoint(float(a), float(b)) for a, b in zip(p, tpr))
    if pts[-1] != (1.0, 1.0):
        pts.append(RocPoint(1.0, 1.0))
    return pts


def eval_empirical_roc(points: list[RocPoint], p) -> np.ndarray:
    """Evaluate a step ROC at p (ceiling-step convention), vectorized."""
    parr = np.asarray([pt.p for pt in points])
    tarr = np.asarray([pt.tpr for pt in points])
    idx = np.searchsorted(parr, np.asarray(p, dtype=float), side="left")
    idx = np.minimum(idx, parr.size - 1)
    return tarr[idx]


def empirical_bf(
    sample: ScoreSample, m: int, prior_odds_21: float = 1.0
) -> tuple[float, float, float]:
    """Empirical ROC Bayes factor with a fixed accepted count under M2.

    The threshold is the m-th smallest G-score, so p_used = m/L is pinned
    by construction; the numerator is the fraction of F-scores at or below
    the threshold (ties all count).  Returns (bf, p_used, t_used).  With
    equal priors bf <= 1/p_used; bf = 0 means no F-score fell at or below
    the threshold (diagnose as "< 1/(K * p_used)").
    """
    k, ell = sample.n_f, sample.n_g
    if k == 0:
        raise PreconditionError("empirical BF requires at least one F-score")
    if not 1 <= m <= ell:
        raise PreconditionError(f"m={m} must satisfy 1 <= m <= {ell}")
    g = sample.g_scores
    t_used = float(np.partition(g, m - 1)[m - 1])
    p_used = m / ell
    num_rate = np.count_nonzero(sample.f_scores <= t_used) / k
    return float(num_rate / p_used * prior_odds_21), p_used, t_used


def _poisson_weights(lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Poisson(lam/2) pmf values j = 0..J, truncated at cumulative mass
    1 - SERIES_TAIL (capped at SERIES_MAX terms)."""
    half = lam / 2.0
    if half == 0.0:
        return np.array([0]), np.array([1.0])
    # Generous upper bound on the needed terms, then trim by cumulative mass.
    j_hi = int(half + 12.0 * math.sqrt(half) + 30)
    j_hi = min(j_hi, SERIES_MAX)
    j = np.arange(j_hi + 1)
    logw = -half + j * math.log(half) - gammaln(j + 1)
    w = np.exp(logw)
    cum = np.cumsum(w)
    cut = int(np.searchsorted(cum, 1.0 - SERIES_TAIL)) + 1
    cut = min(cut, j_hi + 1)
    return j[:cut], w[:cut]


def ncbeta_pdf(t, beta: float, lam: float) -> np.ndarray | float:
    """Density of the non-central beta with alpha = 1: a Poisson(lam/2)
    mixture of central Beta(1 + j, beta) densities."""
    _check_beta_lambda(beta, lam)
    tt = np.asarray(t, dtype=float)
    if np.any((tt < 0) | (tt > 1)):
        raise PreconditionError("ncbeta_pdf requires t in [0, 1]")
    j, w = _poisson_weights(lam)
    # Sum_j w_j t^j / B(1+j, beta), evaluated by Horner in t.
    coef = w * np.exp(gammaln(1 + j + beta) - gammaln(1 + j) - gammaln(beta))
    acc = np.full_like(tt, coef[-1], dtype=float)
    for c in coef[-2::-1]:
        acc = acc * tt + c
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        one_m = np.power(1.0 - tt, beta - 1.0)
    vals = acc * one_m
    return vals if tt.ndim else float(vals)


def ncbeta_cdf(t, beta: float, lam: float) -> np.ndarray | float:
    """CDF matching `ncbeta_pdf`: Poisson mixture of regularized
    incomplete beta functions I_t(1 + j, beta), generated by the stable
    downward recurrence I_t(a+1, b) = I_t(a, b) - t^a (1-t)^b / (a B(a, b))."""
    _check_beta_lambda(beta, lam)
    tt = np.asarray(t, dtype=float)
    if np.any((tt < 0) | (tt > 1)):
        raise PreconditionError("ncbeta_cdf requires t in [0, 1]")
    j, w = _poisson_weights(lam)
    one_m_pow = np.power(1.0 - tt, beta)
    c = 1.0 - one_m_pow  # I_t(1, beta)
    d = beta * tt * one_m_pow  # t^1 (1-t)^beta / (1 * B(1, beta))
    vals = w[0] * c
    for jj in range(1, j.size):
        c = c - d
        vals = vals + w[jj] * c
        d = d * tt * ((jj + beta) / (jj + 1.0))
    # Guard the accumulated subtraction against tiny negative round-off.
    vals = np.clip(vals, 0.0, 1.0)
    return vals if tt.ndim else float(vals)


def ncbeta_quantile(p, beta: float, lam: float) -> np.ndarray | float:
    """Quantile by bisection on [0, 1] to QUANTILE_TOL absolute in t."""
    _check_beta_lambda(beta, lam)
    pp = np.asarray(p, dtype=float)
    if np.any((pp < 0) | (pp > 1)):
        raise PreconditionError("ncbeta_quantile requires p in [0, 1]")
    lo = np.zeros_like(pp)
    hi = np.ones_like(pp)
    n_iter = int(math.ceil(math.log2(1.0 / QUANTILE_TOL)))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = ncbeta_cdf(mid, beta, lam) < pp
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return out if pp.ndim else float(out)


def _check_beta_lambda(beta: float, lam: float) -> None:
    if beta <= 0:
        raise PreconditionError("beta must be positive")
    if lam < 0:
        raise PreconditionError("lambda must be non-negative")


def roc_model_eval(params: DualBetaParams, p) -> np.ndarray | float:
    """ROC(p) = F(G^{-1}(p)) under the dual non-central beta model."""
    t = ncbeta_quantile(p, params.beta_g, params.lambda_g)
    return ncbeta_cdf(t, params.beta_f, params.lambda_f)


def limit_slope(params: DualBetaParams) -> float:
    """Slope of the model ROC at the origin, in closed form:
    (beta_F / beta_G) * exp((lambda_G - lambda_F) / 2)."""
    return (
        params.beta_f
        / params.beta_g
        * math.exp((params.lambda_g - params.lambda_f) / 2.0)
    )


def bounded_bf(
    params: DualBetaParams,
    p_floor: float = DEFAULT_P_FLOOR,
    prior_odds_21: float = 1.0,
) -> float:
    """ROC(p_floor)/p_floor times the prior odds: the stabilized
    dual-beta Bayes factor."""
    if not 0 < p_floor <= 1:
        raise PreconditionError("p_floor must lie in (0, 1]")
    return float(roc_model_eval(params, p_floor)) / p_floor * prior_odds_21


def pooled_rank_transform(sample: ScoreSample) -> ScoreSample:
    """Map every score to its pooled rank fraction rank/(n+1).

    A monotone transform into (0, 1): the ROC curve is unchanged, and the
    transformed scores are legal non-central beta observations (no mass at
    the endpoints).
    """
    pooled = np.sort(np.concatenate([sample.f_scores, sample.g_scores]))
    n = pooled.size
    f = np.searchsorted(pooled, sample.f_scores, side="right") / (n + 1)
    g = np.searchsorted(pooled, sample.g_scores, side="right") / (n + 1)
    return ScoreSample(f, g)


def _neg_loglik(x: np.ndarray, data: np.ndarray) -> float:
    beta, lam = math.exp(x[0]), math.exp(x[1])
    if not (1e-3 < beta < 1e4) or lam > 200.0:
        return 1e12
    pdf = ncbeta_pdf(data, beta, lam)
    return -float(np.sum(np.log(np.maximum(pdf, 1e-300))))


# MLE fits use at most this many evenly spaced order statistics per side;
# the estimate only seeds the L2 refinement.
_MLE_SUBSAMPLE = 25_000


def _subsample_sorted(data: np.ndarray, cap: int = _MLE_SUBSAMPLE) -> np.ndarray:
    data = np.sort(data)
    if data.size <= cap:
        return data
    idx = np.linspace(0, data.size - 1, cap).round().astype(int)
    return data[idx]


def _fit_one_side(data: np.ndarray) -> tuple[float, float]:
    """MLE of (beta, lambda) for one transformed score sample."""
    data = _subsample_sorted(data)
    mu = float(np.mean(data))
    mu = min(max(mu, 1e-4), 1.0 - 1e-4)
    starts = []
    for lam0 in (1e-6, 1.0, 4.0):
        # Moment-matched beta: mean ~ (1 + lam/2) / (1 + lam/2 + beta).
        beta0 = max((1.0 + lam0 / 2.0) * (1.0 - mu) / mu, 1e-3)
        starts.append(np.array([math.log(beta0), math.log(max(lam0, 1e-6))]))
    best = None
    for x0 in starts:
        res = minimize(
            _neg_loglik, x0, args=(data,), method="Nelder-Mead",
            options={"maxiter": 250, "xatol": 1e-3, "fatol": 1e-4},
        )
        if best is None or res.fun < best.fun:
            best = res
    beta, lam = math.exp(best.x[0]), math.exp(best.x[1])
    return beta, (0.0 if lam < 1e-5 else lam)


def fit_mle(sample: ScoreSample) -> DualBetaParams:
    """Step 1 of the two-step fit: per-side maximum likelihood on
    pooled-rank-transformed scores."""
    if sample.n_f < 50 or sample.n_g < 50:
        raise PreconditionError("MLE fit requires at least 50 scores per side")
    if np.ptp(sample.f_scores) == 0 and np.ptp(sample.g_scores) == 0:
        raise NumericalError("degenerate sample: all scores identical")
    transformed = pooled_rank_transform(sample)
    beta_f, lambda_f = _fit_one_side(transformed.f_scores)
    beta_g, lambda_g = _fit_one_side(transformed.g_scores)
    return DualBetaParams(beta_f, lambda_f, beta_g, lambda_g)


# L2 refinement grid: 1000 uniform p midpoints in (0, 1).
_REFINE_GRID = (np.arange(1000) + 0.5) / 1000.0
# Inside the refinement loop the G quantile is inverted by interpolation on
# a fixed t grid (dense near 0, where the ROC is steep), which is orders of
# magnitude cheaper than per-point bisection and accurate to ~1e-6.
_REFINE_T_GRID = np.concatenate(
    [[0.0], np.geomspace(1e-9, 0.01, 256, endpoint=False), np.linspace(0.01, 1.0, 1792)]
)


def _roc_model_fast(beta_f, lam_f, beta_g, lam_g, p: np.ndarray) -> np.ndarray:
    g_on_grid = ncbeta_cdf(_REFINE_T_GRID, beta_g, lam_g)
    t = np.interp(p, g_on_grid, _REFINE_T_GRID)
    return ncbeta_cdf(t, beta_f, lam_f)


def _l2_objective(x: np.ndarray, emp_tpr: np.ndarray) -> float:
    beta_f, lam_f = math.exp(x[0]), math.exp(x[1])
    beta_g, lam_g = math.exp(x[2]), math.exp(x[3])
    if max(beta_f, beta_g) > 1e4 or min(beta_f, beta_g) < 1e-3:
        return 1e12
    if max(lam_f, lam_g) > 200.0:
        return 1e12
    model = _roc_model_fast(beta_f, lam_f, beta_g, lam_g, _REFINE_GRID)
    return float(np.sum((model - emp_tpr) ** 2))


def refine_l2(params0: DualBetaParams, emp: list[RocPoint]) -> DualBetaParams:
    """Step 2 of the two-step fit: minimize the squared distance between
    the model ROC and the empirical ROC on a uniform 1000-point p grid.
    Never returns a worse objective than `params0`."""
    emp_tpr = np.asarray(eval_empirical_roc(emp, _REFINE_GRID), dtype=float)
    x0 = np.log(
        np.maximum(
            [params0.beta_f, max(params0.lambda_f, 1e-6),
             params0.beta_g, max(params0.lambda_g, 1e-6)],
            1e-12,
        )
    )
    # One restart counters Nelder-Mead simplex collapse.
    res = minimize(
        _l2_objective, x0, args=(emp_tpr,), method="Nelder-Mead",
        options={"maxiter": 500, "xatol": 1e-4, "fatol": 1e-10},
    )
    res = minimize(
        _l2_objective, res.x, args=(emp_tpr,), method="Nelder-Mead",
        options={"maxiter": 500, "xatol": 1e-5, "fatol": 1e-12},
    )
    if res.fun <= _l2_objective(x0, emp_tpr):
        beta_f, lam_f, beta_g, lam_g = np.exp(res.x)
        return DualBetaParams(
            float(beta_f), 0.0 if lam_f < 1e-5 else float(lam_f),
            float(beta_g), 0.0 if lam_g < 1e-5 else float(lam_g),
        )
    return params0


def ncbeta_rvs(rng: np.random.Generator, n: int, beta: float, lam: float) -> np.ndarray:
    """Draw from the alpha = 1 non-central beta via its Poisson mixture."""
    _check_beta_lambda(beta, lam)
    j = rng.poisson(lam / 2.0, size=n)
    return rng.beta(1.0 + j, beta)


# --- scores / ROC CSV interchange -------------------------------------------


def save_scores(path, models: np.ndarray, scores: np.ndarray, provenance: str = "") -> None:
    """CSV with columns model (1|2) and score, plus a provenance comment."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "score"])
        for m, s in zip(models, scores):
            writer.writerow([int(m), repr(float(s))])


def load_scores(path) -> tuple[np.ndarray, np.ndarray]:
    models, scores = [], []
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].startswith("#") or row[0] == "model":
                continue
            models.append(int(row[0]))
            scores.append(float(row[1]))
    if not models:
        raise PreconditionError(f"no score rows found in {path}")
    return np.asarray(models, dtype=np.int8), np.asarray(scores, dtype=float)


def sample_from_arrays(models: np.ndarray, scores: np.ndarray) -> ScoreSample:
    models = np.asarray(models)
    return ScoreSample(scores[models == 1], scores[models == 2])


def save_roc_csv(path, points: list[RocPoint], provenance: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "tpr"])
        for pt in points:
            writer.writerow([repr(pt.p), repr(pt.tpr)])
