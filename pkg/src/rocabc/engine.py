"""The ABC model-selection engine.

Each draw samples a model index from the prior, generates a pseudo-mark
under that model, and scores it against the observed trace with the
kernel.  The Bayes factor is then assigned from the two score sets by the
configured method (empirical ROC, dual-beta ROC model, or the logistic
baseline).

The model prior always cancels out of the reported value: the ROC-based
methods work with per-model acceptance rates, which condition the sampling
prior away by construction, while the logistic method estimates posterior
odds and is multiplied by the prior odds explicitly.

Determinism contract: draws are generated in fixed-size batches, each with
its own RNG stream derived from (master_seed, batch index).  Batches may
execute on any number of workers in any order; results are assembled by
batch index, so output is bit-identical for any worker count.
"""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import logistic_bf
from .errors import NumericalError, PreconditionError
from .features import (
    DEFAULT_SEG_LEN,
    Configuration,
    config_arrays,
    summarize,
    summarize_batch,
)
from .generative import (
    DEFAULT_PRIORS,
    DistortionPriors,
    Population,
    _bbox,
    _best_matching_search,
    _search_context,
    distort_batch,
    sample_params_batch,
)
from .kernel import DEFAULT_WEIGHTS, KernelWeights, delta_batch, summary_abs_diff
from .roc import (
    DEFAULT_P_FLOOR,
    ScoreSample,
    bounded_bf,
    empirical_bf,
    empirical_roc,
    fit_mle,
    refine_l2,
)
from .util import worker_count

BATCH_SIZE = 8192
_STREAM_TAG = 0x0ABC
CHECKPOINT_FRACTIONS = (0.10, 0.25, 0.50, 0.75, 1.00)


class Method(str, enum.Enum):
    EMPIRICAL = "empirical"
    DUAL_BETA = "dualbeta"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class ModelPrior:
    pi1: float = 0.5
    pi2: float = 0.5

    def __post_init__(self):
        if not (self.pi1 > 0 and self.pi2 > 0):
            raise PreconditionError("model priors must be strictly positive")
        if abs(self.pi1 + self.pi2 - 1.0) > 1e-9:
            raise PreconditionError("model priors must sum to 1")

    @property
    def odds_21(self) -> float:
        return self.pi2 / self.pi1


@dataclass(frozen=True)
class RunConfig:
    n_total: int
    m_denominator: int = 10
    p_floor: float = DEFAULT_P_FLOOR
    method: Method = Method.EMPIRICAL
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.n_total < 1000:
            raise PreconditionError("n_total must be at least 1000")
        if self.m_denominator < 1:
            raise PreconditionError("m_denominator must be at least 1")
        if not 0.0 < self.p_floor <= 1.0:
            raise PreconditionError("p_floor must lie in (0, 1]")


@dataclass
class RunResult:
    sample: ScoreSample
    bf_log10: float
    p_used: float | None
    convergence_trace: list[tuple[int, float]]
    timing: dict[str, float]
    detail: dict = field(default_factory=dict)


def _batch_rng(master_seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([master_seed, _STREAM_TAG, batch]))
    )


def _log10(bf: float) -> float:
    return math.log10(bf) if bf > 0 else float("-inf")


def generate_draws(
    sim1,
    sim2,
    observed_score_fn,
    prior: ModelPrior,
    cfg: RunConfig,
    covariate_fn=None,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Simulate cfg.n_total draws; returns (models, scores, covariates).

    sim* are callables (rng, count) -> opaque pseudo-data batch;
    observed_score_fn maps a batch to per-draw kernel scores, and
    covariate_fn (optional) to per-draw covariate rows.
    """
    n = cfg.n_total
    n_batches = (n + BATCH_SIZE - 1) // BATCH_SIZE

    def do_batch(b: int):
        length = min(BATCH_SIZE, n - b * BATCH_SIZE)
        rng = _batch_rng(cfg.master_seed, b)
        models = np.where(rng.random(length) < prior.pi1, 1, 2).astype(np.int8)
        scores = np.empty(length)
        covs = None
        for model, sim in ((1, sim1), (2, sim2)):
            idx = np.flatnonzero(models == model)
            if idx.size == 0:
                continue
            data = sim(rng, idx.size)
            scores[idx] = observed_score_fn(data)
            if covariate_fn is not None:
                rows = covariate_fn(data)
                if covs is None:
                    covs = np.empty((length, rows.shape[1]))
                covs[idx] = rows
        return models, scores, covs

    workers = min(worker_count(threads), n_batches)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(do_batch, range(n_batches)))
    else:
        parts = [do_batch(b) for b in range(n_batches)]

    models = np.concatenate([p[0] for p in parts])
    scores = np.concatenate([p[1] for p in parts])
    covs = None
    if covariate_fn is not None:
        covs = np.concatenate([p[2] for p in parts])
    return models, scores, covs


def convergence_trace(
    models: np.ndarray,
    scores: np.ndarray,
    m: int,
    prior_odds_21: float = 1.0,
    fractions: tuple[float, ...] = CHECKPOINT_FRACTIONS,
) -> list[tuple[int, float]]:
    """Empirical-method BF recomputed on growing prefixes with a fixed
    accepted count m, so p_used = m/L shrinks as the run grows."""
    n = models.size
    out: list[tuple[int, float]] = []
    for frac in fractions:
        n_c = max(1, int(round(frac * n)))
        mp, sp = models[:n_c], scores[:n_c]
        f = sp[mp == 1]
        g = sp[mp == 2]
        if f.size == 0 or g.size < m:
            continue
        bf, _, _ = empirical_bf(ScoreSample(f, g), m, prior_odds_21)
        out.append((n_c, _log10(bf)))
    return out


def assign_bf(
    models: np.ndarray,
    scores: np.ndarray,
    covariates: np.ndarray | None,
    prior: ModelPrior,
    cfg: RunConfig,
) -> tuple[float, float | None, dict]:
    """Assign the Bayes factor from accumulated draws by cfg.method.

    Returns (bf, p_used, detail).
    """
    sample = ScoreSample(scores[models == 1], scores[models == 2])
    if sample.n_f == 0 or sample.n_g == 0:
        raise NumericalError(
            f"one-sided sample after {models.size} draws "
            f"(K={sample.n_f}, L={sample.n_g}); increase n_total or adjust priors"
        )
    # The rate-based estimators are prior-free (F and G rates are computed
    # within each model's own draws), so no prior-odds factor is applied.
    if cfg.method is Method.EMPIRICAL:
        bf, p_used, t_used = empirical_bf(sample, cfg.m_denominator)
        return bf, p_used, {"t_used": t_used}
    if cfg.method is Method.DUAL_BETA:
        params0 = fit_mle(sample)
        params = refine_l2(params0, empirical_roc(sample))
        bf = bounded_bf(params, cfg.p_floor)
        return bf, cfg.p_floor, {
            "params": (params.beta_f, params.lambda_f, params.beta_g, params.lambda_g)
        }
    if cfg.method is Method.LOGISTIC:
        covs = scores[:, None] if covariates is None else covariates
        bf, fit = logistic_bf(covs, models, scores, prior.odds_21)
        return bf, None, {
            "separated": fit.separated,
            "bandwidth": fit.bandwidth,
            "n_iter": fit.n_iter,
        }
    raise PreconditionError(f"unknown method {cfg.method}")


def generic_run(
    sim1,
    sim2,
    observed_score_fn,
    prior: ModelPrior,
    cfg: RunConfig,
    covariate_fn=None,
    threads: int | None = None,
) -> RunResult:
    """Domain-agnostic ABC run: generate, trace convergence, assign the BF."""
    t0 = time.perf_counter()
    need_cov = cfg.method is Method.LOGISTIC and covariate_fn is not None
    models, scores, covs = generate_draws(
        sim1, sim2, observed_score_fn, prior, cfg,
        covariate_fn=covariate_fn if need_cov else None,
        threads=threads,
    )
    t1 = time.perf_counter()
    bf, p_used, detail = assign_bf(models, scores, covs, prior, cfg)
    t2 = time.perf_counter()
    trace = convergence_trace(models, scores, cfg.m_denominator, prior.odds_21)
    return RunResult(
        sample=ScoreSample(scores[models == 1], scores[models == 2]),
        bf_log10=_log10(bf),
        p_used=p_used,
        convergence_trace=trace,
        timing={"generation": t1 - t0, "bf_assignment": t2 - t1},
        detail=detail,
    )


class _FingerprintSims:
    """Batched pseudo-mark simulators bound to one (trace, control, pop)."""

    def __init__(
        self,
        trace: Configuration,
        control: Configuration,
        pop: Population,
        weights: KernelWeights,
        seg_len: float,
        priors: DistortionPriors,
    ):
        self.k = trace.k
        self.weights = weights
        self.seg_len = seg_len
        self.priors = priors
        self.trace_summary = summarize(trace, seg_len)
        self.ctx = _search_context(trace, weights, seg_len)

        locs, dirs, types = config_arrays(control)
        lo, hi = _bbox(locs, priors.bbox_inflation)
        self.control = (locs, dirs, types, lo, hi)

        self.fingers = []
        for finger in pop.fingers:
            fl = np.array([(m.x, m.y) for m in finger.minutiae])
            fd = np.array([m.direction for m in finger.minutiae])
            ft = np.array([int(m.type) for m in finger.minutiae], dtype=np.int8)
            self.fingers.append((fl, fd, ft))
        # finger index -> (locs, dirs, types, bbox_lo, bbox_hi) of best subconfig
        self._subconfig_cache: dict[int, tuple] = {}

    def _subconfig(self, fi: int) -> tuple:
        cached = self._subconfig_cache.get(fi)
        if cached is None:
            fl, fd, ft = self.fingers[fi]
            assignment, _ = _best_matching_search(self.ctx, fl, fd, ft)
            locs = fl[assignment]
            lo, hi = _bbox(locs, self.priors.bbox_inflation)
            cached = (locs, fd[assignment], ft[assignment], lo, hi)
            self._subconfig_cache[fi] = cached
        return cached

    def _distort_and_summarize(self, locs, dirs, types, lo, hi, rng):
        params = sample_params_batch(rng, lo, hi, self.priors)
        nl, nd, nt = distort_batch(locs, dirs, types, params, rng)
        return summarize_batch(nl, nd, nt, self.seg_len)

    def sim1(self, rng: np.random.Generator, count: int):
        locs, dirs, types, lo, hi = self.control
        return self._distort_and_summarize(
            np.broadcast_to(locs, (count, *locs.shape)).copy(),
            np.broadcast_to(dirs, (count, dirs.size)).copy(),
            np.broadcast_to(types, (count, types.size)).copy(),
            np.broadcast_to(lo, (count, 2)),
            np.broadcast_to(hi, (count, 2)),
            rng,
        )

    def sim2(self, rng: np.random.Generator, count: int):
        fi = rng.integers(0, len(self.fingers), size=count)
        k = self.k
        locs = np.empty((count, k, 2))
        dirs = np.empty((count, k))
        types = np.empty((count, k), dtype=np.int8)
        lo = np.empty((count, 2))
        hi = np.empty((count, 2))
        for idx in np.unique(fi):
            sub = self._subconfig(int(idx))
            rows = fi == idx
            locs[rows], dirs[rows], types[rows] = sub[0], sub[1], sub[2]
            lo[rows], hi[rows] = sub[3], sub[4]
        return self._distort_and_summarize(locs, dirs, types, lo, hi, rng)

    def score(self, batch) -> np.ndarray:
        return delta_batch(self.trace_summary, batch, self.weights)

    def covariates(self, batch) -> np.ndarray:
        return summary_abs_diff(self.trace_summary, batch)


def run(
    trace: Configuration,
    control: Configuration,
    pop: Population,
    w: KernelWeights = DEFAULT_WEIGHTS,
    prior: ModelPrior = ModelPrior(),
    cfg: RunConfig = RunConfig(n_total=50_000),
    *,
    seg_len: float = DEFAULT_SEG_LEN,
    distortion_priors: DistortionPriors = DEFAULT_PRIORS,
    threads: int | None = None,
) -> RunResult:
    """ROC-ABC run for fingerprint evidence.

    The trace and control must have equal k with index pairing already
    established; every population finger must have at least k minutiae
    (the per-finger subconfiguration search is cached across draws).
    """
    if trace.k != control.k:
        raise PreconditionError(
            f"trace (k={trace.k}) and control (k={control.k}) must have equal k"
        )
    if trace.k < 3:
        raise PreconditionError("need at least three paired minutiae")
    short = [f.id for f in pop.fingers if f.n < trace.k]
    if short:
        raise PreconditionError(
            f"{len(short)} population finger(s) have fewer than k={trace.k} "
            f"minutiae (first: {short[0]})"
        )
    sims = _FingerprintSims(trace, control, pop, w, seg_len, distortion_priors)
    return generic_run(
        sims.sim1,
        sims.sim2,
        sims.score,
        prior,
        cfg,
        covariate_fn=sims.covariates,
        threads=threads,
    )
