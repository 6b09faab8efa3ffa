"""Pseudo-mark generation and synthetic populations.

Pseudo-marks are produced by distorting a control configuration with a
smooth pressure-like displacement field plus per-minutia noise:

    u(p) = scale * (p - center) * (1 + aniso * cos^2(phi(p) - pressure_dir))

applied radially, Gaussian location jitter, a wrapped-Gaussian direction
perturbation plus the field's local rotation (half its curl,
scale * aniso * sin(2 (phi - pressure_dir)) / 2), and a small type-flip
probability (unknown types never flip).  All parameters zero -> identity.

Under the alternative-source model, a donor is drawn from a population and
the ordered k-subset of their minutiae most similar to the trace is found
with a seed-and-extend search (anchor on every (trace, finger) minutia
pair, rigidly align, greedily assign, then 2-swap/substitute local search
on the kernel score); that subset is then distorted like a control.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .features import (
    DEFAULT_SEG_LEN,
    Configuration,
    Minutia,
    MinutiaType,
    SummaryVector,
    config_arrays,
    summarize,
    summarize_batch,
)
from .kernel import DEFAULT_WEIGHTS, KernelWeights, delta_batch

_TWO_PI = 2.0 * math.pi
_UNKNOWN = int(MinutiaType.UNKNOWN)


@dataclass(frozen=True)
class DistortionPriors:
    """Sampling ranges for distortion parameters (all uniform)."""

    scale_range: tuple[float, float] = (-0.08, 0.08)
    anisotropy_range: tuple[float, float] = (0.0, 0.5)
    jitter_sd_range: tuple[float, float] = (0.5, 3.0)
    angle_jitter_sd_range: tuple[float, float] = (0.02, 0.15)
    type_flip_prob: float = 0.1
    bbox_inflation: float = 0.2  # pressure centers drawn from the bbox grown by this


DEFAULT_PRIORS = DistortionPriors()


@dataclass(frozen=True)
class DistortionParams:
    pressure_center: tuple[float, float]
    pressure_scale: float
    pressure_dir: float
    anisotropy: float
    jitter_sd: float
    angle_jitter_sd: float
    type_flip_prob: float

    def __post_init__(self):
        if self.jitter_sd < 0 or self.angle_jitter_sd < 0:
            raise PreconditionError("jitter standard deviations must be >= 0")
        if self.anisotropy < 0:
            raise PreconditionError("anisotropy must be >= 0")
        if not 0.0 <= self.type_flip_prob <= 1.0:
            raise PreconditionError("type_flip_prob must lie in [0, 1]")


@dataclass(frozen=True)
class Finger:
    """A donor finger: at least three minutiae, all pairwise distinct."""

    id: str
    minutiae: tuple[Minutia, ...]

    def __post_init__(self):
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        if len(self.minutiae) < 3:
            raise PreconditionError("a finger needs at least three minutiae")
        locs = np.array([(m.x, m.y) for m in self.minutiae])
        d = np.linalg.norm(locs[:, None, :] - locs[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        if d.min() <= 0.0:
            raise PreconditionError(f"finger {self.id}: coincident minutiae")

    @property
    def n(self) -> int:
        return len(self.minutiae)


@dataclass(frozen=True)
class Population:
    fingers: tuple[Finger, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fingers", tuple(self.fingers))
        if not self.fingers:
            raise PreconditionError("population must be non-empty")


def _bbox(locs: np.ndarray, inflation: float) -> tuple[np.ndarray, np.ndarray]:
    lo = locs.min(axis=0)
    hi = locs.max(axis=0)
    pad = (hi - lo) * (inflation / 2.0)
    return lo - pad, hi + pad


def sample_distortion_params(
    rng: np.random.Generator,
    config: Configuration,
    priors: DistortionPriors = DEFAULT_PRIORS,
) -> DistortionParams:
    """Draw one parameter set from the priors; the pressure-center prior is
    uniform over the configuration's inflated bounding box."""
    lo, hi = _bbox(config.locations(), priors.bbox_inflation)
    center = lo + rng.random(2) * (hi - lo)
    return DistortionParams(
        pressure_center=(float(center[0]), float(center[1])),
        pressure_scale=float(rng.uniform(*priors.scale_range)),
        anisotropy=float(rng.uniform(*priors.anisotropy_range)),
        pressure_dir=float(rng.uniform(0.0, _TWO_PI)),
        jitter_sd=float(rng.uniform(*priors.jitter_sd_range)),
        angle_jitter_sd=float(rng.uniform(*priors.angle_jitter_sd_range)),
        type_flip_prob=priors.type_flip_prob,
    )


@dataclass(frozen=True)
class ParamArrays:
    """Struct-of-arrays distortion parameters for a batch of draws."""

    center: np.ndarray  # (B, 2)
    scale: np.ndarray  # (B,)
    aniso: np.ndarray  # (B,)
    pdir: np.ndarray  # (B,)
    jitter_sd: np.ndarray  # (B,)
    angle_sd: np.ndarray  # (B,)
    flip_p: np.ndarray  # (B,)


def sample_params_batch(
    rng: np.random.Generator,
    bbox_lo: np.ndarray,
    bbox_hi: np.ndarray,
    priors: DistortionPriors = DEFAULT_PRIORS,
) -> ParamArrays:
    """Draw per-row parameter sets; bbox_lo/hi are (B, 2) inflated boxes."""
    b = bbox_lo.shape[0]
    center = bbox_lo + rng.random((b, 2)) * (bbox_hi - bbox_lo)
    return ParamArrays(
        center=center,
        scale=rng.uniform(*priors.scale_range, size=b),
        aniso=rng.uniform(*priors.anisotropy_range, size=b),
        pdir=rng.uniform(0.0, _TWO_PI, size=b),
        jitter_sd=rng.uniform(*priors.jitter_sd_range, size=b),
        angle_sd=rng.uniform(*priors.angle_jitter_sd_range, size=b),
        flip_p=np.full(b, priors.type_flip_prob),
    )


def distort_batch(
    locs: np.ndarray,
    dirs: np.ndarray,
    types: np.ndarray,
    params: ParamArrays,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply one sampled distortion per row of a (B, k, ...) stack."""
    b, k, _ = locs.shape
    rel = locs - params.center[:, None, :]
    phi = np.arctan2(rel[:, :, 1], rel[:, :, 0])
    gain = 1.0 + params.aniso[:, None] * np.cos(phi - params.pdir[:, None]) ** 2
    disp = params.scale[:, None, None] * rel * gain[:, :, None]
    jitter = rng.standard_normal((b, k, 2)) * params.jitter_sd[:, None, None]
    new_locs = locs + disp + jitter

    rot = 0.5 * params.scale[:, None] * params.aniso[:, None] * np.sin(
        2.0 * (phi - params.pdir[:, None])
    )
    noise = rng.standard_normal((b, k)) * params.angle_sd[:, None]
    new_dirs = (dirs + rot + noise) % _TWO_PI

    flips = (rng.random((b, k)) < params.flip_p[:, None]) & (types != _UNKNOWN)
    new_types = np.where(flips, 1 - types, types).astype(np.int8)
    return new_locs, new_dirs, new_types


def _params_to_arrays(params: DistortionParams) -> ParamArrays:
    return ParamArrays(
        center=np.array([params.pressure_center], dtype=float),
        scale=np.array([params.pressure_scale]),
        aniso=np.array([params.anisotropy]),
        pdir=np.array([params.pressure_dir]),
        jitter_sd=np.array([params.jitter_sd]),
        angle_sd=np.array([params.angle_jitter_sd]),
        flip_p=np.array([params.type_flip_prob]),
    )


def distort(
    config: Configuration, params: DistortionParams, rng: np.random.Generator
) -> Configuration:
    """Distort a configuration; same length, same index order (pairing is
    preserved by construction)."""
    if config.k < 3:
        raise PreconditionError("distortion requires at least three minutiae")
    locs, dirs, types = config_arrays(config)
    nl, nd, nt = distort_batch(
        locs[None], dirs[None], types[None], _params_to_arrays(params), rng
    )
    return Configuration(
        tuple(
            Minutia(x=float(x), y=float(y), direction=float(d), type=MinutiaType(int(t)))
            for (x, y), d, t in zip(nl[0], nd[0], nt[0])
        )
    )


def synth_finger(
    rng: np.random.Generator,
    n: int,
    area: tuple[float, float] = (500.0, 500.0),
    d_min: float = 8.0,
    finger_id: str = "finger",
    dir_wave_amp: float = 0.8,
    dir_noise_sd: float = 0.15,
) -> Finger:
    """Synthesize a finger: n dart-thrown minutiae at least d_min apart,
    directions from a smooth lateral wave plus noise, types fair-coin
    ending/bifurcation."""
    if n < 3:
        raise PreconditionError("a finger needs at least three minutiae")
    w, h = area
    if n * d_min * d_min > w * h:
        raise PreconditionError(
            f"area {w}x{h} too small for {n} minutiae at separation {d_min}"
        )
    pts: list[np.ndarray] = []
    max_attempts = 200 * n
    attempts = 0
    while len(pts) < n:
        attempts += 1
        if attempts > max_attempts:
            raise PreconditionError(
                f"could not place {n} minutiae at separation {d_min} in {w}x{h}"
            )
        cand = rng.random(2) * (w, h)
        if all(np.linalg.norm(cand - p) >= d_min for p in pts):
            pts.append(cand)
    locs = np.array(pts)
    base = rng.uniform(0.0, _TWO_PI)
    dirs = (
        base
        + dir_wave_amp * np.sin(_TWO_PI * locs[:, 0] / w)
        + rng.normal(0.0, dir_noise_sd, size=n)
    ) % _TWO_PI
    types = np.where(rng.random(n) < 0.5, MinutiaType.RIDGE_ENDING, MinutiaType.BIFURCATION)
    return Finger(
        id=finger_id,
        minutiae=tuple(
            Minutia(x=float(p[0]), y=float(p[1]), direction=float(d), type=MinutiaType(int(t)))
            for p, d, t in zip(locs, dirs, types)
        ),
    )


def synth_population(
    seed: int,
    n_fingers: int,
    minutiae_range: tuple[int, int] = (30, 60),
    area: tuple[float, float] = (500.0, 500.0),
    d_min: float = 8.0,
) -> Population:
    """Build a synthetic population of donors, fully determined by seed."""
    if n_fingers < 1:
        raise PreconditionError("population must have at least one finger")
    lo, hi = minutiae_range
    if not 3 <= lo <= hi:
        raise PreconditionError("bad minutiae range")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E11]))
    fingers = []
    for i in range(n_fingers):
        n = int(rng.integers(lo, hi + 1))
        fingers.append(synth_finger(rng, n, area=area, d_min=d_min, finger_id=f"f{i:06d}"))
    return Population(tuple(fingers), seed=seed)


# --- closest-subconfiguration search (AFIS surrogate) -----------------------


@dataclass
class _SearchContext:
    """Precomputed trace-side state shared by repeated searches."""

    summary: SummaryVector
    weights: KernelWeights
    seg_len: float
    trace_locs: np.ndarray
    trace_dirs: np.ndarray


def _score_assignments(
    ctx: _SearchContext, fl: np.ndarray, fd: np.ndarray, ft: np.ndarray, idx: np.ndarray
) -> np.ndarray:
    bs = summarize_batch(fl[idx], fd[idx], ft[idx], ctx.seg_len)
    return delta_batch(ctx.summary, bs, ctx.weights)


def _greedy_anchor_assignments(
    ctx: _SearchContext, fl: np.ndarray, fd: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """For every (trace i, finger j) anchor: rigidly align the trace onto the
    finger and greedily assign the nearest unused finger minutia to each
    trace index.  Returns the (A, k) assignment matrix and the per-anchor
    sum of squared assignment distances (the alignment residual)."""
    tl, td = ctx.trace_locs, ctx.trace_dirs
    k = tl.shape[0]
    n = fl.shape[0]
    i_a = np.repeat(np.arange(k), n)
    j_a = np.tile(np.arange(n), k)
    theta = fd[j_a] - td[i_a]
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    relx = tl[None, :, 0] - tl[i_a, 0][:, None]  # (A, k)
    rely = tl[None, :, 1] - tl[i_a, 1][:, None]
    ax = cos_t[:, None] * relx - sin_t[:, None] * rely + fl[j_a, 0][:, None]
    ay = sin_t[:, None] * relx + cos_t[:, None] * rely + fl[j_a, 1][:, None]
    dist2 = (ax[:, :, None] - fl[None, None, :, 0]) ** 2 + (
        ay[:, :, None] - fl[None, None, :, 1]
    ) ** 2  # (A, k, n)

    a_total = k * n
    rows = np.arange(a_total)
    assigned = np.full((a_total, k), -1, dtype=np.int64)
    penalty = np.zeros((a_total, n))
    residual = np.zeros(a_total)
    assigned[rows, i_a] = j_a
    penalty[rows, j_a] = np.inf
    for t in range(k):
        d = dist2[:, t, :] + penalty
        pick = np.argmin(d, axis=1)
        pick = np.where(i_a == t, assigned[rows, t], pick)
        assigned[:, t] = pick
        residual += dist2[rows, t, pick]
        penalty[rows, pick] = np.inf
    return assigned, residual


# Substitution moves consider only this many nearest unused minutiae per
# position (exchanges with far-away minutiae never improve the score).
_SUBST_NEIGHBORS = 8


def _local_search(
    ctx: _SearchContext,
    fl: np.ndarray,
    fd: np.ndarray,
    ft: np.ndarray,
    cur: np.ndarray,
    cur_score: float,
    max_rounds: int = 100,
) -> tuple[np.ndarray, float]:
    """2-swap hill descent on the kernel score: swap two positions, or
    exchange an assigned minutia with a nearby unused one."""
    k = cur.size
    n = fl.shape[0]
    swap_a, swap_b = np.triu_indices(k, 1)
    dmat = (fl[:, None, 0] - fl[None, :, 0]) ** 2 + (fl[:, None, 1] - fl[None, :, 1]) ** 2
    for _ in range(max_rounds):
        moves = []
        cand = np.tile(cur, (swap_a.size, 1))
        cand[np.arange(swap_a.size), swap_a] = cur[swap_b]
        cand[np.arange(swap_a.size), swap_b] = cur[swap_a]
        moves.append(cand)
        unused = np.setdiff1d(np.arange(n), cur, assume_unique=False)
        if unused.size:
            cand_d = dmat[np.ix_(cur, unused)]  # (k, u)
            if unused.size > _SUBST_NEIGHBORS:
                near = np.argpartition(cand_d, _SUBST_NEIGHBORS - 1, axis=1)
                val = unused[near[:, :_SUBST_NEIGHBORS]]  # (k, S)
            else:
                val = np.broadcast_to(unused, (k, unused.size))
            s = val.shape[1]
            sub = np.tile(cur, (k * s, 1))
            pos = np.repeat(np.arange(k), s)
            sub[np.arange(sub.shape[0]), pos] = val.ravel()
            moves.append(sub)
        all_moves = np.vstack(moves)
        scores = _score_assignments(ctx, fl, fd, ft, all_moves)
        best = int(np.argmin(scores))
        if scores[best] < cur_score - 1e-12:
            cur = all_moves[best]
            cur_score = float(scores[best])
        else:
            break
    return cur, cur_score


# Anchors kernel-scored after the residual prefilter; the rest only compete
# on alignment residual.
_ANCHOR_SHORTLIST = 32


def _best_matching_search(
    ctx: _SearchContext, fl: np.ndarray, fd: np.ndarray, ft: np.ndarray
) -> tuple[np.ndarray, float]:
    assignments, residual = _greedy_anchor_assignments(ctx, fl, fd)
    if assignments.shape[0] > _ANCHOR_SHORTLIST:
        keep = np.argpartition(residual, _ANCHOR_SHORTLIST - 1)[:_ANCHOR_SHORTLIST]
        assignments = assignments[keep]
    scores = _score_assignments(ctx, fl, fd, ft, assignments)
    best = int(np.argmin(scores))
    return _local_search(ctx, fl, fd, ft, assignments[best], float(scores[best]))


def _search_context(
    trace: Configuration, weights: KernelWeights, seg_len: float
) -> _SearchContext:
    return _SearchContext(
        summary=summarize(trace, seg_len),
        weights=weights,
        seg_len=seg_len,
        trace_locs=trace.locations(),
        trace_dirs=trace.directions(),
    )


def best_matching_subconfig(
    finger: Finger,
    trace: Configuration,
    weights: KernelWeights = DEFAULT_WEIGHTS,
    seg_len: float = DEFAULT_SEG_LEN,
) -> Configuration:
    """The ordered k-subset of the finger's minutiae most similar to the
    trace under the kernel, index-aligned to the trace.  Deterministic."""
    config, _ = best_matching_subconfig_scored(finger, trace, weights, seg_len)
    return config


def best_matching_subconfig_scored(
    finger: Finger,
    trace: Configuration,
    weights: KernelWeights = DEFAULT_WEIGHTS,
    seg_len: float = DEFAULT_SEG_LEN,
) -> tuple[Configuration, float]:
    """`best_matching_subconfig` plus the kernel score of the match."""
    if finger.n < trace.k:
        raise PreconditionError(
            f"finger {finger.id} has {finger.n} minutiae, fewer than trace k={trace.k}"
        )
    ctx = _search_context(trace, weights, seg_len)
    fl = np.array([(m.x, m.y) for m in finger.minutiae])
    fd = np.array([m.direction for m in finger.minutiae])
    ft = np.array([int(m.type) for m in finger.minutiae], dtype=np.int8)
    assignment, score = _best_matching_search(ctx, fl, fd, ft)
    return Configuration(tuple(finger.minutiae[i] for i in assignment)), float(score)


def generate_m1(
    control: Configuration,
    rng: np.random.Generator,
    priors: DistortionPriors = DEFAULT_PRIORS,
) -> Configuration:
    """One pseudo-mark under the same-source model: distort the control."""
    return distort(control, sample_distortion_params(rng, control, priors), rng)


def generate_m2(
    pop: Population,
    trace: Configuration,
    weights: KernelWeights,
    rng: np.random.Generator,
    priors: DistortionPriors = DEFAULT_PRIORS,
    seg_len: float = DEFAULT_SEG_LEN,
) -> Configuration:
    """One pseudo-mark under the alternative-source model: uniformly pick a
    donor (among those with enough minutiae), take the best-matching
    subconfiguration, distort it."""
    eligible = [f for f in pop.fingers if f.n >= trace.k]
    if not eligible:
        raise PreconditionError(
            f"no finger in the population has at least k={trace.k} minutiae"
        )
    finger = eligible[int(rng.integers(0, len(eligible)))]
    sub = best_matching_subconfig(finger, trace, weights, seg_len)
    return distort(sub, sample_distortion_params(rng, sub, priors), rng)


# --- population JSONL interchange -------------------------------------------
# One finger per line: {"id": ..., "minutiae": [{x, y, dir, type}, ...]}.
# An optional leading {"_meta": {"seed": ...}} line records the build seed.


def _finger_to_json(finger: Finger) -> dict:
    return {
        "id": finger.id,
        "minutiae": [
            {"x": m.x, "y": m.y, "dir": m.direction, "type": m.type.json_name}
            for m in finger.minutiae
        ],
    }


def _finger_from_json(obj: dict) -> Finger:
    try:
        mins = tuple(
            Minutia(
                x=float(it["x"]),
                y=float(it["y"]),
                direction=float(it["dir"]),
                type=MinutiaType.from_name(it["type"]),
            )
            for it in obj["minutiae"]
        )
        return Finger(id=str(obj["id"]), minutiae=mins)
    except (KeyError, TypeError, ValueError) as exc:
        raise PreconditionError(f"bad finger entry: {exc}") from None


def save_population(pop: Population, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": {"seed": pop.seed}}, sort_keys=True) + "\n")
        for finger in pop.fingers:
            fh.write(json.dumps(_finger_to_json(finger), sort_keys=True) + "\n")


def load_population(path) -> Population:
    fingers = []
    seed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "_meta" in obj:
                seed = int(obj["_meta"].get("seed", 0))
                continue
            fingers.append(_finger_from_json(obj))
    if not fingers:
        raise PreconditionError(f"no fingers found in {path}")
    return Population(tuple(fingers), seed=seed)
