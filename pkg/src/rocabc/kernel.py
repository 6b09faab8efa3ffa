"""Dissimilarity kernel between summarized configurations.

The kernel is a weighted sum of five components:

  1. chi-square-style distance over location cross-distances,
  2. the same form over centroid distances,
  3. the same form over direction-marker cross-distances,
  4. normalized absolute differences of centroid angles (degrees),
  5. square root of the count of index-aligned type matches.

Components 1-3 normalize by the *first* argument's entries, so the kernel
is not symmetric; by convention the first argument is the observed trace.
Component 5 is a similarity, not a dissimilarity; it is kept as stated
because its default weight is zero (a mismatch-count variant is available
behind a flag).  Scores are plain floats, >= 0 under the default weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError, PreconditionError
from .features import BatchSummary, SummaryVector
from .util import worker_count

# Floor (degrees) for the per-angle normalizer of component 4: the raw
# formula divides by the first argument's angle, which may be arbitrarily
# close to zero.
ANGLE_FLOOR_DEG = 1.0


@dataclass(frozen=True)
class KernelWeights:
    c1: float = 1.0
    c2: float = 0.0
    c3: float = 6.5
    c4: float = 0.1
    c5: float = 0.0

    def __post_init__(self):
        for name in ("c1", "c2", "c3", "c4", "c5"):
            if not np.isfinite(getattr(self, name)):
                raise PreconditionError(f"kernel weight {name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2, self.c3, self.c4, self.c5], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "KernelWeights":
        c1, c2, c3, c4, c5 = (float(v) for v in arr)
        return cls(c1, c2, c3, c4, c5)


DEFAULT_WEIGHTS = KernelWeights()


def _chi_sq_form(d: np.ndarray, d_star: np.ndarray, what: str) -> float:
    if d.shape != d_star.shape:
        raise PreconditionError(f"{what}: length mismatch {d.shape} vs {d_star.shape}")
    if np.any(d <= 0):
        raise PreconditionError(f"{what}: zero normalizer (coincident minutiae?)")
    return float(np.sqrt(np.sum((d - d_star) ** 2 / d)))


def delta1(su: SummaryVector, sv: SummaryVector) -> float:
    """Location cross-distance component, normalized by su's distances."""
    return _chi_sq_form(su.cross_dists, sv.cross_dists, "delta1")


def delta2(su: SummaryVector, sv: SummaryVector) -> float:
    """Centroid-distance (spatial spread) component."""
    return _chi_sq_form(su.centroid_dists, sv.centroid_dists, "delta2")


def delta3(su: SummaryVector, sv: SummaryVector) -> float:
    """Direction-marker cross-distance component."""
    return _chi_sq_form(su.dir_marker_cross_dists, sv.dir_marker_cross_dists, "delta3")


def _delta4_terms(theta: np.ndarray, theta_star: np.ndarray, wrapped: bool) -> np.ndarray:
    diff = np.abs(theta - theta_star)
    if wrapped:
        num = np.minimum(diff, 360.0 - diff)
    else:
        num = np.where(diff <= 180.0, diff, (180.0 - diff) % 180.0)
    return num / np.maximum(theta, ANGLE_FLOOR_DEG)


def delta4(su: SummaryVector, sv: SummaryVector, wrapped: bool = False) -> float:
    """Centroid-angle component (degree units).

    The piecewise branch for |theta - theta*| > 180 uses the least
    non-negative residue mod 180; for angles in [0, 360) this coincides
    with the wrapped circular difference, which `wrapped=True` computes
    directly.  Normalizers below ANGLE_FLOOR_DEG are floored rather than
    rejected.
    """
    if su.centroid_angles.shape != sv.centroid_angles.shape:
        raise PreconditionError("delta4: length mismatch")
    return float(np.sum(_delta4_terms(su.centroid_angles, sv.centroid_angles, wrapped)))


def delta5(su: SummaryVector, sv: SummaryVector, mismatch: bool = False) -> float:
    """Type component: sqrt of the count of index-aligned type matches.

    With `mismatch=True` returns sqrt of the mismatch count instead (a
    proper dissimilarity).
    """
    a = np.asarray(su.types)
    b = np.asarray(sv.types)
    if a.shape != b.shape:
        raise PreconditionError("delta5: length mismatch")
    n = np.count_nonzero(a != b) if mismatch else np.count_nonzero(a == b)
    return float(np.sqrt(n))


def delta(su: SummaryVector, sv: SummaryVector, w: KernelWeights = DEFAULT_WEIGHTS) -> float:
    """Weighted kernel score c1*D1 + c2*D2 + c3*D3 + c4*D4 + c5*D5."""
    return (
        w.c1 * delta1(su, sv)
        + w.c2 * delta2(su, sv)
        + w.c3 * delta3(su, sv)
        + w.c4 * delta4(su, sv)
        + w.c5 * delta5(su, sv)
    )


def delta_components_batch(su: SummaryVector, batch: BatchSummary) -> np.ndarray:
    """(B, 5) component matrix comparing `su` against each batch row."""
    d, ds = su.cross_dists, batch.cross_dists
    if np.any(d <= 0):
        raise PreconditionError("delta1: zero normalizer (coincident minutiae?)")
    c = su.centroid_dists
    if np.any(c <= 0):
        raise PreconditionError("delta2: zero normalizer (minutia at centroid?)")
    m = su.dir_marker_cross_dists
    if np.any(m <= 0):
        raise PreconditionError("delta3: zero normalizer (coincident markers?)")
    out = np.empty((len(batch), 5))
    out[:, 0] = np.sqrt(np.sum((d - ds) ** 2 / d, axis=1))
    out[:, 1] = np.sqrt(np.sum((c - batch.centroid_dists) ** 2 / c, axis=1))
    out[:, 2] = np.sqrt(np.sum((m - batch.dir_marker_cross_dists) ** 2 / m, axis=1))
    out[:, 3] = np.sum(
        _delta4_terms(su.centroid_angles, batch.centroid_angles, wrapped=False), axis=1
    )
    out[:, 4] = np.sqrt(np.count_nonzero(su.types == batch.types, axis=1))
    return out


def delta_batch(
    su: SummaryVector, batch: BatchSummary, w: KernelWeights = DEFAULT_WEIGHTS
) -> np.ndarray:
    """(B,) kernel scores comparing `su` against each batch row."""
    return delta_components_batch(su, batch) @ w.as_array()


def summary_abs_diff(su: SummaryVector, batch: BatchSummary) -> np.ndarray:
    """(B, k^2 + 2k) elementwise |summary difference| against each row.

    Numeric blocks are absolute differences; the k type entries are 0/1
    mismatch indicators.  Used as the covariate vector of the logistic
    baseline, where the observed point is the zero vector.
    """
    return np.concatenate(
        [
            np.abs(batch.cross_dists - su.cross_dists),
            np.abs(batch.centroid_dists - su.centroid_dists),
            np.abs(batch.dir_marker_cross_dists - su.dir_marker_cross_dists),
            np.abs(batch.centroid_angles - su.centroid_angles),
            (batch.types != su.types).astype(float),
        ],
        axis=1,
    )


def auc(scores_same, scores_diff) -> float:
    """Mann-Whitney AUC: P(same < diff) + 0.5 P(same = diff).

    1.0 means perfect separation with same-source scores below
    different-source scores.
    """
    same = np.asarray(scores_same, dtype=float)
    diff = np.sort(np.asarray(scores_diff, dtype=float))
    if same.size == 0 or diff.size == 0:
        raise PreconditionError("auc requires non-empty score sets")
    lo = np.searchsorted(diff, same, side="left")
    hi = np.searchsorted(diff, same, side="right")
    greater = diff.size - hi
    return float(np.mean((greater + 0.5 * (hi - lo)) / diff.size))


def mean_auc(training, weights: np.ndarray) -> float:
    """Mean per-case AUC of the weighted kernel over precomputed components."""
    total = 0.0
    for comps_same, comps_diff in training:
        total += auc(comps_same @ weights, comps_diff @ weights)
    return total / len(training)


def optimize_weights(
    training,
    seed: int = 0,
    n_restarts: int = 8,
    threads: int | None = None,
) -> KernelWeights:
    """Maximize mean AUC over training cases by multi-start Nelder-Mead.

    `training` is a sequence of (same_components, diff_components) pairs,
    each an (n, 5) array of precomputed component scores for one case.
    The default weights are always included as a start, so the result is
    never worse than them.  The result is rescaled so c1 = 1 whenever the
    optimum's c1 is positive (AUC is invariant to positive rescaling).
    """
    if not training:
        raise PreconditionError("empty training set")
    for comps_same, comps_diff in training:
        both = np.vstack([comps_same, comps_diff])
        if np.allclose(both, both[0]):
            raise NumericalError("degenerate training case: all component scores equal")

    def loss(w):
        return -mean_auc(training, w)

    rng = np.random.default_rng(seed)
    starts = [DEFAULT_WEIGHTS.as_array()]
    starts.extend(rng.uniform(0.0, 8.0, size=5) for _ in range(n_restarts))

    def solve(x0):
        res = minimize(
            loss, x0, method="Nelder-Mead",
            options={"maxiter": 2000, "xatol": 1e-4, "fatol": 1e-6},
        )
        return res.x, res.fun

    with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
        results = list(pool.map(solve, starts))
    # Start points themselves are candidates too (monotone guarantee).
    results.extend((x0, loss(x0)) for x0 in starts)

    best_x, _ = min(results, key=lambda t: t[1])
    if best_x[0] > 1e-9:
        best_x = best_x / best_x[0]
    return KernelWeights.from_array(best_x)


# --- weights file interchange: {"c": [c1, c2, c3, c4, c5]} ------------------


def weights_to_json(w: KernelWeights) -> dict:
    return {"c": [w.c1, w.c2, w.c3, w.c4, w.c5]}


def weights_from_json(obj: dict) -> KernelWeights:
    try:
        c = obj["c"]
    except (KeyError, TypeError):
        raise PreconditionError("weights JSON must have a 'c' list") from None
    if len(c) != 5:
        raise PreconditionError("weights 'c' must have exactly five entries")
    return KernelWeights.from_array(c)


def load_weights(path) -> KernelWeights:
    with open(path, "r", encoding="utf-8") as fh:
        return weights_from_json(json.load(fh))


def save_weights(w: KernelWeights, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(weights_to_json(w), fh, indent=2, sort_keys=True)
        fh.write("\n")
