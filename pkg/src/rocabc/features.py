"""Minutia configurations and their rotation/translation-invariant summary.

A configuration is an ordered set of minutiae; the ordering is meaningful:
index i of one configuration is paired with index i of any configuration it
is compared against.  The summary of a k-minutia configuration concatenates

  * C(k,2) cross-distances between minutia locations,
  * k distances from each minutia to the configuration centroid,
  * C(k,2) cross-distances between the tips of fixed-length direction
    segments drawn from each minutia,
  * k angles (degrees, [0, 360)) between the centroid->minutia axis and the
    minutia direction,
  * k minutia types,

for a scalar length of k^2 + 2k.  Every numeric component is invariant
under proper rigid motions (rotation + translation, no reflection).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import PreconditionError

# Default direction-segment length in pixels (about three ridge periods
# at 500 ppi).
DEFAULT_SEG_LEN = 30.0

_TWO_PI = 2.0 * math.pi


class MinutiaType(enum.IntEnum):
    RIDGE_ENDING = 0
    BIFURCATION = 1
    UNKNOWN = 2

    @classmethod
    def from_name(cls, name: str) -> "MinutiaType":
        try:
            return _TYPE_BY_NAME[name]
        except KeyError:
            raise PreconditionError(f"unknown minutia type {name!r}") from None

    @property
    def json_name(self) -> str:
        return _TYPE_NAMES[self]


_TYPE_NAMES = {
    MinutiaType.RIDGE_ENDING: "ending",
    MinutiaType.BIFURCATION: "bifurcation",
    MinutiaType.UNKNOWN: "unknown",
}
_TYPE_BY_NAME = {v: k for k, v in _TYPE_NAMES.items()}


@dataclass(frozen=True)
class Minutia:
    """A single ridge event: location in pixels, direction in radians.

    The direction is normalized into [0, 2pi) at construction; coordinates
    must be finite.
    """

    x: float
    y: float
    direction: float
    type: MinutiaType = MinutiaType.UNKNOWN

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise PreconditionError("minutia coordinates must be finite")
        if not math.isfinite(self.direction):
            raise PreconditionError("minutia direction must be finite")
        object.__setattr__(self, "direction", self.direction % _TWO_PI)
        object.__setattr__(self, "type", MinutiaType(self.type))


@dataclass(frozen=True)
class Configuration:
    """An ordered tuple of minutiae; index order defines the pairing."""

    minutiae: tuple[Minutia, ...]

    def __post_init__(self):
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        if len(self.minutiae) < 1:
            raise PreconditionError("configuration must contain at least one minutia")

    @property
    def k(self) -> int:
        return len(self.minutiae)

    def locations(self) -> np.ndarray:
        return np.array([(m.x, m.y) for m in self.minutiae], dtype=float)

    def directions(self) -> np.ndarray:
        return np.array([m.direction for m in self.minutiae], dtype=float)

    def type_codes(self) -> np.ndarray:
        return np.array([int(m.type) for m in self.minutiae], dtype=np.int8)


@dataclass(frozen=True)
class SummaryVector:
    """The invariant summary of a configuration (scalar length k^2 + 2k)."""

    cross_dists: np.ndarray
    centroid_dists: np.ndarray
    dir_marker_cross_dists: np.ndarray
    centroid_angles: np.ndarray  # degrees in [0, 360)
    types: np.ndarray  # int8 MinutiaType codes

    @property
    def k(self) -> int:
        return len(self.centroid_dists)

    @property
    def scalar_length(self) -> int:
        return (
            len(self.cross_dists)
            + len(self.centroid_dists)
            + len(self.dir_marker_cross_dists)
            + len(self.centroid_angles)
            + len(self.types)
        )


@lru_cache(maxsize=64)
def pair_indices(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j), i < j, in lexicographic order."""
    iu, ju = np.triu_indices(k, 1)
    return iu, ju


def config_arrays(config: Configuration) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(locations (k,2), directions (k,), type codes (k,)) for array pipelines."""
    return config.locations(), config.directions(), config.type_codes()


def centroid(config: Configuration) -> np.ndarray:
    """Arithmetic mean of the minutia coordinates."""
    return config.locations().mean(axis=0)


def cross_distances(config: Configuration) -> np.ndarray:
    """Euclidean distances of all unordered pairs, in (i, j) i<j order."""
    if config.k < 2:
        raise PreconditionError("cross distances need at least two minutiae")
    locs = config.locations()
    iu, ju = pair_indices(config.k)
    return np.linalg.norm(locs[iu] - locs[ju], axis=1)


def direction_markers(config: Configuration, seg_len: float = DEFAULT_SEG_LEN) -> np.ndarray:
    """Tips of fixed-length segments drawn from each minutia along its direction."""
    if seg_len <= 0:
        raise PreconditionError("seg_len must be positive")
    locs = config.locations()
    dirs = config.directions()
    return locs + seg_len * np.stack([np.cos(dirs), np.sin(dirs)], axis=1)


def dir_marker_cross_distances(
    config: Configuration, seg_len: float = DEFAULT_SEG_LEN
) -> np.ndarray:
    """Cross-distances between direction-marker tips, same (i, j) order."""
    if config.k < 2:
        raise PreconditionError("cross distances need at least two minutiae")
    markers = direction_markers(config, seg_len)
    iu, ju = pair_indices(config.k)
    return np.linalg.norm(markers[iu] - markers[ju], axis=1)


def centroid_angles(config: Configuration) -> np.ndarray:
    """Counterclockwise angle (degrees, [0, 360)) from the centroid->minutia
    axis to the minutia direction, per minutia.

    Undefined (and rejected) when a minutia sits on the centroid.
    """
    locs = config.locations()
    rel = locs - locs.mean(axis=0)
    r = np.linalg.norm(rel, axis=1)
    if np.any(r < 1e-9):
        raise PreconditionError("a minutia coincides with the centroid; axis undefined")
    axis = np.arctan2(rel[:, 1], rel[:, 0])
    ang = (config.directions() - axis) % _TWO_PI
    return np.degrees(ang) % 360.0


def summarize(config: Configuration, seg_len: float = DEFAULT_SEG_LEN) -> SummaryVector:
    """Invariant summary of a configuration; requires k >= 3."""
    if config.k < 3:
        raise PreconditionError("summary requires at least three minutiae")
    return SummaryVector(
        cross_dists=cross_distances(config),
        centroid_dists=np.linalg.norm(
            config.locations() - centroid(config), axis=1
        ),
        dir_marker_cross_dists=dir_marker_cross_distances(config, seg_len),
        centroid_angles=centroid_angles(config),
        types=config.type_codes(),
    )


@dataclass(frozen=True)
class BatchSummary:
    """Summaries of B same-k configurations, one row per configuration."""

    cross_dists: np.ndarray  # (B, C(k,2))
    centroid_dists: np.ndarray  # (B, k)
    dir_marker_cross_dists: np.ndarray  # (B, C(k,2))
    centroid_angles: np.ndarray  # (B, k), degrees
    types: np.ndarray  # (B, k) int8

    def __len__(self) -> int:
        return self.cross_dists.shape[0]

    def row(self, i: int) -> SummaryVector:
        return SummaryVector(
            cross_dists=self.cross_dists[i],
            centroid_dists=self.centroid_dists[i],
            dir_marker_cross_dists=self.dir_marker_cross_dists[i],
            centroid_angles=self.centroid_angles[i],
            types=self.types[i],
        )


def summarize_batch(
    locs: np.ndarray,
    dirs: np.ndarray,
    types: np.ndarray,
    seg_len: float = DEFAULT_SEG_LEN,
) -> BatchSummary:
    """Vectorized `summarize` over a (B, k, 2) stack of configurations."""
    if seg_len <= 0:
        raise PreconditionError("seg_len must be positive")
    b, k, _ = locs.shape
    if k < 3:
        raise PreconditionError("summary requires at least three minutiae")
    iu, ju = pair_indices(k)

    # x/y kept separate: avoids (B, pairs, 2) intermediates in the hot path.
    x = np.ascontiguousarray(locs[:, :, 0])
    y = np.ascontiguousarray(locs[:, :, 1])
    dx = x[:, iu] - x[:, ju]
    dy = y[:, iu] - y[:, ju]
    cross = np.sqrt(dx * dx + dy * dy)

    rx = x - x.mean(axis=1, keepdims=True)
    ry = y - y.mean(axis=1, keepdims=True)
    cdist = np.sqrt(rx * rx + ry * ry)
    if cdist.min() < 1e-9:
        raise PreconditionError("a minutia coincides with the centroid; axis undefined")

    mx = x + seg_len * np.cos(dirs)
    my = y + seg_len * np.sin(dirs)
    mdx = mx[:, iu] - mx[:, ju]
    mdy = my[:, iu] - my[:, ju]
    marker_cross = np.sqrt(mdx * mdx + mdy * mdy)

    axis = np.arctan2(ry, rx)
    angles = np.degrees((dirs - axis) % _TWO_PI) % 360.0

    return BatchSummary(
        cross_dists=cross,
        centroid_dists=cdist,
        dir_marker_cross_dists=marker_cross,
        centroid_angles=angles,
        types=types.astype(np.int8, copy=False),
    )


def rigid_transform(
    config: Configuration,
    angle: float,
    offset: tuple[float, float] = (0.0, 0.0),
    about: tuple[float, float] = (0.0, 0.0),
) -> Configuration:
    """Rotate by `angle` (ccw, radians) about `about`, then translate."""
    c, s = math.cos(angle), math.sin(angle)
    ax, ay = about
    dx, dy = offset
    out = []
    for m in config.minutiae:
        rx, ry = m.x - ax, m.y - ay
        out.append(
            Minutia(
                x=ax + c * rx - s * ry + dx,
                y=ay + s * rx + c * ry + dy,
                direction=(m.direction + angle) % _TWO_PI,
                type=m.type,
            )
        )
    return Configuration(tuple(out))


# --- JSON interchange -----------------------------------------------------
# Schema: {"minutiae": [{"x": float, "y": float, "dir": float,
#                        "type": "ending"|"bifurcation"|"unknown"}]}


def config_to_json(config: Configuration) -> dict:
    return {
        "minutiae": [
            {"x": m.x, "y": m.y, "dir": m.direction, "type": m.type.json_name}
            for m in config.minutiae
        ]
    }


def config_from_json(obj: dict) -> Configuration:
    try:
        items = obj["minutiae"]
    except (KeyError, TypeError):
        raise PreconditionError("configuration JSON must have a 'minutiae' list") from None
    if not isinstance(items, list) or not items:
        raise PreconditionError("'minutiae' must be a non-empty list")
    mins = []
    for it in items:
        try:
            mins.append(
                Minutia(
                    x=float(it["x"]),
                    y=float(it["y"]),
                    direction=float(it["dir"]),
                    type=MinutiaType.from_name(it["type"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PreconditionError(f"bad minutia entry {it!r}: {exc}") from None
    return Configuration(tuple(mins))


def load_configuration(path) -> Configuration:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(json.load(fh))


def save_configuration(config: Configuration, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_json(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
