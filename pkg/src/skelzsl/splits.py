"""Seen/unseen class partitions: nearest, furthest and random strategies.

Both distance-driven strategies rank classes by an isolation score, by
default the distance to the nearest other class (``scoring="nearest"``);
``scoring="mean"`` uses the mean distance to all other classes instead.
Ties always break toward the lower class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InfeasibleSplitError, UsageError
from .numerics import make_rng


@dataclass(frozen=True)
class ClassSplit:
    seen: tuple
    unseen: tuple
    strategy: str
    metric: str | None = None
    seed: int | None = None
    diversity_floor: float | None = None

    def __post_init__(self):
        seen, unseen = tuple(sorted(map(int, self.seen))), tuple(map(int, self.unseen))
        object.__setattr__(self, "seen", seen)
        object.__setattr__(self, "unseen", unseen)
        if not unseen:
            raise UsageError("split needs at least one unseen class")
        if set(seen) & set(unseen):
            raise UsageError(f"seen and unseen overlap: {sorted(set(seen) & set(unseen))}")
        if len(set(unseen)) != len(unseen):
            raise UsageError("duplicate unseen class")

    @property
    def num_classes(self) -> int:
        return len(self.seen) + len(self.unseen)

    @property
    def all_classes(self) -> tuple:
        return tuple(range(self.num_classes))

    def to_json(self, labels) -> dict:
        return {"strategy": self.strategy, "metric": self.metric, "seed": self.seed,
                "diversity_floor": self.diversity_floor,
                "seen": [labels[i] for i in self.seen],
                "unseen": [labels[i] for i in self.unseen]}

    @classmethod
    def from_json(cls, obj: dict, labels) -> "ClassSplit":
        labels = list(labels)
        try:
            seen = [labels.index(l) for l in obj["seen"]]
            unseen = [labels.index(l) for l in obj["unseen"]]
        except ValueError as exc:
            raise DataError(f"split refers to unknown label: {exc}") from None
        split = cls(seen, unseen, obj["strategy"], obj.get("metric"), obj.get("seed"),
                    obj.get("diversity_floor"))
        if split.num_classes != len(labels):
            raise DataError("split does not cover every class")
        return split


def save_split(split: ClassSplit, labels, path) -> None:
    Path(path).write_text(json.dumps(split.to_json(labels), indent=1))


def load_split(path, labels) -> ClassSplit:
    return ClassSplit.from_json(json.loads(Path(path).read_text()), labels)


def _check(dist, k):
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise UsageError("distance matrix must be square")
    c = dist.shape[0]
    if not 0 < k < c:
        raise UsageError(f"need 0 < k < {c}, got {k}")
    return dist, c


def isolation_scores(dist, scoring: str = "nearest") -> np.ndarray:
    dist = np.asarray(dist, dtype=np.float64)
    off = ~np.eye(dist.shape[0], dtype=bool)
    if scoring == "nearest":
        return np.where(off, dist, np.inf).min(axis=1)
    if scoring == "mean":
        return (dist * off).sum(axis=1) / (dist.shape[0] - 1)
    raise UsageError(f"unknown scoring {scoring!r}")


def nearest_split(dist, k: int, diversity_floor: float = 0.0, scoring: str = "nearest",
                  metric: str | None = None) -> ClassSplit:
    """Pick the ``k`` least isolated classes as unseen.

    Candidates are visited in ascending score order; one closer than
    ``diversity_floor`` to an already picked class is skipped.
    """
    dist, c = _check(dist, k)
    scores = isolation_scores(dist, scoring)
    order = np.lexsort((np.arange(c), scores))
    picked = []
    for i in order:
        if all(dist[i, j] >= diversity_floor for j in picked):
            picked.append(int(i))
            if len(picked) == k:
                break
    if len(picked) < k:
        raise InfeasibleSplitError(
            f"only {len(picked)} of {k} classes satisfy diversity floor {diversity_floor}",
            len(picked))
    return ClassSplit(sorted(set(range(c)) - set(picked)), picked, "nearest", metric,
                      None, diversity_floor)


def furthest_split(dist, k: int, scoring: str = "nearest",
                   metric: str | None = None) -> ClassSplit:
    """Pick the ``k`` most isolated classes as unseen."""
    dist, c = _check(dist, k)
    scores = isolation_scores(dist, scoring)
    picked = [int(i) for i in np.lexsort((np.arange(c), -scores))[:k]]
    return ClassSplit(sorted(set(range(c)) - set(picked)), picked, "furthest", metric)


def random_split(labels, k: int, seed: int) -> ClassSplit:
    """Uniform k-subset of classes, without replacement."""
    c = len(labels)
    if not 0 < k < c:
        raise UsageError(f"need 0 < k < {c}, got {k}")
    picked = sorted(int(i) for i in make_rng(seed).choice(c, size=k, replace=False))
    return ClassSplit(sorted(set(range(c)) - set(picked)), picked, "random", None, seed)
