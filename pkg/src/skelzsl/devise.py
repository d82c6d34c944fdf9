"""Linear visual-to-embedding projection trained with a hinge rank loss.

For a feature ``v`` with true class ``y`` and embedding rows ``t_j``::

    loss = sum_{j in negatives, j != y} max(0, margin - t_y.M v + t_j.M v)

A hinge exactly at zero counts as inactive, so its subgradient is 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import binio
from .errors import ContaminationError, DataError, ShapeError, UsageError
from .numerics import ParamOptimizer, SgdState, check_finite, make_rng

CHECKPOINT_MAGIC = b"ZDVS"


@dataclass
class DeviseHyper:
    margin: float = 0.1
    learning_rate: float = 0.001
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 100
    negative_set: str = "all_classes"  # or "seen_only"
    init: str = "zeros"  # or "gaussian"
    init_std: float = 0.01

    def __post_init__(self):
        if not self.margin > 0:
            raise UsageError("margin must be positive")
        if self.negative_set not in ("all_classes", "seen_only"):
            raise UsageError(f"unknown negative_set {self.negative_set!r}")
        if self.init not in ("zeros", "gaussian"):
            raise UsageError(f"unknown init {self.init!r}")


@dataclass
class DeviseProjection:
    """``matrix`` is D x F; it maps a visual feature into embedding space."""

    matrix: np.ndarray
    hyper: DeviseHyper | None = None

    def scores(self, features: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
        """Dot-product similarity of every feature row against every embedding row."""
        return (np.atleast_2d(features) @ self.matrix.T) @ embeddings.T

    def rank_matrix(self, features, candidates, table):
        return self.scores(features, table.embeddings[list(candidates)])


def _negative_mask(labels, num_classes, negative_set, seen):
    mask = np.ones((len(labels), num_classes), dtype=bool)
    if negative_set == "seen_only":
        if seen is None:
            raise UsageError("seen_only negatives need the seen class list")
        allowed = np.zeros(num_classes, dtype=bool)
        allowed[list(seen)] = True
        mask &= allowed
    mask[np.arange(len(labels)), labels] = False
    return mask


def batch_hinge_loss(matrix, features, labels, embeddings, margin, neg_mask):
    """Mean per-sample hinge rank loss over a batch and its gradient w.r.t. ``matrix``."""
    features = np.atleast_2d(features)
    labels = np.asarray(labels)
    n = len(labels)
    s = (features @ matrix.T) @ embeddings.T
    true = s[np.arange(n), labels][:, None]
    viol = margin - true + s
    active = (viol > 0) & neg_mask
    loss = float(np.where(active, viol, 0.0).sum() / n)
    coef = active.astype(np.float64)
    coef[np.arange(n), labels] -= coef.sum(axis=1)
    grad = (coef @ embeddings).T @ features / n
    return loss, grad


def hinge_rank_loss(projection, v, label, table, hyper: DeviseHyper, seen=None):
    """Per-sample loss and its D x F subgradient."""
    matrix = projection.matrix if isinstance(projection, DeviseProjection) else projection
    if not 0 <= label < len(table):
        raise IndexError(f"label {label} outside table of {len(table)} classes")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (matrix.shape[1],) or table.dim != matrix.shape[0]:
        raise ShapeError(f"M {matrix.shape} vs feature {v.shape} and embedding dim {table.dim}")
    mask = _negative_mask([label], len(table), hyper.negative_set, seen)
    return batch_hinge_loss(matrix, v[None, :], [label], table.embeddings, hyper.margin, mask)


def _check_training_rows(features, seen):
    if seen is None:
        raise UsageError("training needs the seen class list")
    bad = sorted(set(features.label_indices.tolist()) - set(int(c) for c in seen))
    if bad:
        raise ContaminationError(f"head training features contain unseen classes {bad}")


def init_projection(feature_dim, embed_dim, hyper: DeviseHyper, seed: int) -> DeviseProjection:
    if hyper.init == "zeros":
        m = np.zeros((embed_dim, feature_dim))
    else:
        m = make_rng(seed).normal(0.0, hyper.init_std, size=(embed_dim, feature_dim))
    return DeviseProjection(m, hyper)


def full_loss(projection, features, table, hyper, seen=None) -> float:
    mask = _negative_mask(features.label_indices, len(table), hyper.negative_set, seen)
    return batch_hinge_loss(projection.matrix, features.features, features.label_indices,
                            table.embeddings, hyper.margin, mask)[0]


def train_devise(features, table, hyper: DeviseHyper, seed: int, seen,
                 history: list | None = None) -> DeviseProjection:
    """Mini-batch momentum SGD on the mean hinge rank loss.

    ``features`` must only hold seen-class rows. Negatives include unseen
    classes' embeddings unless ``hyper.negative_set == "seen_only"``.
    ``history`` (if given) receives the full-data loss after every epoch.
    """
    _check_training_rows(features, seen)
    if len(features) == 0:
        raise DataError("no training features")
    rng = make_rng(seed)
    proj = init_projection(features.features.shape[1], table.dim, hyper,
                           int(rng.integers(2**63)))
    x, y, e = features.features, features.label_indices, table.embeddings
    mask = _negative_mask(y, len(table), hyper.negative_set, seen)
    opt = ParamOptimizer("sgd", SgdState(hyper.learning_rate, hyper.momentum, 0.0))
    params = {"M": proj.matrix}
    for _ in range(hyper.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grad = batch_hinge_loss(params["M"], x[idx], y[idx], e, hyper.margin, mask[idx])
            check_finite(loss, "hinge rank loss")
            params = opt.step(params, {"M": grad})
        if history is not None:
            history.append(batch_hinge_loss(params["M"], x, y, e, hyper.margin, mask)[0])
    return DeviseProjection(params["M"], hyper)


def _ranked(candidates, scores):
    candidates = np.asarray(candidates)
    order = np.lexsort((candidates, -scores))
    return [(int(candidates[i]), float(scores[i])) for i in order]


def predict_devise(projection: DeviseProjection, v, candidates, table):
    """Candidates ranked by ``t_j . M v`` descending, lower index first on ties."""
    candidates = list(candidates)
    if not candidates:
        raise UsageError("no candidate classes")
    scores = projection.scores(np.asarray(v, dtype=np.float64), table.embeddings[candidates])[0]
    return _ranked(candidates, scores)


def save_devise(projection: DeviseProjection, path) -> None:
    d, f = projection.matrix.shape
    header = {"embed_dim": d, "feature_dim": f,
              "hyper": asdict(projection.hyper) if projection.hyper else None}
    binio.write_checkpoint(path, CHECKPOINT_MAGIC, header, {"M": projection.matrix})


def load_devise(path) -> DeviseProjection:
    header, tensors = binio.read_checkpoint(path, CHECKPOINT_MAGIC)
    hyper = DeviseHyper(**header["hyper"]) if header.get("hyper") else None
    return DeviseProjection(tensors["M"], hyper)
