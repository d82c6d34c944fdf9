"""Relation-network head: attribute net + learned similarity, trained episodically.

attribute net: ``D -> H_a -> F`` (ReLU after the first layer) maps a label
embedding into visual-feature space. relation net: ``2F -> H_r -> 1`` (ReLU,
then sigmoid) scores the concatenation ``[projected embedding, feature]``.
Training minimizes the mean squared error between scores and one-hot match
targets over every (sample, candidate) pair of an episode.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import binio
from .devise import _check_training_rows, _ranked
from .errors import DataError, ShapeError, UsageError
from .numerics import AdamState, ParamOptimizer, check_finite, make_rng, relu, sigmoid

CHECKPOINT_MAGIC = b"ZREL"
PARAM_NAMES = ("attr.w1", "attr.b1", "attr.w2", "attr.b2",
               "rel.w1", "rel.b1", "rel.w2", "rel.b2")


@dataclass
class RelationHyper:
    episodes: int = 20000
    batch_size: int = 32
    learning_rate: float = 1e-5
    lr_step_size: int = 200000
    lr_gamma: float = 0.5
    attr_hidden: int | None = None  # default 2 * embedding dim
    rel_hidden: int | None = None  # default feature dim
    candidate_set: str = "all_classes"  # or "seen_only"
    init_std: float = 0.01

    def __post_init__(self):
        if self.candidate_set not in ("all_classes", "seen_only"):
            raise UsageError(f"unknown candidate_set {self.candidate_set!r}")
        if self.episodes < 0 or self.batch_size < 1 or self.lr_step_size < 1:
            raise UsageError("episodes, batch_size and lr_step_size must be positive")


@dataclass
class RelationHead:
    params: dict
    hyper: RelationHyper | None = None

    @property
    def embed_dim(self):
        return self.params["attr.w1"].shape[0]

    @property
    def feature_dim(self):
        return self.params["attr.w2"].shape[1]

    def project(self, embeddings):
        p = self.params
        return relu(embeddings @ p["attr.w1"] + p["attr.b1"]) @ p["attr.w2"] + p["attr.b2"]

    def scores(self, features, embeddings) -> np.ndarray:
        """B x C relation scores of every feature against every embedding."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if embeddings.shape[1] != self.embed_dim or features.shape[1] != self.feature_dim:
            raise ShapeError(f"embedding dim {embeddings.shape[1]} / feature dim "
                             f"{features.shape[1]} vs head ({self.embed_dim}, {self.feature_dim})")
        return _forward(self.params, features, embeddings)[0]

    def rank_matrix(self, features, candidates, table):
        return self.scores(features, table.embeddings[list(candidates)])


def init_relation(embed_dim, feature_dim, hyper: RelationHyper, seed: int) -> RelationHead:
    """Gaussian weights (std ``hyper.init_std``), zero biases."""
    ha = hyper.attr_hidden or 2 * embed_dim
    hr = hyper.rel_hidden or feature_dim
    rng = make_rng(seed)
    shapes = {"attr.w1": (embed_dim, ha), "attr.w2": (ha, feature_dim),
              "rel.w1": (2 * feature_dim, hr), "rel.w2": (hr, 1)}
    params = {}
    for name in PARAM_NAMES:
        if name in shapes:
            params[name] = rng.normal(0.0, hyper.init_std, size=shapes[name])
        else:
            width = {"attr.b1": ha, "attr.b2": feature_dim, "rel.b1": hr, "rel.b2": 1}[name]
            params[name] = np.zeros(width)
    return RelationHead(params, hyper)


def _forward(p, features, embeddings):
    f = features.shape[1]
    a_pre = embeddings @ p["attr.w1"] + p["attr.b1"]
    a_hid = relu(a_pre)
    proj = a_hid @ p["attr.w2"] + p["attr.b2"]
    w_top, w_bot = p["rel.w1"][:f], p["rel.w1"][f:]
    # concat(proj_c, feat_b) @ W == proj_c @ W_top + feat_b @ W_bot
    r_pre = (proj @ w_top)[None, :, :] + (features @ w_bot)[:, None, :] + p["rel.b1"]
    r_hid = relu(r_pre)
    logit = r_hid @ p["rel.w2"][:, 0] + p["rel.b2"][0]
    return sigmoid(logit), (a_pre, a_hid, proj, r_pre, r_hid)


def relation_score(head: RelationHead, embedding, feature) -> float:
    """Scalar score for one (embedding, feature) pair, in (0, 1)."""
    embedding = np.asarray(embedding, dtype=np.float64)
    feature = np.asarray(feature, dtype=np.float64)
    if embedding.shape != (head.embed_dim,) or feature.shape != (head.feature_dim,):
        raise ShapeError(f"expected ({head.embed_dim},) and ({head.feature_dim},), got "
                         f"{embedding.shape} and {feature.shape}")
    return float(head.scores(feature, embedding)[0, 0])


@dataclass
class Episode:
    features: np.ndarray  # B x F
    labels: np.ndarray  # B global class ids
    candidates: np.ndarray  # C global class ids
    embeddings: np.ndarray  # C x D rows for ``candidates``
    targets: np.ndarray  # B x C, 1 where candidate == label


def sample_episode(features, table, hyper: RelationHyper, rng, seen=None) -> Episode:
    """Draw ``batch_size`` rows uniformly with replacement; compare against all candidates."""
    if len(features) == 0:
        raise DataError("no features to sample")
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(rng)
    if hyper.candidate_set == "seen_only":
        if seen is None:
            raise UsageError("seen_only candidates need the seen class list")
        candidates = np.array(sorted(int(c) for c in seen))
    else:
        candidates = np.arange(len(table))
    idx = rng.integers(0, len(features), size=hyper.batch_size)
    labels = features.label_indices[idx]
    targets = (labels[:, None] == candidates[None, :]).astype(np.float64)
    return Episode(features.features[idx], labels, candidates,
                   table.embeddings[candidates], targets)


def episode_loss(head, episode: Episode):
    """Mean squared error over all (sample, candidate) pairs and its gradients."""
    p = head.params if isinstance(head, RelationHead) else head
    x, e, y = episode.features, episode.embeddings, episode.targets
    f = x.shape[1]
    s, (a_pre, a_hid, proj, r_pre, r_hid) = _forward(p, x, e)
    n = s.size
    diff = s - y
    loss = float((diff * diff).sum() / n)

    dlogit = 2.0 * diff / n * s * (1.0 - s)  # B x C
    g = {"rel.w2": np.tensordot(r_hid, dlogit, axes=([0, 1], [0, 1]))[:, None],
         "rel.b2": np.array([dlogit.sum()])}
    dr_pre = dlogit[:, :, None] * p["rel.w2"][:, 0] * (r_pre > 0)  # B x C x Hr
    g["rel.b1"] = dr_pre.sum(axis=(0, 1))
    d_by_cand = dr_pre.sum(axis=0)  # C x Hr
    d_by_feat = dr_pre.sum(axis=1)  # B x Hr
    g["rel.w1"] = np.concatenate([proj.T @ d_by_cand, x.T @ d_by_feat])
    dproj = d_by_cand @ p["rel.w1"][:f].T
    g["attr.w2"] = a_hid.T @ dproj
    g["attr.b2"] = dproj.sum(axis=0)
    da_pre = (dproj @ p["attr.w2"].T) * (a_pre > 0)
    g["attr.w1"] = e.T @ da_pre
    g["attr.b1"] = da_pre.sum(axis=0)
    return loss, {k: g[k] for k in PARAM_NAMES}


def train_relation(features, table, hyper: RelationHyper, seed: int, seen,
                   history: list | None = None) -> RelationHead:
    """Adam with step decay over ``hyper.episodes`` sampled episodes.

    ``history`` (if given) receives every episode's loss.
    """
    _check_training_rows(features, seen)
    if len(features) == 0:
        raise DataError("no training features")
    rng = make_rng(seed)
    head = init_relation(table.dim, features.features.shape[1], hyper, int(rng.integers(2**63)))
    opt = ParamOptimizer("adam", AdamState(hyper.learning_rate, lr_step_size=hyper.lr_step_size,
                                           lr_gamma=hyper.lr_gamma))
    params = head.params
    for _ in range(hyper.episodes):
        ep = sample_episode(features, table, hyper, rng, seen)
        loss, grads = episode_loss(params, ep)
        check_finite(loss, "relation loss")
        if history is not None:
            history.append(loss)
        params = opt.step(params, grads)
    return RelationHead(params, hyper)


def predict_relation(head: RelationHead, v, candidates, table):
    """Candidates ranked by relation score descending, lower index first on ties."""
    candidates = list(candidates)
    if not candidates:
        raise UsageError("no candidate classes")
    return _ranked(candidates, head.scores(v, table.embeddings[candidates])[0])


def save_relation(head: RelationHead, path) -> None:
    header = {"embed_dim": head.embed_dim, "feature_dim": head.feature_dim,
              "hyper": asdict(head.hyper) if head.hyper else None}
    binio.write_checkpoint(path, CHECKPOINT_MAGIC, header, {k: head.params[k] for k in PARAM_NAMES})


def load_relation(path) -> RelationHead:
    header, tensors = binio.read_checkpoint(path, CHECKPOINT_MAGIC)
    if tuple(tensors) != PARAM_NAMES:
        raise DataError(f"{path}: unexpected tensor list {list(tensors)}")
    hyper = RelationHyper(**header["hyper"]) if header.get("hyper") else None
    return RelationHead(tensors, hyper)
