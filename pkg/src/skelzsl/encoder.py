"""Compact spatio-temporal graph convolution encoder with hand-written backprop.

Inputs are first centered over frames (per person, joint and axis) and
multiplied by a frozen per-(joint, axis) scale fitted on the training data;
both steps are linear, so an all-zero sequence stays all-zero. Each block is:
spatial graph conv (``A_norm @ X @ W``) -> temporal conv along frames (zero
padded, length preserving) -> ReLU. After the last block the
activations are averaged over frames, joints and persons, giving the visual
feature; a linear softmax classifier over the seen classes sits on top.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import binio
from .errors import ContaminationError, DataError, ShapeError, UsageError
from .graph import JointTopology, SkeletonSequence, build_adjacency, normalize_adjacency
from .numerics import (ParamOptimizer, SgdState, check_finite, log_softmax, make_rng,
                       normalize_rows, relu)

CHECKPOINT_MAGIC = b"ZSTG"


@dataclass
class EncoderConfig:
    block_channels: tuple = (8, 16, 32)
    temporal_kernel: int = 3
    num_seen_classes: int = 2
    frames: int = 32
    in_channels: int = 3
    epochs: int = 80
    batch_size: int = 48
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def __post_init__(self):
        self.block_channels = tuple(int(c) for c in self.block_channels)
        if not self.block_channels or min(self.block_channels) < 1:
            raise UsageError("block_channels must be a nonempty list of positive integers")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise UsageError("temporal_kernel must be odd and positive")
        if self.num_seen_classes < 1 or self.frames < 1 or self.batch_size < 1 or self.epochs < 0:
            raise UsageError("class count, frames and batch size must be positive")

    @property
    def feature_dim(self) -> int:
        return self.block_channels[-1]

    def to_json(self) -> dict:
        d = asdict(self)
        d["block_channels"] = list(self.block_channels)
        return d


@dataclass
class EncoderModel:
    config: EncoderConfig
    topology: JointTopology
    params: dict
    # global class index behind each classifier output
    classes: tuple = ()
    adjacency: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.adjacency = normalize_adjacency(build_adjacency(self.topology))
        if not self.classes:
            self.classes = tuple(range(self.config.num_seen_classes))
        if len(self.classes) != self.config.num_seen_classes:
            raise ShapeError("classes length differs from num_seen_classes")


def trainable_names(config: EncoderConfig) -> list:
    names = []
    for b in range(len(config.block_channels)):
        names += [f"block{b}.spatial", f"block{b}.temporal"]
    return names + ["classifier.weight", "classifier.bias"]


def param_names(config: EncoderConfig) -> list:
    return ["input.scale"] + trainable_names(config) + ["feature.center"]


def init_params(config: EncoderConfig, topology_joints: int, seed: int) -> dict:
    """Glorot-uniform weights, zero classifier bias."""
    rng = make_rng(seed)
    params = {"input.scale": np.ones((topology_joints, config.in_channels))}
    c_in, k = config.in_channels, config.temporal_kernel

    def glorot(shape, fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    for b, c_out in enumerate(config.block_channels):
        params[f"block{b}.spatial"] = glorot((c_in, c_out), c_in, c_out)
        params[f"block{b}.temporal"] = glorot((c_out, c_out, k), c_out * k, c_out * k)
        c_in = c_out
    f, s = config.feature_dim, config.num_seen_classes
    params["classifier.weight"] = glorot((f, s), f, s)
    params["classifier.bias"] = np.zeros(s)
    params["feature.center"] = np.zeros(f)
    return params


def init_encoder(config: EncoderConfig, topology: JointTopology, seed: int,
                 classes=None) -> EncoderModel:
    return EncoderModel(config, topology, init_params(config, topology.joint_count, seed),
                        tuple(classes) if classes is not None else ())


# ---------------------------------------------------------------------------
# layers

def _joint_mix(a, x):
    """Apply ``a`` along the joint axis of a [..., V, C] array."""
    shape = x.shape
    v, c = shape[-2], shape[-1]
    m = x.reshape(-1, v, c).transpose(1, 0, 2).reshape(v, -1)
    return (a @ m).reshape(a.shape[0], -1, c).transpose(1, 0, 2).reshape(shape[:-2] + (a.shape[0], c))


def _channel_mix(x, w):
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(x.shape[:-1] + (w.shape[1],))


def spatial_graph_conv(x: np.ndarray, a_norm: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out[..., t, :, :] = a_norm @ x[..., t, :, :] @ w``; x is [..., T, V, C_in]."""
    if x.shape[-2] != a_norm.shape[0] or a_norm.shape[0] != a_norm.shape[1]:
        raise ShapeError(f"{x.shape[-2]} joints vs adjacency {a_norm.shape}")
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"{x.shape[-1]} input channels vs weight {w.shape}")
    return _channel_mix(_joint_mix(a_norm, np.ascontiguousarray(x, dtype=np.float64)), w)


def _pad_frames(x, pad):
    widths = [(0, 0)] * x.ndim
    widths[-3] = (pad, pad)
    return np.pad(x, widths)


def _frame_columns(x, k_size):
    """im2col along frames: [..., T, V, C] -> [..., T, V, K*C], tap-major."""
    t = x.shape[-3]
    xpad = _pad_frames(x, (k_size - 1) // 2)
    return np.concatenate([xpad[..., k:k + t, :, :] for k in range(k_size)], axis=-1)


def _kernel_matrix(kernel):
    # row k*C + i holds kernel[i, :, k]
    c, o, k = kernel.shape
    return kernel.transpose(2, 0, 1).reshape(k * c, o)


def temporal_conv(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-joint convolution along frames mixing channels.

    ``out[t, v, o] = sum_{i, k} kernel[i, o, k] * xpad[t + k, v, i]`` with
    ``(K - 1) / 2`` zero frames padded at each end, so T is preserved.
    """
    k_size = kernel.shape[-1]
    if k_size % 2 == 0:
        raise UsageError("temporal kernel size must be odd")
    if x.shape[-1] != kernel.shape[0]:
        raise ShapeError(f"{x.shape[-1]} channels vs kernel {kernel.shape}")
    return _channel_mix(_frame_columns(np.asarray(x, dtype=np.float64), k_size),
                        _kernel_matrix(kernel))


# ---------------------------------------------------------------------------
# forward / backward over a batch [N, P, T, V, C]

def _forward(params, adjacency, x, n_blocks, use_relu=True, keep=False):
    cache = []
    h = (x - x.mean(axis=2, keepdims=True)) * params["input.scale"]
    for b in range(n_blocks):
        w, kern = params[f"block{b}.spatial"], params[f"block{b}.temporal"]
        s = _joint_mix(adjacency, h)
        g = _channel_mix(s, w)
        cols = _frame_columns(g, kern.shape[-1])
        z = _channel_mix(cols, _kernel_matrix(kern))
        if keep:
            cache.append((s, cols, z))
        h = relu(z) if use_relu else z
    feature = h.mean(axis=(1, 2, 3))
    logits = feature @ params["classifier.weight"] + params["classifier.bias"]
    return logits, feature, (cache, h, feature)


def _backward(params, adjacency, saved, dlogits, n_blocks, k_size):
    cache, h_last, feature = saved
    grads = {"classifier.weight": feature.T @ dlogits,
             "classifier.bias": dlogits.sum(axis=0)}
    dfeat = dlogits @ params["classifier.weight"].T
    n, p, t, v, _ = h_last.shape
    dh = np.broadcast_to((dfeat / (p * t * v))[:, None, None, None, :], h_last.shape)
    pad = (k_size - 1) // 2
    for b in reversed(range(n_blocks)):
        s, cols, z = cache[b]
        w, kern = params[f"block{b}.spatial"], params[f"block{b}.temporal"]
        c = kern.shape[0]
        dz2 = (dh * (z > 0)).reshape(-1, z.shape[-1])
        kmat = _kernel_matrix(kern)
        dkmat = cols.reshape(-1, cols.shape[-1]).T @ dz2
        grads[f"block{b}.temporal"] = dkmat.reshape(k_size, c, -1).transpose(1, 2, 0)
        dcols = (dz2 @ kmat.T).reshape(cols.shape)
        dgpad = np.zeros(cols.shape[:-3] + (t + 2 * pad, v, c))
        for k in range(k_size):
            dgpad[..., k:k + t, :, :] += dcols[..., k * c:(k + 1) * c]
        dg = dgpad[..., pad:pad + t, :, :]
        grads[f"block{b}.spatial"] = s.reshape(-1, s.shape[-1]).T @ dg.reshape(-1, c)
        dh = _joint_mix(adjacency.T, _channel_mix(dg, w.T))
    return grads


def batch_loss_and_grads(params, adjacency, x, targets, n_blocks, k_size):
    """Mean softmax cross-entropy over the batch and its gradient.

    ``targets`` are classifier output positions (not global class ids).
    """
    logits, _, saved = _forward(params, adjacency, x, n_blocks, keep=True)
    logp = log_softmax(logits)
    n = x.shape[0]
    loss = -logp[np.arange(n), targets].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), targets] -= 1.0
    dlogits /= n
    return float(loss), _backward(params, adjacency, saved, dlogits, n_blocks, k_size)


def input_scale(x: np.ndarray) -> np.ndarray:
    """Inverse std per (joint, axis) of frame-centered inputs; 1 where motionless."""
    centered = x - x.mean(axis=2, keepdims=True)
    std = centered.std(axis=(0, 1, 2))
    return np.where(std > 1e-8, 1.0 / np.maximum(std, 1e-8), 1.0)


def fit_frames(coords: np.ndarray, frames: int) -> np.ndarray:
    """Zero-pad short sequences at the end; center-crop long ones."""
    t = coords.shape[1]
    if t == frames:
        return coords
    if t < frames:
        out = np.zeros((coords.shape[0], frames) + coords.shape[2:])
        out[:, :t] = coords
        return out
    start = (t - frames) // 2
    return coords[:, start:start + frames]


def stack_sequences(model_or_config, data) -> np.ndarray:
    cfg = model_or_config.config if isinstance(model_or_config, EncoderModel) else model_or_config
    if not data:
        return np.zeros((0, 1, cfg.frames, 1, cfg.in_channels))
    persons = max(s.persons for s in data)
    out = []
    for s in data:
        c = fit_frames(np.asarray(s.coords, dtype=np.float64), cfg.frames)
        if c.shape[0] < persons:
            c = np.concatenate([c, np.zeros((persons - c.shape[0],) + c.shape[1:])])
        out.append(c)
    return np.stack(out)


def encoder_forward(model: EncoderModel, seq: SkeletonSequence, use_relu: bool = True):
    """Return ``(logits, feature)`` for one sequence.

    ``use_relu=False`` disables block nonlinearities (linearity checks only).
    """
    if seq.joints != model.topology.joint_count:
        raise ShapeError(f"sequence has {seq.joints} joints, model expects "
                         f"{model.topology.joint_count}")
    x = stack_sequences(model, [seq])
    logits, feature, _ = _forward(model.params, model.adjacency, x,
                                  len(model.config.block_channels), use_relu=use_relu)
    return logits[0], feature[0]


def block_preactivations(model: EncoderModel, seq: SkeletonSequence) -> np.ndarray:
    """Pre-ReLU output of the first block (used by linearity tests)."""
    x = stack_sequences(model, [seq])
    x = (x - x.mean(axis=2, keepdims=True)) * model.params["input.scale"]
    g = spatial_graph_conv(x, model.adjacency, model.params["block0.spatial"])
    return temporal_conv(g, model.params["block0.temporal"])[0]


# ---------------------------------------------------------------------------
# training and extraction

def train_encoder(data, config: EncoderConfig, topology: JointTopology, seed: int,
                  seen_classes, log=None) -> EncoderModel:
    """Mini-batch momentum SGD on softmax cross-entropy over seen classes.

    Any sample whose label is not in ``seen_classes`` raises
    ``ContaminationError`` before training starts.
    """
    seen = tuple(sorted(int(c) for c in seen_classes))
    if len(seen) != config.num_seen_classes:
        raise UsageError(f"config expects {config.num_seen_classes} seen classes, got {len(seen)}")
    if not data:
        raise DataError("no training sequences")
    bad = sorted({s.label_index for s in data} - set(seen))
    if bad:
        raise ContaminationError(f"encoder training data contains unseen classes {bad}")
    for s in data:
        if s.joints != topology.joint_count:
            raise ShapeError(f"sample {s.sample_id!r} has {s.joints} joints")

    rng = make_rng(seed)
    model = init_encoder(config, topology, int(rng.integers(2**63)), seen)
    pos = {c: i for i, c in enumerate(seen)}
    x_all = stack_sequences(config, data)
    scale = model.params["input.scale"] = input_scale(x_all)
    y_all = np.array([pos[s.label_index] for s in data])
    n_blocks, k_size = len(config.block_channels), config.temporal_kernel
    opt = ParamOptimizer("sgd", SgdState(config.learning_rate, config.momentum,
                                         config.weight_decay))
    params = {k: model.params[k] for k in trainable_names(config)}
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = batch_loss_and_grads({**params, "input.scale": scale}, model.adjacency,
                                               x_all[idx], y_all[idx], n_blocks, k_size)
            check_finite(loss, "encoder loss")
            params = opt.step(params, grads)
            total += loss * len(idx)
        if log is not None:
            log(f"encoder epoch {epoch + 1}/{config.epochs} loss {total / len(data):.4f}")
    model.params.update(params)
    model.params["feature.center"] = _pooled_features(model, x_all).mean(axis=0)
    return model


def predict_classes(model: EncoderModel, data) -> np.ndarray:
    """Global class ids predicted by the seen-class softmax head."""
    logits, _, _ = _forward(model.params, model.adjacency, stack_sequences(model, data),
                            len(model.config.block_channels))
    return np.asarray(model.classes)[logits.argmax(axis=1)]


@dataclass
class VisualFeatureMatrix:
    features: np.ndarray
    label_indices: np.ndarray
    unit_normalized: bool = False
    sample_ids: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.label_indices = np.asarray(self.label_indices, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.label_indices):
            raise ShapeError("features must be N x F with N aligned labels")

    def __len__(self):
        return len(self.label_indices)

    def subset(self, mask) -> "VisualFeatureMatrix":
        ids = tuple(np.asarray(self.sample_ids, dtype=object)[mask]) if self.sample_ids else ()
        return VisualFeatureMatrix(self.features[mask], self.label_indices[mask],
                                   self.unit_normalized, ids)


def _pooled_features(model, x, chunk=64):
    n_blocks = len(model.config.block_channels)
    rows = [_forward(model.params, model.adjacency, x[i:i + chunk], n_blocks)[1]
            for i in range(0, len(x), chunk)]
    return np.concatenate(rows) if rows else np.zeros((0, model.config.feature_dim))


def extract_features(model: EncoderModel, data, normalize: bool = True,
                     center: bool = True) -> VisualFeatureMatrix:
    """Pooled pre-classifier features, one row per input sequence in input order.

    With ``center`` the training-set mean feature (``feature.center``) is
    subtracted first. Pooled ReLU features all share one positive orthant, so
    without centering unit-normalized rows from different classes end up
    nearly parallel.
    """
    for s in data:
        if s.joints != model.topology.joint_count:
            raise ShapeError(f"sample {s.sample_id!r} has {s.joints} joints, model expects "
                             f"{model.topology.joint_count}")
    feats = _pooled_features(model, stack_sequences(model, data))
    if center:
        feats = feats - model.params["feature.center"]
    check_finite(feats, "features")
    if normalize:
        feats = normalize_rows(feats)
    return VisualFeatureMatrix(feats, [s.label_index for s in data], normalize,
                               tuple(s.sample_id for s in data))


# ---------------------------------------------------------------------------
# persistence

def save_encoder(model: EncoderModel, path) -> None:
    header = {"config": model.config.to_json(), "topology": model.topology.to_json(),
              "classes": list(model.classes)}
    binio.write_checkpoint(path, CHECKPOINT_MAGIC, header,
                           {k: model.params[k] for k in param_names(model.config)})


def load_encoder(path) -> EncoderModel:
    header, tensors = binio.read_checkpoint(path, CHECKPOINT_MAGIC)
    config = EncoderConfig(**header["config"])
    topology = JointTopology.from_json(header["topology"])
    if list(tensors) != param_names(config):
        raise DataError(f"{path}: tensor list does not match encoder config")
    return EncoderModel(config, topology, tensors, tuple(header["classes"]))
