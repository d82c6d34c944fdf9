"""Optimizers, normalization, seeded randomness and gradient checking.

Tensors are plain ``numpy.ndarray`` objects. Training arithmetic runs in
float64; files store float32.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DegenerateInputError, NumericalError, ShapeError


# ---------------------------------------------------------------------------
# randomness

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams on any platform."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(master_seed: int, name: str) -> int:
    """64-bit component seed from a master seed and a stage name.

    Uses the first 8 bytes of BLAKE2b over ``"<master>:<name>"``, read little-endian.
    """
    digest = hashlib.blake2b(f"{int(master_seed)}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ---------------------------------------------------------------------------
# optimizers

@dataclass(frozen=True)
class SgdState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("hyperparameters must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def sgd_step(params: np.ndarray, grads: np.ndarray, state: SgdState):
    """Momentum SGD: ``v <- m*v + g + wd*p``; ``p <- p - lr*v``."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    velocity = state.velocity if state.velocity is not None else np.zeros_like(params)
    if params.shape != grads.shape or velocity.shape != params.shape:
        raise ShapeError(f"sgd_step: params {params.shape}, grads {grads.shape}, "
                         f"velocity {velocity.shape}")
    velocity = state.momentum * velocity + grads
    if state.weight_decay:
        velocity = velocity + state.weight_decay * params
    return params - state.learning_rate * velocity, replace(state, velocity=velocity)


@dataclass(frozen=True)
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: np.ndarray | None = None
    second_moment: np.ndarray | None = None
    lr_step_size: int = 200000
    lr_gamma: float = 0.5

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if not 0 < self.lr_gamma <= 1:
            raise ValueError("lr_gamma must lie in (0, 1]")
        if self.lr_step_size < 1:
            raise ValueError("lr_step_size must be positive")

    @property
    def effective_lr(self) -> float:
        return self.learning_rate * self.lr_gamma ** (self.step_count // self.lr_step_size)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """Bias-corrected Adam with a step-decayed learning rate.

    The rate applied on this call is ``state.effective_lr``, i.e. the decay
    counts steps already taken.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    m = state.first_moment if state.first_moment is not None else np.zeros_like(params)
    v = state.second_moment if state.second_moment is not None else np.zeros_like(params)
    if not (params.shape == grads.shape == m.shape == v.shape):
        raise ShapeError(f"adam_step: params {params.shape}, grads {grads.shape}, "
                         f"moments {m.shape}/{v.shape}")
    lr = state.effective_lr
    t = state.step_count + 1
    m = state.beta1 * m + (1 - state.beta1) * grads
    v = state.beta2 * v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new, replace(state, step_count=t, first_moment=m, second_moment=v)


@dataclass
class ParamOptimizer:
    """Applies one optimizer state per named parameter array.

    ``kind`` is ``"sgd"`` or ``"adam"``; ``template`` is the state every
    parameter starts from.
    """

    kind: str
    template: SgdState | AdamState
    states: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> dict:
        fn = sgd_step if self.kind == "sgd" else adam_step
        out = {}
        for name, p in params.items():
            state = self.states.get(name, self.template)
            out[name], self.states[name] = fn(p, grads[name], state)
        return out


# ---------------------------------------------------------------------------
# small primitives

def unit_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm > 0 or not np.isfinite(norm):
        raise DegenerateInputError("cannot normalize a zero or non-finite vector")
    return v / norm


def normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(~(norms > 0)):
        bad = np.flatnonzero(~(norms[:, 0] > 0)).tolist()
        raise DegenerateInputError(f"zero-norm rows: {bad}")
    return m / norms


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def check_finite(value, what: str):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite value in {what}")
    return value


# ---------------------------------------------------------------------------
# gradient verification

def finite_difference_check(loss_fn: Callable, params: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between an analytic gradient and central differences.

    ``loss_fn(p)`` must return ``(loss, grad)`` with ``grad`` shaped like ``p``.
    The relative error per coordinate is
    ``|a - n| / max(1e-8, |a| + |n|)``. Non-smooth points (hinge kinks,
    ReLU zeros, ``|x|`` at 0) are not supported inputs: the result there is
    meaningless.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    params = np.array(params, dtype=np.float64)
    loss, analytic = loss_fn(params)
    check_finite(loss, "loss")
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != params.shape:
        raise ShapeError("analytic gradient shape differs from params")
    numeric = np.empty_like(params)
    flat, num_flat = params.reshape(-1), numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = loss_fn(params)[0]
        flat[i] = orig - eps
        lo = loss_fn(params)[0]
        flat[i] = orig
        check_finite(hi, "loss")
        check_finite(lo, "loss")
        num_flat[i] = (hi - lo) / (2 * eps)
    rel = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(rel.max()) if rel.size else 0.0
