"""Body-joint graph, adjacency normalization, and sequence validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TopologyError

# Kinect v2 / NTU RGB+D joint order.
NTU_JOINT_NAMES = (
    "spine_base", "spine_mid", "neck", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
    "spine_shoulder", "handtip_left", "thumb_left", "handtip_right", "thumb_right",
)

# 1-based bone list as published with the dataset; 24 edges forming a tree.
_NTU_BONES_1 = (
    (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
    (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14),
    (16, 15), (17, 1), (18, 17), (19, 18), (20, 19), (22, 23), (23, 8),
    (24, 25), (25, 12),
)
NTU_EDGES = tuple((a - 1, b - 1) for a, b in _NTU_BONES_1)


@dataclass(frozen=True)
class JointTopology:
    joint_count: int
    edges: tuple
    names: tuple | None = None

    def __post_init__(self):
        if self.joint_count < 1:
            raise TopologyError("joint_count must be positive")
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if not (0 <= a < self.joint_count and 0 <= b < self.joint_count):
                raise TopologyError(f"edge ({a}, {b}) out of range for {self.joint_count} joints")
            if a == b:
                raise TopologyError(f"self-loop on joint {a}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if self.names is not None and len(self.names) != self.joint_count:
            raise TopologyError("names length differs from joint_count")
        if not _connected(self.joint_count, self.edges):
            raise TopologyError("joint graph is not connected")

    def to_json(self) -> dict:
        return {"joint_count": self.joint_count,
                "names": list(self.names) if self.names else None,
                "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, obj: dict) -> "JointTopology":
        try:
            names = obj.get("names")
            return cls(int(obj["joint_count"]), tuple(tuple(e) for e in obj["edges"]),
                       tuple(names) if names else None)
        except (KeyError, TypeError, ValueError) as exc:
            raise TopologyError(f"malformed topology: {exc}") from None


def _connected(n, edges) -> bool:
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def ntu_topology() -> JointTopology:
    return JointTopology(25, NTU_EDGES, NTU_JOINT_NAMES)


def chain_topology(n: int) -> JointTopology:
    return JointTopology(n, tuple((i, i + 1) for i in range(n - 1)))


def load_topology(path) -> JointTopology:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TopologyError(f"{path}: {exc}") from None
    return JointTopology.from_json(obj)


def save_topology(topology: JointTopology, path) -> None:
    Path(path).write_text(json.dumps(topology.to_json(), indent=1))


def build_adjacency(topology: JointTopology) -> np.ndarray:
    a = np.zeros((topology.joint_count, topology.joint_count))
    for i, j in topology.edges:
        a[i, j] = a[j, i] = 1.0
    return a


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """Symmetric normalization ``D^-1/2 (A + I) D^-1/2`` with D the degrees of A + I."""
    a = np.asarray(a, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d[:, None] * a_hat * d[None, :]


# ---------------------------------------------------------------------------
# sequences

@dataclass
class SkeletonSequence:
    """``coords`` has dims [persons, frames, joints, 3]; absent persons are zeros."""

    coords: np.ndarray
    label_index: int
    sample_id: str = ""

    @property
    def persons(self):
        return self.coords.shape[0]

    @property
    def frames(self):
        return self.coords.shape[1]

    @property
    def joints(self):
        return self.coords.shape[2]


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "shape", "nonfinite" or "label"
    message: str
    location: tuple = field(default=())


def validate_sequence(seq: SkeletonSequence, topology: JointTopology,
                      num_classes: int | None = None) -> list:
    """Return a list of problems; an empty list means the sample is usable."""
    out = []
    coords = np.asarray(seq.coords)
    if coords.ndim != 4 or coords.shape[-1] != 3:
        out.append(Diagnostic("shape", f"expected [persons, frames, joints, 3], got {coords.shape}"))
        return out
    if coords.shape[0] < 1 or coords.shape[1] < 1:
        out.append(Diagnostic("shape", f"empty persons/frames axis: {coords.shape}"))
    if coords.shape[2] != topology.joint_count:
        out.append(Diagnostic("shape", f"{coords.shape[2]} joints, topology declares "
                                       f"{topology.joint_count}"))
    for p, t, v, ax in zip(*np.nonzero(~np.isfinite(coords))):
        out.append(Diagnostic("nonfinite",
                              f"non-finite coordinate at person {p}, frame {t}, joint {v}, "
                              f"axis {'XYZ'[ax]}", (int(p), int(t), int(v), int(ax))))
    lab = seq.label_index
    if num_classes is not None and not (0 <= lab < num_classes):
        out.append(Diagnostic("label", f"label {lab} outside [0, {num_classes})"))
    return out
