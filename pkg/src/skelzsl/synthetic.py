"""Synthetic skeleton-action benchmark with controllable class similarity.

Each class owns a motion-parameter vector ``theta`` of length ``2 * G`` for
``G`` body parts: the first half sets per-part oscillation amplitude
(``amplitude * exp(0.5 * theta)``), the second half per-part frequency
(``base_frequency * exp(0.35 * theta)``). Classes are grouped into families:
members share a family center and differ by ``family_spread`` Gaussian noise,
so family members move alike. A sample is the class template pose plus
sinusoidal joint trajectories with random per-sample phases, amplitude jitter
and coordinate noise.

With ``correlated=True`` the emitted label embedding of a class is its unit
``theta`` zero-padded to ``embedding_dim``; otherwise rows are independent
Gaussians. Correlated embeddings make language neighbors visual neighbors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import binio
from .embeddings import LabelEmbeddingTable, load_embeddings, save_embeddings
from .errors import DataError, UsageError
from .graph import (JointTopology, SkeletonSequence, chain_topology, load_topology,
                    ntu_topology, save_topology)
from .numerics import make_rng, normalize_rows

# Approximate standing pose in metres, NTU joint order.
NTU_TEMPLATE = np.array([
    [0.00, 0.00, 0.00], [0.00, 0.25, 0.00], [0.00, 0.60, 0.00], [0.00, 0.75, 0.02],
    [-0.20, 0.50, 0.00], [-0.45, 0.50, 0.00], [-0.70, 0.50, 0.00], [-0.78, 0.50, 0.00],
    [0.20, 0.50, 0.00], [0.45, 0.50, 0.00], [0.70, 0.50, 0.00], [0.78, 0.50, 0.00],
    [-0.10, 0.00, 0.00], [-0.10, -0.45, 0.00], [-0.10, -0.85, 0.00], [-0.10, -0.90, 0.10],
    [0.10, 0.00, 0.00], [0.10, -0.45, 0.00], [0.10, -0.85, 0.00], [0.10, -0.90, 0.10],
    [0.00, 0.50, 0.00], [-0.85, 0.50, 0.00], [-0.78, 0.55, 0.02], [0.85, 0.50, 0.00],
    [0.78, 0.55, 0.02],
])

# body part -> (joints, per-joint displacement weight)
NTU_PARTS = (
    ((0, 1, 20, 2, 3), (0.1, 0.3, 0.5, 0.7, 1.0)),
    ((4, 5, 6, 7, 21, 22), (0.3, 0.6, 0.9, 1.0, 1.0, 1.0)),
    ((8, 9, 10, 11, 23, 24), (0.3, 0.6, 0.9, 1.0, 1.0, 1.0)),
    ((12, 13, 14, 15), (0.3, 0.6, 0.9, 1.0)),
    ((16, 17, 18, 19), (0.3, 0.6, 0.9, 1.0)),
)

PAIRED_ACTIONS = (
    ("wear jacket", "take off jacket"), ("sit down", "stand up"),
    ("put on a shoe", "take off a shoe"), ("put on glasses", "take off glasses"),
    ("pick up", "drop"), ("brush teeth", "brush hair"),
    ("put on a hat", "take off a hat"), ("reach into pocket", "check time (from watch)"),
)
SINGLE_ACTIONS = ("kicking something", "hopping (one foot jumping)", "falling",
                  "hand waving", "clapping", "nod head/bow", "jump up", "throw",
                  "cross hands in front (say stop)", "staggering")


@dataclass
class SyntheticSpec:
    class_count: int = 12
    samples_per_class: int | list = 30
    frames: int = 32
    joints: int = 25
    persons: int = 1
    body_parts: int = 5
    embedding_dim: int = 32
    correlated: bool = True
    # family sizes must sum to class_count; None -> pairs for 2/3 of classes, then singletons
    family_sizes: list | None = None
    family_spread: float = 0.25
    amplitude: float = 0.2
    base_frequency: float = 1.5
    amplitude_jitter: float = 0.1
    pose_jitter: float = 0.02
    noise: float = 0.01
    person_offset: float = 1.0

    def __post_init__(self):
        if self.class_count < 2:
            raise UsageError("class_count must be >= 2")
        counts = self.counts()
        if len(counts) != self.class_count or min(counts) < 1:
            raise UsageError("samples_per_class must be positive for every class")
        if min(self.frames, self.joints, self.persons, self.embedding_dim) < 1:
            raise UsageError("frames, joints, persons and embedding_dim must be positive")
        if sum(self.families()) != self.class_count:
            raise UsageError("family_sizes must sum to class_count")
        if self.correlated and self.embedding_dim < 2 * self.parts_count():
            raise UsageError(f"correlated embeddings need embedding_dim >= {2 * self.parts_count()}")

    def counts(self) -> list:
        if isinstance(self.samples_per_class, int):
            return [self.samples_per_class] * self.class_count
        return list(self.samples_per_class)

    def families(self) -> list:
        if self.family_sizes is not None:
            return list(self.family_sizes)
        pairs = self.class_count * 2 // 3 // 2
        return [2] * pairs + [1] * (self.class_count - 2 * pairs)

    def parts_count(self) -> int:
        return len(NTU_PARTS) if self.joints == 25 else min(self.body_parts, self.joints)


@dataclass
class SyntheticClass:
    label: str
    family: int
    theta: np.ndarray
    pose: np.ndarray  # joints x 3


@dataclass
class SyntheticDataset:
    sequences: list
    classes: list  # SyntheticClass, in class-index order
    table: LabelEmbeddingTable
    topology: JointTopology
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)

    @property
    def labels(self) -> list:
        return [c.label for c in self.classes]


def _parts(spec):
    if spec.joints == 25:
        return NTU_PARTS
    g = spec.parts_count()
    chunks = np.array_split(np.arange(spec.joints), g)
    return tuple((tuple(int(j) for j in c), tuple(np.linspace(0.4, 1.0, len(c))))
                 for c in chunks)


def _template(spec):
    if spec.joints == 25:
        return NTU_TEMPLATE.copy()
    t = np.zeros((spec.joints, 3))
    t[:, 1] = np.linspace(0.0, 1.0, spec.joints)
    return t


def _class_names(families):
    names, pairs, singles = [], list(PAIRED_ACTIONS), list(SINGLE_ACTIONS)
    for f, size in enumerate(families):
        if size == 2 and pairs:
            names += list(pairs.pop(0))
        elif size == 1 and singles:
            names.append(singles.pop(0))
        else:
            names += [f"action family {f} variant {m}" for m in range(size)]
    return names


def make_classes(spec: SyntheticSpec, rng) -> list:
    g = spec.parts_count()
    families = spec.families()
    names = _class_names(families)
    template = _template(spec)
    out = []
    for f, size in enumerate(families):
        center = rng.standard_normal(2 * g)
        pose_center = rng.normal(0.0, spec.pose_jitter, size=template.shape)
        for _ in range(size):
            theta = center + spec.family_spread * rng.standard_normal(2 * g)
            pose = template + pose_center + rng.normal(0.0, spec.pose_jitter / 4, template.shape)
            out.append(SyntheticClass(names[len(out)], f, theta, pose))
    return out


def class_embeddings(spec: SyntheticSpec, classes, rng) -> LabelEmbeddingTable:
    labels = [c.label for c in classes]
    if spec.correlated:
        theta = np.stack([c.theta for c in classes])
        emb = np.zeros((len(classes), spec.embedding_dim))
        emb[:, :theta.shape[1]] = theta
    else:
        emb = rng.standard_normal((len(classes), spec.embedding_dim))
    return LabelEmbeddingTable(labels, normalize_rows(emb), "loaded", True)


def render_sample(spec: SyntheticSpec, cls: SyntheticClass, directions, rng) -> np.ndarray:
    """One [persons, frames, joints, 3] realization of a class."""
    parts = _parts(spec)
    g = len(parts)
    amp = spec.amplitude * np.exp(0.5 * cls.theta[:g])
    freq = spec.base_frequency * np.exp(0.35 * cls.theta[g:])
    t = np.arange(spec.frames) / spec.frames
    out = np.zeros((spec.persons, spec.frames, spec.joints, 3))
    for p in range(spec.persons):
        coords = np.broadcast_to(cls.pose, (spec.frames, spec.joints, 3)).copy()
        coords[:, :, 0] += p * spec.person_offset
        for k, (joints, weights) in enumerate(parts):
            phase = rng.uniform(0.0, 2 * np.pi)
            a = amp[k] * (1.0 + spec.amplitude_jitter * rng.standard_normal())
            wave = a * np.sin(2 * np.pi * freq[k] * t + phase)
            for j, w in zip(joints, weights):
                coords[:, j, :] += w * wave[:, None] * directions[k]
        coords += rng.normal(0.0, spec.noise, size=coords.shape)
        out[p] = coords
    return out


def generate_synthetic(spec: SyntheticSpec, seed: int) -> SyntheticDataset:
    rng = make_rng(seed)
    topology = ntu_topology() if spec.joints == 25 else chain_topology(spec.joints)
    classes = make_classes(spec, rng)
    table = class_embeddings(spec, classes, rng)
    directions = normalize_rows(rng.standard_normal((spec.parts_count(), 3)))
    sequences = []
    for c, (cls, n) in enumerate(zip(classes, spec.counts())):
        for i in range(n):
            coords = render_sample(spec, cls, directions, rng)
            sequences.append(SkeletonSequence(coords, c, f"c{c:03d}_s{i:04d}"))
    return SyntheticDataset(sequences, classes, table, topology, spec)


# ---------------------------------------------------------------------------
# on-disk layout

def write_dataset(ds: SyntheticDataset, out_dir) -> Path:
    """Write ``manifest.json``, ``samples/*.ztns``, ``embeddings.csv``, ``topology.json``."""
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in ds.sequences:
        rel = f"samples/{s.sample_id}.ztns"
        binio.write_tensor(out / rel, s.coords)
        entries.append({"id": s.sample_id, "label": ds.labels[s.label_index], "file": rel})
    manifest = {"classes": ds.labels, "samples": entries,
                "families": [c.family for c in ds.classes],
                "generator": asdict(ds.spec)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    save_embeddings(ds.table, out / "embeddings.csv")
    save_topology(ds.topology, out / "topology.json")
    return out


def load_dataset(root, topology_path=None):
    """Return ``(sequences, class labels, topology)`` for a dataset directory."""
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except FileNotFoundError:
        raise DataError(f"{root}: no manifest.json") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{root}/manifest.json: {exc}") from None
    entries = manifest.get("samples", [])
    classes = manifest.get("classes") or sorted({e["label"] for e in entries})
    index = {c: i for i, c in enumerate(classes)}
    sequences = []
    for e in entries:
        if e["label"] not in index:
            raise DataError(f"sample {e['id']!r} has unknown label {e['label']!r}")
        coords = binio.read_tensor(root / e["file"])
        if coords.ndim != 4:
            raise DataError(f"sample {e['id']!r}: expected rank-4 tensor, got {coords.shape}")
        sequences.append(SkeletonSequence(coords, index[e["label"]], e["id"]))
    topo_file = Path(topology_path) if topology_path else root / "topology.json"
    topology = load_topology(topo_file) if topo_file.exists() else ntu_topology()
    return sequences, list(classes), topology


def load_dataset_embeddings(root, labels) -> LabelEmbeddingTable:
    return load_embeddings(Path(root) / "embeddings.csv", labels)
