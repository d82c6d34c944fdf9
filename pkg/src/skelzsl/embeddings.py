"""Class-label embedding tables: CSV ingestion, random ablation, distances."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParseError, UsageError
from .numerics import make_rng, normalize_rows


@dataclass(frozen=True)
class LabelEmbeddingTable:
    labels: tuple
    embeddings: np.ndarray
    source: str = "loaded"  # "loaded" or "random(<seed>)"
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        emb = np.asarray(self.embeddings, dtype=np.float64)
        object.__setattr__(self, "embeddings", emb)
        if len(set(self.labels)) != len(self.labels):
            raise UsageError("labels must be unique")
        if emb.ndim != 2 or emb.shape[0] != len(self.labels):
            raise UsageError(f"embedding matrix {emb.shape} does not match {len(self.labels)} labels")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def normalize(self) -> "LabelEmbeddingTable":
        return LabelEmbeddingTable(self.labels, normalize_rows(self.embeddings), self.source, True)


def load_embeddings(path, expected_labels=None) -> LabelEmbeddingTable:
    """Read ``label,d0,...,d{D-1}`` CSV (RFC 4180 quoting).

    With ``expected_labels`` the label sets must match exactly and rows are
    reordered to follow ``expected_labels``.
    """
    labels, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if not header or header[0] != "label" or len(header) < 2:
            raise ParseError("header must be label,d0,d1,...", 1)
        width = len(header) - 1
        seen = {}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) - 1 != width:
                raise ParseError(f"ragged row: {len(row) - 1} values, header declares {width}", line)
            label = row[0]
            if label in seen:
                raise ParseError(f"duplicate label {label!r} (first on line {seen[label]})", line)
            seen[label] = line
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                bad = next(c for c in row[1:] if not _is_float(c))
                raise ParseError(f"non-numeric cell {bad!r}", line) from None
            labels.append(label)
            rows.append(values)
    emb = np.asarray(rows, dtype=np.float32).astype(np.float64).reshape(len(rows), width)
    if not np.all(np.isfinite(emb)):
        raise ParseError("non-finite embedding value")
    table = LabelEmbeddingTable(labels, emb, "loaded", False)
    if expected_labels is not None:
        expected = list(expected_labels)
        missing = [l for l in expected if l not in seen]
        if missing:
            raise ParseError(f"missing expected label(s): {', '.join(map(repr, missing))}")
        extra = [l for l in labels if l not in set(expected)]
        if extra:
            raise ParseError(f"unexpected label(s): {', '.join(map(repr, extra))}")
        order = [labels.index(l) for l in expected]
        table = LabelEmbeddingTable(expected, emb[order], "loaded", False)
    return table


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def save_embeddings(table: LabelEmbeddingTable, path) -> None:
    """Write values as shortest float32 round-trip text."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"d{i}" for i in range(table.dim)])
        for label, row in zip(table.labels, table.embeddings.astype(np.float32)):
            w.writerow([label] + [str(x) for x in row])


def random_embeddings(labels, dim: int, seed: int) -> LabelEmbeddingTable:
    """Standard-normal rows, unit-normalized; the ablation stand-in for text embeddings."""
    if dim < 1:
        raise UsageError("dim must be >= 1")
    raw = make_rng(seed).standard_normal((len(labels), dim))
    return LabelEmbeddingTable(labels, normalize_rows(raw), f"random({seed})", True)


def pairwise_distances(table, metric: str = "cosine") -> np.ndarray:
    """C x C distance matrix; cosine distance is ``1 - cos``.

    Accepts a table or a bare C x D array.
    """
    e = table.embeddings if isinstance(table, LabelEmbeddingTable) else np.asarray(table, float)
    if e.shape[0] == 0:
        raise UsageError("empty embedding table")
    if metric == "cosine":
        try:
            u = normalize_rows(e)
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"cosine distance undefined: {exc}") from None
        d = 1.0 - u @ u.T
    elif metric == "euclidean":
        d = np.linalg.norm(e[:, None, :] - e[None, :, :], axis=-1)
    else:
        raise UsageError(f"unknown metric {metric!r}")
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d
