"""ZSL / GZSL evaluation with flat hit@k, plus report tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContaminationError, UsageError
from .numerics import check_finite


def hit_at_k(rankings, truth, k: int) -> float:
    """Fraction of samples whose true class is among the first ``k`` ranked classes.

    ``rankings`` rows may hold class ids or ``(class id, score)`` pairs.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if len(rankings) != len(truth):
        raise UsageError("rankings and truth differ in length")
    if not len(truth):
        raise UsageError("no samples")
    hits = 0
    for ranked, t in zip(rankings, truth):
        if k > len(ranked):
            raise UsageError(f"k={k} exceeds ranking length {len(ranked)}")
        top = [r[0] if isinstance(r, tuple) else r for r in ranked[:k]]
        hits += int(t) in top
    return hits / len(truth)


def rank_all(head, features: np.ndarray, candidates, table) -> list:
    """Ranked candidate ids per feature row (score descending, lower id on ties)."""
    candidates = np.asarray(list(candidates))
    if candidates.size == 0:
        raise UsageError("no candidate classes")
    scores = check_finite(head.rank_matrix(features, candidates, table), "scores")
    out = []
    for row in scores:
        out.append(candidates[np.lexsort((candidates, -row))].tolist())
    return out


@dataclass
class EvalReport:
    head: str
    embedding_source: str
    split: dict
    paradigm: str
    hit_at: dict
    sample_count: int
    config_echo: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"head": self.head, "embedding_source": self.embedding_source,
                "split": self.split, "paradigm": self.paradigm,
                "hit_at": {str(k): v for k, v in sorted(self.hit_at.items())},
                "sample_count": self.sample_count, "config_echo": self.config_echo}

    @classmethod
    def from_json(cls, obj) -> "EvalReport":
        return cls(obj["head"], obj["embedding_source"], obj["split"], obj["paradigm"],
                   {int(k): v for k, v in obj["hit_at"].items()}, obj["sample_count"],
                   obj.get("config_echo", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def _evaluate(head, features, split, table, paradigm, ks, head_name, labels, config_echo):
    bad = sorted(set(features.label_indices.tolist()) - set(split.unseen))
    if bad:
        raise ContaminationError(f"evaluation samples from seen classes {bad}")
    if len(features) == 0:
        raise UsageError("no evaluation samples")
    candidates = split.unseen if paradigm == "zsl" else split.all_classes
    rankings = rank_all(head, features.features, sorted(candidates), table)
    truth = features.label_indices
    # k beyond the candidate count is undefined, so it is left out of the report
    hits = {int(k): hit_at_k(rankings, truth, k) for k in ks if k <= len(candidates)}
    source = "random" if table.source.startswith("random") else "loaded"
    labels = labels if labels is not None else table.labels
    return EvalReport(head_name, source, split.to_json(labels), paradigm, hits,
                      len(truth), config_echo or {})


def evaluate_zsl(head, features, split, table, ks=(1, 5), head_name="", labels=None,
                 config_echo=None) -> EvalReport:
    """Unseen-class samples ranked against unseen candidates only."""
    return _evaluate(head, features, split, table, "zsl", ks, head_name, labels, config_echo)


def evaluate_gzsl(head, features, split, table, ks=(1, 5), head_name="", labels=None,
                  config_echo=None) -> EvalReport:
    """Unseen-class samples ranked against every class."""
    return _evaluate(head, features, split, table, "gzsl", ks, head_name, labels, config_echo)


# ---------------------------------------------------------------------------
# aggregate tables

def aggregate_rows(reports):
    """Rows keyed by (head, embedding source); columns ``<strategy>/<paradigm>/hit@k``."""
    columns, rows = set(), {}
    for r in reports:
        key = (r.head, r.embedding_source)
        for k, acc in r.hit_at.items():
            col = (r.split["strategy"], r.paradigm, k)
            columns.add(col)
            rows.setdefault(key, {})[col] = acc
    strategy_order = {"nearest": 0, "random": 1, "furthest": 2}
    cols = sorted(columns, key=lambda c: (strategy_order.get(c[0], 9), c[0], c[1] != "zsl", c[2]))
    return cols, dict(sorted(rows.items()))


def aggregate_csv(reports) -> str:
    cols, rows = aggregate_rows(reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["head", "embedding_source"] + [f"{s}/{p}/hit@{k}" for s, p, k in cols])
    for (head, src), vals in rows.items():
        w.writerow([head, src] + [repr(vals[c]) if c in vals else "" for c in cols])
    return buf.getvalue()


def aggregate_markdown(reports) -> str:
    cols, rows = aggregate_rows(reports)
    lines = ["| head | embeddings | " + " | ".join(f"{s} {p.upper()} top-{k}" for s, p, k in cols)
             + " |", "|" + "---|" * (len(cols) + 2)]
    for (head, src), vals in rows.items():
        cells = [f"{100 * vals[c]:.2f}" if c in vals else "" for c in cols]
        lines.append(f"| {head} | {src} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
