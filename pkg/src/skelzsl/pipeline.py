"""End-to-end experiment: data -> split -> encoder -> features -> heads -> reports.

Every stage persists its artifact under the output directory and records a
fingerprint of the configuration it depends on in ``stages.json``. A later
run reuses an artifact whose fingerprint still matches unless ``force`` is
set. Stage seeds come from ``derive_seed(master_seed, stage_name)``.

Layout of an output directory::

    config.json          resolved configuration
    data/                synthetic dataset (only when generated)
    split.json
    encoder.zstg
    features/{train,test}.ztns + .json
    heads/devise.zdvs, heads/relation.zrel
    reports/<head>_<paradigm>.json, reports/summary.{csv,md}
    stages.json          fingerprints and training-input audit records
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import binio
from .devise import DeviseHyper, load_devise, save_devise, train_devise
from .embeddings import (LabelEmbeddingTable, load_embeddings, pairwise_distances,
                         random_embeddings)
from .encoder import (EncoderConfig, VisualFeatureMatrix, extract_features, load_encoder,
                      save_encoder, train_encoder)
from .errors import ConfigError, ContaminationError, DataError, ZslError
from .evaluate import EvalReport, aggregate_csv, aggregate_markdown, evaluate_gzsl, evaluate_zsl
from .graph import load_topology, validate_sequence
from .numerics import derive_seed
from .relation import RelationHyper, load_relation, save_relation, train_relation
from .splits import furthest_split, load_split, nearest_split, random_split, save_split
from .synthetic import SyntheticSpec, generate_synthetic, load_dataset, write_dataset

log = logging.getLogger(__name__)

STAGES = ("generate", "make-split", "train-encoder", "extract-features",
          "train-devise", "train-relation", "evaluate", "report")
TRAINING_STAGES = ("train-encoder", "train-devise", "train-relation")

# Desk-scale defaults; the full-scale values live in the dataclass defaults.
DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": {"path": None, "synthetic": {"frames": 20}},
    "topology": None,
    "embeddings": {"source": "file", "path": None, "dim": None, "seed": None},
    "split": {"strategy": "nearest", "unseen": 4, "metric": "cosine",
              "diversity_floor": 0.3, "scoring": "nearest", "embeddings": None},
    "encoder": {"block_channels": [8, 16, 32], "temporal_kernel": 3, "frames": 20,
                "epochs": 40, "batch_size": 16, "learning_rate": 0.02, "momentum": 0.9,
                "weight_decay": 1e-4},
    "heads": {
        "devise": {"margin": 0.1, "learning_rate": 0.01, "momentum": 0.9, "batch_size": 32,
                   "epochs": 100, "negative_set": "all_classes"},
        "relation": {"episodes": 20000, "batch_size": 32, "learning_rate": 3e-4,
                     "lr_step_size": 10000, "lr_gamma": 0.5, "init_std": 0.3,
                     "candidate_set": "all_classes"},
    },
    "evaluation": {"ks": [1, 5], "paradigms": ["zsl", "gzsl"]},
    # testing hook: stage name -> sample ids forced into that stage's training input
    "inject_training_samples": {},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "inject_training_samples":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _known(cls, section, name):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - names)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {unknown}")


def resolve_config(raw: dict | None = None, seed: int | None = None,
                   base_dir: Path | None = None) -> dict:
    """Merge ``raw`` over the desk defaults and validate it.

    Relative paths are resolved against ``base_dir`` (the config file's folder).
    """
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw or {}) - set(DEFAULT_CONFIG) - {"output_dir"})
    if unknown:
        raise ConfigError(f"unknown configuration keys {unknown}")
    cfg = _merge(DEFAULT_CONFIG, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")

    def fix(path):
        if path is None:
            return None
        p = Path(path)
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        if not p.exists():
            raise ConfigError(f"path does not exist: {p}")
        return str(p)

    cfg["dataset"]["path"] = fix(cfg["dataset"]["path"])
    cfg["topology"] = fix(cfg["topology"])
    cfg["embeddings"]["path"] = fix(cfg["embeddings"]["path"])
    cfg["split"]["embeddings"] = fix(cfg["split"]["embeddings"])
    try:
        if cfg["dataset"]["path"] is None:
            SyntheticSpec(**cfg["dataset"]["synthetic"])
        _known(EncoderConfig, cfg["encoder"], "encoder")
        EncoderConfig(**cfg["encoder"])
        heads = cfg["heads"]
        if heads.get("devise") is not None:
            DeviseHyper(**heads["devise"])
        if heads.get("relation") is not None:
            RelationHyper(**heads["relation"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg["embeddings"]["source"] not in ("file", "random"):
        raise ConfigError("embeddings.source must be 'file' or 'random'")
    sp = cfg["split"]
    if sp["strategy"] not in ("nearest", "furthest", "random"):
        raise ConfigError(f"unknown split strategy {sp['strategy']!r}")
    if sp["metric"] not in ("cosine", "euclidean") or sp["scoring"] not in ("nearest", "mean"):
        raise ConfigError("split.metric must be cosine|euclidean, split.scoring nearest|mean")
    if not isinstance(sp["unseen"], int) or sp["unseen"] < 1:
        raise ConfigError("split.unseen must be a positive integer")
    ev = cfg["evaluation"]
    if not ev["ks"] or min(ev["ks"]) < 1 or set(ev["paradigms"]) - {"zsl", "gzsl"}:
        raise ConfigError("evaluation.ks must be positive; paradigms zsl|gzsl")
    bad = set(cfg["inject_training_samples"]) - set(TRAINING_STAGES)
    if bad:
        raise ConfigError(f"inject_training_samples: not training stages {sorted(bad)}")
    return cfg


def load_config(path, seed=None) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return resolve_config(raw, seed, path.parent)


# ---------------------------------------------------------------------------

_STAGE_DEPS = {
    "generate": ("dataset",),
    "make-split": ("dataset", "split", "embeddings"),
    "train-encoder": ("dataset", "topology", "split", "encoder"),
    "extract-features": ("dataset", "topology", "split", "encoder"),
    "train-devise": ("dataset", "topology", "split", "encoder", "embeddings", "heads.devise"),
    "train-relation": ("dataset", "topology", "split", "encoder", "embeddings", "heads.relation"),
    "evaluate": ("dataset", "topology", "split", "encoder", "embeddings", "heads", "evaluation"),
}


def _section(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        node = node.get(part) if isinstance(node, dict) else None
    return node


def _split_source(cfg):
    if cfg["split"]["embeddings"] is not None:
        return cfg["split"]["embeddings"]
    emb = cfg["embeddings"]
    if emb["source"] == "file" and emb["path"] is not None:
        return emb["path"]
    data = cfg["dataset"]["path"]
    if data is None or (Path(data) / "embeddings.csv").exists():
        return "dataset"
    return emb


def stage_fingerprint(cfg: dict, stage: str) -> str:
    deps = {d: _section(cfg, d) for d in _STAGE_DEPS.get(stage, ())}
    inject = cfg.get("inject_training_samples") or {}
    payload = {"stage": stage, "seed": cfg["seed"], "deps": deps, "inject": inject}
    if stage == "make-split":
        # the split only depends on the table it is computed from
        payload["deps"].pop("embeddings")
        payload["split_embeddings"] = _split_source(cfg)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


class Experiment:
    """One output directory driven by one resolved configuration."""

    def __init__(self, cfg: dict, out_dir, force: bool = False):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.force = force
        self.out.mkdir(parents=True, exist_ok=True)
        self.stages_path = self.out / "stages.json"
        self.log = (json.loads(self.stages_path.read_text())
                    if self.stages_path.exists() else {})
        self.executed = []
        self._dataset = None
        (self.out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")

    # -- bookkeeping -------------------------------------------------------
    def seed(self, stage):
        return derive_seed(self.cfg["seed"], stage)

    def _fresh(self, stage, artifacts):
        if self.force:
            return False
        entry = self.log.get(stage)
        return (entry is not None and entry.get("fingerprint") == stage_fingerprint(self.cfg, stage)
                and all(Path(a).exists() for a in artifacts))

    def _record(self, stage, **extra):
        self.log[stage] = {"fingerprint": stage_fingerprint(self.cfg, stage), **extra}
        self.stages_path.write_text(json.dumps(self.log, indent=1, sort_keys=True) + "\n")
        self.executed.append(stage)

    def _run(self, stage, artifacts, fn):
        if self._fresh(stage, artifacts):
            log.info("%s: up to date, skipped", stage)
            return False
        log.info("%s: running", stage)
        try:
            fn()
        except ZslError as exc:
            exc.stage = stage
            raise
        return True

    # -- paths -------------------------------------------------------------
    @property
    def data_dir(self) -> Path:
        return Path(self.cfg["dataset"]["path"]) if self.cfg["dataset"]["path"] else self.out / "data"

    def dataset(self):
        if self._dataset is None:
            seqs, labels, topology = load_dataset(self.data_dir, self.cfg["topology"])
            self._dataset = (seqs, labels, topology)
        return self._dataset

    def split(self):
        return load_split(self.out / "split.json", self.dataset()[1])

    def table(self) -> LabelEmbeddingTable:
        labels = self.dataset()[1]
        emb = self.cfg["embeddings"]
        if emb["source"] == "random":
            dim = emb["dim"] or self._file_table(labels).dim
            seed = emb["seed"] if emb["seed"] is not None else self.seed("random-embeddings")
            return random_embeddings(labels, dim, seed)
        return self._file_table(labels).normalize()

    def _file_table(self, labels):
        path = self.cfg["embeddings"]["path"] or self.data_dir / "embeddings.csv"
        if not Path(path).exists():
            raise ConfigError(f"no embedding file at {path}")
        return load_embeddings(path, labels)

    def _split_table(self):
        labels = self.dataset()[1]
        source = _split_source(self.cfg)
        if source == "dataset":
            return load_embeddings(self.data_dir / "embeddings.csv", labels)
        if isinstance(source, str):
            return load_embeddings(source, labels)
        return self.table()

    def _injected(self, stage):
        ids = self.cfg.get("inject_training_samples", {}).get(stage, [])
        if not ids:
            return []
        by_id = {s.sample_id: s for s in self.dataset()[0]}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise ConfigError(f"inject_training_samples: unknown sample ids {missing}")
        return [by_id[i] for i in ids]

    # -- stages ------------------------------------------------------------
    def generate(self):
        if self.cfg["dataset"]["path"] is not None:
            return False

        def go():
            spec = SyntheticSpec(**self.cfg["dataset"]["synthetic"])
            write_dataset(generate_synthetic(spec, self.seed("generate")), self.data_dir)
            self._record("generate")
        return self._run("generate", [self.data_dir / "manifest.json"], go)

    def make_split(self):
        def go():
            seqs, labels, topology = self.dataset()
            sp = self.cfg["split"]
            k = sp["unseen"]
            if sp["strategy"] == "random":
                split = random_split(labels, k, self.seed("make-split"))
            else:
                dist = pairwise_distances(self._split_table(), sp["metric"])
                if sp["strategy"] == "nearest":
                    split = nearest_split(dist, k, sp["diversity_floor"], sp["scoring"], sp["metric"])
                else:
                    split = furthest_split(dist, k, sp["scoring"], sp["metric"])
            save_split(split, labels, self.out / "split.json")
            self._record("make-split")
        return self._run("make-split", [self.out / "split.json"], go)

    def _train_sequences(self, stage):
        seqs, labels, topology = self.dataset()
        split = self.split()
        seen = set(split.seen)
        chosen = [s for s in seqs if s.label_index in seen] + self._injected(stage)
        for s in chosen:
            problems = validate_sequence(s, topology, len(labels))
            if problems:
                raise DataError(f"sample {s.sample_id!r}: {problems[0].message}")
        return chosen, split, topology

    def train_encoder(self):
        def go():
            data, split, topology = self._train_sequences("train-encoder")
            self._record_inputs("train-encoder", data, split)
            cfg = EncoderConfig(num_seen_classes=len(split.seen), **self.cfg["encoder"])
            model = train_encoder(data, cfg, topology, self.seed("train-encoder"), split.seen,
                                  log=log.debug)
            save_encoder(model, self.out / "encoder.zstg")
            self._record("train-encoder", inputs=self.log["train-encoder"]["inputs"])
        return self._run("train-encoder", [self.out / "encoder.zstg"], go)

    def _record_inputs(self, stage, samples_or_labels, split):
        labels = sorted({int(getattr(s, "label_index", s)) for s in samples_or_labels})
        entry = self.log.setdefault(stage, {})
        entry["inputs"] = {"labels": labels, "count": len(samples_or_labels)}
        entry["fingerprint"] = None

    def extract(self):
        paths = [self.out / "features" / f"{n}.{e}" for n in ("train", "test") for e in ("ztns", "json")]

        def go():
            seqs, labels, topology = self.dataset()
            split = self.split()
            model = load_encoder(self.out / "encoder.zstg")
            (self.out / "features").mkdir(exist_ok=True)
            seen = set(split.seen)
            for name, subset in (("train", [s for s in seqs if s.label_index in seen]),
                                 ("test", [s for s in seqs if s.label_index not in seen])):
                save_features(extract_features(model, subset, normalize=True),
                              self.out / "features" / name)
            self._record("extract-features")
        return self._run("extract-features", paths, go)

    def _train_features(self, stage):
        feats = load_features(self.out / "features" / "train")
        extra = self._injected(stage)
        if extra:
            model = load_encoder(self.out / "encoder.zstg")
            more = extract_features(model, extra, normalize=True)
            feats = VisualFeatureMatrix(np.concatenate([feats.features, more.features]),
                                        np.concatenate([feats.label_indices, more.label_indices]),
                                        True, tuple(feats.sample_ids) + tuple(more.sample_ids))
        return feats

    def train_devise(self):
        if self.cfg["heads"].get("devise") is None:
            return False
        path = self.out / "heads" / "devise.zdvs"

        def go():
            split = self.split()
            feats = self._train_features("train-devise")
            self._record_inputs("train-devise", feats.label_indices.tolist(), split)
            hyper = DeviseHyper(**self.cfg["heads"]["devise"])
            proj = train_devise(feats, self.table(), hyper, self.seed("train-devise"), split.seen)
            path.parent.mkdir(exist_ok=True)
            save_devise(proj, path)
            self._record("train-devise", inputs=self.log["train-devise"]["inputs"])
        return self._run("train-devise", [path], go)

    def train_relation(self):
        if self.cfg["heads"].get("relation") is None:
            return False
        path = self.out / "heads" / "relation.zrel"

        def go():
            split = self.split()
            feats = self._train_features("train-relation")
            self._record_inputs("train-relation", feats.label_indices.tolist(), split)
            hyper = RelationHyper(**self.cfg["heads"]["relation"])
            head = train_relation(feats, self.table(), hyper, self.seed("train-relation"),
                                  split.seen)
            path.parent.mkdir(exist_ok=True)
            save_relation(head, path)
            self._record("train-relation", inputs=self.log["train-relation"]["inputs"])
        return self._run("train-relation", [path], go)

    def report_paths(self):
        heads = [h for h in ("devise", "relation") if self.cfg["heads"].get(h) is not None]
        return [self.out / "reports" / f"{h}_{p}.json"
                for h in heads for p in self.cfg["evaluation"]["paradigms"]]

    def evaluate(self):
        def go():
            labels = self.dataset()[1]
            split = self.split()
            table = self.table()
            test = load_features(self.out / "features" / "test")
            (self.out / "reports").mkdir(exist_ok=True)
            for path in self.report_paths():
                head_name, paradigm = path.stem.split("_")
                head = (load_devise(self.out / "heads" / "devise.zdvs") if head_name == "devise"
                        else load_relation(self.out / "heads" / "relation.zrel"))
                fn = evaluate_zsl if paradigm == "zsl" else evaluate_gzsl
                report = fn(head, test, split, table, self.cfg["evaluation"]["ks"], head_name,
                            labels, self.cfg)
                report.save(path)
            self._record("evaluate")
        return self._run("evaluate", self.report_paths(), go)

    def report(self):
        reports = [EvalReport.from_json(json.loads(p.read_text())) for p in self.report_paths()]
        (self.out / "reports" / "summary.csv").write_text(aggregate_csv(reports))
        (self.out / "reports" / "summary.md").write_text(aggregate_markdown(reports))
        return reports

    def audit(self):
        """Check that no training stage consumed unseen-class samples."""
        split = self.split()
        unseen = set(split.unseen)
        for stage in TRAINING_STAGES:
            entry = self.log.get(stage)
            if not entry or "inputs" not in entry:
                continue
            leaked = sorted(unseen & set(entry["inputs"]["labels"]))
            if leaked:
                raise ContaminationError(f"hygiene audit: {stage} consumed unseen classes {leaked}")
        return True

    def run_all(self):
        self.generate()
        self.make_split()
        self.train_encoder()
        self.extract()
        self.train_devise()
        self.train_relation()
        self.audit()
        self.evaluate()
        return self.report()


def run_pipeline(cfg: dict, out_dir, force: bool = False):
    """Run every stage; returns the list of ``EvalReport`` objects."""
    return Experiment(cfg, out_dir, force).run_all()


# ---------------------------------------------------------------------------
# feature files

def save_features(fm: VisualFeatureMatrix, stem) -> None:
    stem = Path(stem)
    binio.write_tensor(stem.with_suffix(".ztns"), fm.features)
    meta = {"labels": fm.label_indices.tolist(), "sample_ids": list(fm.sample_ids),
            "unit_normalized": fm.unit_normalized}
    stem.with_suffix(".json").write_text(json.dumps(meta) + "\n")


def load_features(stem) -> VisualFeatureMatrix:
    stem = Path(stem)
    try:
        meta = json.loads(stem.with_suffix(".json").read_text())
        feats = binio.read_tensor(stem.with_suffix(".ztns"))
    except FileNotFoundError as exc:
        raise ConfigError(f"missing feature file {exc.filename}; run extract-features first") from None
    return VisualFeatureMatrix(feats.reshape(len(meta["labels"]), -1), meta["labels"],
                               meta["unit_normalized"], tuple(meta["sample_ids"]))
