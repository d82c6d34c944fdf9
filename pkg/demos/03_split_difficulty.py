"""Compare nearest, random and furthest splits over a few seeds.

Each (strategy, seed) pair is a full pipeline run; expect a few minutes.

    python demos/03_split_difficulty.py [n_seeds]
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from skelzsl.evaluate import aggregate_markdown
from skelzsl.pipeline import load_config, run_pipeline

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 2
desk = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
root = Path(tempfile.mkdtemp(prefix="skelzsl-splits-"))

acc = {}
for strategy in ("nearest", "random", "furthest"):
    for seed in range(n_seeds):
        cfg = load_config(desk, seed=seed)
        cfg["split"]["strategy"] = strategy
        reports = run_pipeline(cfg, root / f"{strategy}_s{seed}")
        for r in reports:
            if r.paradigm == "zsl":
                acc.setdefault((r.head, strategy), []).append(r.hit_at[1])
        print(f"seed {seed} {strategy:8s}",
              "  ".join(f"{r.head}/{r.paradigm} {r.hit_at[1]:.3f}" for r in reports))

print("\nmean ZSL hit@1")
for head in ("devise", "relation"):
    row = "  ".join(f"{s} {np.mean(acc[(head, s)]):.3f}" for s in ("nearest", "random", "furthest"))
    print(f"  {head:9s}{row}")
