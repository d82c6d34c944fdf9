"""Swap the label embeddings for random vectors and watch zero-shot accuracy fall to chance.

Uses the command-line pipeline so both runs share data, split and encoder:
the second run only retrains the two heads.

    python demos/02_random_embeddings.py [seed]
"""

import json
import sys
import tempfile
from pathlib import Path

from skelzsl.cli import main

seed = sys.argv[1] if len(sys.argv) > 1 else "0"
root = Path(tempfile.mkdtemp(prefix="skelzsl-ablation-"))
desk = Path(__file__).resolve().parents[1] / "configs" / "desk.json"

random_cfg = json.loads(desk.read_text())
random_cfg["embeddings"] = {"source": "random"}
(root / "random.json").write_text(json.dumps(random_cfg))

print("loaded embeddings")
main(["run", "--config", str(desk), "--out", str(root / "run"), "--seed", seed])
print("\nrandom embeddings (heads retrained, everything else reused)")
main(["-v", "run", "--config", str(root / "random.json"), "--out", str(root / "run"),
      "--seed", seed])
print(f"\noutputs in {root}")
