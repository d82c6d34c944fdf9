"""Walk through one zero-shot experiment on the synthetic benchmark, stage by stage.

Run from the repository root:  python demos/01_desk_walkthrough.py
Takes roughly half a minute on one core.
"""

import numpy as np

from skelzsl.devise import DeviseHyper, predict_devise, train_devise
from skelzsl.embeddings import pairwise_distances
from skelzsl.encoder import EncoderConfig, extract_features, predict_classes, train_encoder
from skelzsl.evaluate import evaluate_gzsl, evaluate_zsl
from skelzsl.numerics import derive_seed
from skelzsl.relation import RelationHyper, train_relation
from skelzsl.splits import nearest_split
from skelzsl.synthetic import SyntheticSpec, generate_synthetic

SEED = 0

# 12 action classes, paired into families that move alike
ds = generate_synthetic(SyntheticSpec(frames=20), derive_seed(SEED, "generate"))
print(f"{len(ds.sequences)} sequences of shape {ds.sequences[0].coords.shape}")
for c in ds.classes:
    print(f"  family {c.family}: {c.label}")

# hold out the 4 classes whose label embeddings have the closest neighbours
split = nearest_split(pairwise_distances(ds.table), 4, diversity_floor=0.3)
print("\nunseen:", [ds.labels[i] for i in split.unseen])

seen = set(split.seen)
train = [s for s in ds.sequences if s.label_index in seen]
test = [s for s in ds.sequences if s.label_index not in seen]

cfg = EncoderConfig(num_seen_classes=len(split.seen), frames=20, epochs=40, batch_size=16,
                    learning_rate=0.02)
encoder = train_encoder(train, cfg, ds.topology, derive_seed(SEED, "train-encoder"), split.seen)
train_acc = np.mean(predict_classes(encoder, train) == [s.label_index for s in train])
print(f"\nencoder accuracy on seen classes: {train_acc:.2f}")
# the softmax only knows seen classes, so it can never name an unseen one
vanilla = np.mean(predict_classes(encoder, test) == [s.label_index for s in test])
print(f"plain classifier on unseen samples: {vanilla:.2f}")

tr, te = extract_features(encoder, train), extract_features(encoder, test)
table = ds.table.normalize()

devise = train_devise(tr, table, DeviseHyper(learning_rate=0.01, batch_size=32), 1, split.seen)
relation = train_relation(tr, table, RelationHyper(learning_rate=3e-4, lr_step_size=10000,
                                                   init_std=0.3), 2, split.seen)

print()
for name, head in (("devise", devise), ("relation", relation)):
    z = evaluate_zsl(head, te, split, table).hit_at
    g = evaluate_gzsl(head, te, split, table).hit_at
    print(f"{name:9s} ZSL hit@1 {z[1]:.3f}   GZSL hit@1 {g[1]:.3f}  hit@5 {g[5]:.3f}")

sample = test[0]
ranked = predict_devise(devise, te.features[0], split.unseen, table)
print(f"\n{sample.sample_id} is '{ds.labels[sample.label_index]}'; devise ranks:")
for cls, score in ranked:
    print(f"  {score:+.3f}  {ds.labels[cls]}")
